import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from laserforge.calibration import ChessboardSpec  # noqa: E402
from laserforge.camera import CameraIntrinsics  # noqa: E402
from laserforge.simulator import RigConfig, calibration_poses, default_rig, render_corner_observations  # noqa: E402

K800 = CameraIntrinsics(800.0, 800.0, 320.0, 240.0)
BOARD = ChessboardSpec(8, 6, 3.0)


def rig_with(k: CameraIntrinsics, noise: float = 0.0, seed: int = 0) -> RigConfig:
    base = default_rig(noise, seed)
    return RigConfig(k, base.laser_plane, base.axis, base.image_size, noise, seed)


def synth_views(k: CameraIntrinsics, n_views: int = 20, noise: float = 0.0, seed: int = 0, spec=BOARD):
    rig = rig_with(k, noise, seed)
    poses = calibration_poses(rig, spec, n_views, seed=seed)
    return poses, render_corner_observations(rig, spec, poses)


@pytest.fixture(scope="session")
def k800():
    return K800


@pytest.fixture(scope="session")
def board():
    return BOARD


@pytest.fixture(scope="session")
def rig():
    return default_rig()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria report: one PASS/FAIL line each, repeated in the terminal summary
CRITERIA_LINES: list[str] = []


def report_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
    CRITERIA_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES):
            terminalreporter.write_line(line)
