import json
import subprocess
import sys

import numpy as np
import pytest

from laserforge.calibration import ChessboardSpec
from laserforge.cli import EXIT_INVALID, EXIT_NUMERICAL, EXIT_OK, main
from laserforge.formats import read_ply, write_json, write_ply
from laserforge.geometry import Line3
from laserforge.reconstruction import PointCloud
from laserforge.simulator import Cylinder

AXIS = Line3([0, 0, 400], [0, 1, 0])


def truth_file(tmp_path):
    truth = {
        "plane": {"normal": [1.0, 0.0, 0.0], "offset": 0.0},
        "axis": AXIS.to_dict(),
        "surface": Cylinder(30, 80).to_dict(),
        "intrinsics": {"fx": 800.0, "fy": 800.0, "cx": 320.0, "cy": 240.0, "k1": 0.0, "k2": 0.0},
    }
    write_json(tmp_path / "truth.json", truth)
    return tmp_path / "truth.json"


def ring_cloud(tmp_path, radius):
    t = np.linspace(0, 2 * np.pi, 50, endpoint=False)
    pts = np.column_stack([radius * np.cos(t), np.linspace(-30, 30, 50), 400 + radius * np.sin(t)])
    path = tmp_path / "cloud.ply"
    path.write_bytes(write_ply(PointCloud(pts)))
    return path


class TestEvaluate:
    def test_prints_stats(self, tmp_path, capsys):
        code = main(["evaluate", "--cloud", str(ring_cloud(tmp_path, 30.2)), "--truth", str(truth_file(tmp_path))])
        out = capsys.readouterr().out.splitlines()
        assert code == EXIT_OK
        assert out[0] == "points 50"
        assert abs(float(out[1].split()[1]) - 0.2) < 1e-4

    def test_over_threshold_exits_2(self, tmp_path, capsys):
        args = ["evaluate", "--cloud", str(ring_cloud(tmp_path, 30.2)), "--truth", str(truth_file(tmp_path))]
        assert main(args + ["--max-rms", "0.15"]) == EXIT_NUMERICAL
        assert "0.15" in capsys.readouterr().err
        assert main(args + ["--max-rms", "0.25"]) == EXIT_OK

    def test_empty_cloud(self, tmp_path):
        p = tmp_path / "empty.ply"
        p.write_bytes(write_ply(PointCloud(np.empty((0, 3)))))
        assert main(["evaluate", "--cloud", str(p), "--truth", str(truth_file(tmp_path))]) == EXIT_INVALID


class TestErrors:
    def test_missing_session(self, tmp_path, capsys):
        missing = tmp_path / "nowhere" / "session.json"
        code = main(["reconstruct", "--session", str(missing), "--out", str(tmp_path / "c.ply")])
        err = capsys.readouterr().err
        assert code == EXIT_INVALID
        assert str(missing) in err and len(err.strip().splitlines()) == 1
        assert not (tmp_path / "c.ply").exists()

    def test_unknown_subcommand(self, capsys):
        assert main(["explode"]) == EXIT_INVALID

    def test_missing_flag(self, capsys):
        assert main(["calibrate", "--views", "x.json"]) == EXIT_INVALID

    def test_malformed_json(self, tmp_path, capsys):
        p = tmp_path / "views.json"
        p.write_text("{not json")
        assert main(["calibrate", "--views", str(p), "--out", str(tmp_path / "k.json")]) == EXIT_INVALID
        assert "Traceback" not in capsys.readouterr().err

    def test_wrong_shapes(self, tmp_path, capsys):
        p = tmp_path / "views.json"
        p.write_text(json.dumps({"board": ChessboardSpec().to_dict(), "views": [[1, 2, 3]]}))
        assert main(["calibrate", "--views", str(p), "--out", str(tmp_path / "k.json")]) == EXIT_INVALID

    def test_degenerate_views_numerical(self, tmp_path, capsys):
        # every view identical: the conic constraints collapse
        grid = np.stack(np.meshgrid(np.arange(8) * 30.0 + 100, np.arange(6) * 30.0 + 100), -1).reshape(-1, 2)
        p = tmp_path / "views.json"
        p.write_text(json.dumps({"board": ChessboardSpec().to_dict(), "views": [grid.tolist()] * 3}))
        assert main(["calibrate", "--views", str(p), "--out", str(tmp_path / "k.json")]) == EXIT_NUMERICAL


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = main(["pipeline", "--frames", "12", "--seed", "3", "--threshold", "60", "--out", str(out)])
    return code, out


class TestPipeline:
    def test_exit_and_outputs(self, small_run):
        code, out = small_run
        assert code == EXIT_OK
        for name in ("cloud.ply", "session.json", "ground_truth.json", "intrinsics.json", "laser_plane.json",
                     "axis.json", "frame_0000.pgm", "frame_0011.pgm", "calibration_views.json"):
            assert (out / name).is_file(), name
        assert not list(out.glob(".*.tmp"))

    def test_cloud_accuracy(self, small_run, capsys):
        _, out = small_run
        assert main(["evaluate", "--cloud", str(out / "cloud.ply"), "--truth", str(out / "ground_truth.json"),
                     "--max-rms", "0.15"]) == EXIT_OK
        assert len(read_ply((out / "cloud.ply").read_bytes())) > 1000

    def test_stages_rerun_match(self, small_run, tmp_path):
        _, out = small_run
        assert main(["reconstruct", "--session", str(out / "session.json"), "--out", str(tmp_path / "again.ply")]) == 0
        assert (tmp_path / "again.ply").read_bytes() == (out / "cloud.ply").read_bytes()

    def test_binary_format(self, small_run, tmp_path):
        _, out = small_run
        assert main(["reconstruct", "--session", str(out / "session.json"), "--out", str(tmp_path / "b.ply"),
                     "--format", "binary"]) == 0
        a = read_ply((out / "cloud.ply").read_bytes()).points
        b = read_ply((tmp_path / "b.ply").read_bytes()).points
        assert np.abs(a - b).max() < 1e-6 * 500

    def test_session_lists_frames(self, small_run):
        _, out = small_run
        doc = json.loads((out / "session.json").read_text())
        assert [f["angle_deg"] for f in doc["frames"]] == pytest.approx([30.0 * i for i in range(12)])
        assert doc["threshold"] == 60


def test_console_script_help():
    r = subprocess.run([sys.executable, "-m", "laserforge.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "pipeline" in r.stdout
