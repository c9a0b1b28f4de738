"""Scan session files: which images to reconstruct and with which calibration.

On disk angles are degrees and paths are relative to the session file; in
memory angles are radians and paths are absolute.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

from .errors import BadAngles, MissingField, MissingFile, ParseError, ValidationError
from .formats import read_json
from .laser import SCAN_DIRECTIONS

ROTATION_CONVENTION = "object turns by +angle about the axis direction; merging applies -angle"
_REQUIRED = ("intrinsics_path", "laser_plane_path", "axis_path", "frames", "threshold", "scan_direction")


@dataclass(frozen=True)
class SessionFrame:
    angle: float  # radians
    image_path: Path


@dataclass(frozen=True)
class ScanSession:
    intrinsics_path: Path
    laser_plane_path: Path
    axis_path: Path
    frames: tuple[SessionFrame, ...]
    threshold: int
    scan_direction: str = "rows"

    def to_dict(self, relative_to=None) -> dict:
        def rel(p: Path) -> str:
            if relative_to is None:
                return str(p)
            try:
                return str(Path(p).relative_to(relative_to))
            except ValueError:
                return str(p)

        return {
            "intrinsics_path": rel(self.intrinsics_path),
            "laser_plane_path": rel(self.laser_plane_path),
            "axis_path": rel(self.axis_path),
            "frames": [{"angle_deg": math.degrees(f.angle), "image_path": rel(f.image_path)} for f in self.frames],
            "threshold": int(self.threshold),
            "scan_direction": self.scan_direction,
            "rotation_convention": ROTATION_CONVENTION,
        }


def _field(d: dict, name: str):
    if name not in d:
        raise MissingField(name)
    return d[name]


def _number(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ParseError(f"{name} must be a finite number, got {value!r}")
    return float(value)


def parse_session(d, base_dir, check_files: bool = True) -> ScanSession:
    """Validate a decoded session document; relative paths resolve against ``base_dir``."""
    if not isinstance(d, dict):
        raise ParseError("session must be a JSON object")
    for name in _REQUIRED:
        _field(d, name)
    base = Path(base_dir)

    def path(value, name: str) -> Path:
        if not isinstance(value, str) or not value:
            raise ParseError(f"{name} must be a non-empty string")
        p = (base / value).resolve()
        if check_files and not p.is_file():
            raise MissingFile(p)
        return p

    raw_frames = d["frames"]
    if not isinstance(raw_frames, list) or not raw_frames:
        raise ValidationError("session needs at least one frame")
    frames = []
    for i, fr in enumerate(raw_frames):
        if not isinstance(fr, dict):
            raise ParseError(f"frames[{i}] must be an object")
        deg = _number(_field(fr, "angle_deg"), f"frames[{i}].angle_deg")
        frames.append(SessionFrame(math.radians(deg), path(_field(fr, "image_path"), f"frames[{i}].image_path")))
    for i in range(1, len(frames)):
        if not frames[i].angle > frames[i - 1].angle:
            raise BadAngles(
                f"frame angles must be strictly increasing; frame {i} does not exceed frame {i - 1}"
            )

    threshold = d["threshold"]
    if isinstance(threshold, bool) or not isinstance(threshold, int) or not 0 < threshold < 255:
        raise ValidationError(f"threshold must be an integer in 1..254, got {threshold!r}")
    direction = d["scan_direction"]
    if direction not in SCAN_DIRECTIONS:
        raise ValidationError(f"scan_direction must be one of {SCAN_DIRECTIONS}, got {direction!r}")
    conv = d.get("rotation_convention", ROTATION_CONVENTION)
    if conv != ROTATION_CONVENTION:
        raise ValidationError(f"unsupported rotation_convention {conv!r}")

    return ScanSession(
        path(d["intrinsics_path"], "intrinsics_path"),
        path(d["laser_plane_path"], "laser_plane_path"),
        path(d["axis_path"], "axis_path"),
        tuple(frames),
        threshold,
        direction,
    )


def load_session(path, check_files: bool = True) -> ScanSession:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(path)
    return parse_session(read_json(path), path.parent, check_files)
