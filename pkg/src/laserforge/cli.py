"""Command-line front end.

Exit status: 0 on success, 1 for invalid input or missing files, 2 for
numerical failures (and for ``evaluate`` / ``pipeline`` clouds above
``--max-rms``). Diagnostics are a single line on standard error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .calibration import CalibrationResult, ChessboardSpec, calibrate_camera
from .camera import CameraIntrinsics
from .errors import MissingFile, NumericalError, ParseError, ValidationError
from .formats import read_json, read_pgm, read_ply, write_file_atomic, write_json, write_pgm, write_ply
from .geometry import Line3, Plane
from .laser import extract_laser_points
from .pipeline import (
    CALIBRATION_BOARD,
    TARGET_BOARD,
    angle_between,
    axis_board_capture,
    axis_from_stripe,
    calibration_views,
    default_surface,
    laser_board_captures,
    laser_plane_from_stripes,
)
from .reconstruction import FrameMeasurements, evaluate_cloud, reconstruct
from .session import ScanSession, SessionFrame, load_session
from .simulator import default_rig, scan_frame, surface_from_dict

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


class CliParser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit status 1 instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


class ThresholdExceeded(Exception):
    pass


def _read_json(path):
    path = Path(path)
    if not path.is_file():
        raise MissingFile(path)
    return read_json(path)


def _read_bytes(path) -> bytes:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(path)
    return path.read_bytes()


def _get(d: dict, key: str, where):
    try:
        return d[key]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{where}: missing field {key!r}") from exc


def _array(d: dict, key: str, where) -> np.ndarray:
    value = _get(d, key, where)
    try:
        return np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where}: field {key!r} is not a numeric array") from exc


def _intrinsics(path) -> CameraIntrinsics:
    d = _read_json(path)
    try:
        return CameraIntrinsics.from_dict(d)
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{path}: not an intrinsics document ({exc})") from exc


def _board(d: dict, where) -> ChessboardSpec:
    try:
        return ChessboardSpec.from_dict(_get(d, "board", where))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ParseError(f"{where}: malformed board description ({exc})") from exc


# ---------------------------------------------------------------------------
# stages


def run_simulate(out, surface="cylinder", radius=30.0, height=80.0, frames=360, seed=0,
                 noise_px=0.0, threshold=128, stripe_sigma_px=1.5) -> dict:
    """Write a complete synthetic data set under ``out``; returns the ground truth."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if frames < 1:
        raise ValidationError("--frames must be >= 1")
    rig = default_rig(noise_px, seed)
    surf = default_surface(rig, surface, radius, height)

    views = calibration_views(rig, CALIBRATION_BOARD)
    write_json(out / "calibration_views.json", {"board": CALIBRATION_BOARD.to_dict(), "views": views.tolist()})

    boards = []
    for i, cap in enumerate(laser_board_captures(rig, TARGET_BOARD)):
        name = f"laser_board_{i}.pgm"
        write_file_atomic(out / name, write_pgm(cap.image(rig, stripe_sigma_px)))
        boards.append({"corners": cap.corners.tolist(), "image_path": name})
    write_json(out / "laser_boards.json", {"board": TARGET_BOARD.to_dict(), "views": boards})

    cap = axis_board_capture(rig, TARGET_BOARD)
    write_file_atomic(out / "axis_board.pgm", write_pgm(cap.image(rig, stripe_sigma_px)))
    write_json(
        out / "axis_board.json",
        {"board": TARGET_BOARD.to_dict(), "corners": cap.corners.tolist(), "image_path": "axis_board.pgm"},
    )

    session_frames = []
    for i in range(frames):
        f = scan_frame(rig, surf, i, frames, stripe_sigma_px)
        path = out / f"frame_{i:04d}.pgm"
        write_file_atomic(path, write_pgm(f.image))
        session_frames.append(SessionFrame(f.angle, path))
    session = ScanSession(
        out / "intrinsics.json", out / "laser_plane.json", out / "axis.json",
        tuple(session_frames), int(threshold), "rows",
    )
    write_json(out / "session.json", session.to_dict(relative_to=out))

    truth = {
        "plane": rig.laser_plane.to_dict(),
        "axis": rig.axis.to_dict(),
        "surface": surf.to_dict(),
        "intrinsics": rig.intrinsics.to_dict(),
    }
    write_json(out / "ground_truth.json", truth)
    return truth


def run_calibrate(views_path, out, estimate_distortion=True) -> CalibrationResult:
    d = _read_json(views_path)
    spec = _board(d, views_path)
    views = _array(d, "views", views_path)
    result = calibrate_camera(spec, views, estimate_distortion=estimate_distortion)
    write_json(out, result.to_dict())
    return result


def _stripe_from(entry: dict, base: Path, threshold: int, where):
    img = read_pgm(_read_bytes(base / _get(entry, "image_path", where)))
    return extract_laser_points(img, threshold)


def run_fit_laser(intrinsics_path, boards_path, out, threshold=128):
    k = _intrinsics(intrinsics_path)
    d = _read_json(boards_path)
    spec = _board(d, boards_path)
    base = Path(boards_path).parent
    views = _get(d, "views", boards_path)
    if not isinstance(views, list):
        raise ParseError(f"{boards_path}: 'views' must be a list")
    corners = [_array(v, "corners", boards_path) for v in views]
    stripes = [_stripe_from(v, base, threshold, boards_path) for v in views]
    result = laser_plane_from_stripes(k, spec, corners, stripes)
    write_json(out, result.to_dict())
    return result


def run_fit_axis(intrinsics_path, board_path, out, threshold=128):
    k = _intrinsics(intrinsics_path)
    d = _read_json(board_path)
    spec = _board(d, board_path)
    corners = _array(d, "corners", board_path)
    stripe = _stripe_from(d, Path(board_path).parent, threshold, board_path)
    result = axis_from_stripe(k, spec, corners, stripe)
    write_json(out, result.to_dict())
    return result


def _plane(path) -> Plane:
    d = _read_json(path)
    return Plane(_array(d, "normal", path), float(_array(d, "offset", path)))


def _line(path) -> Line3:
    d = _read_json(path)
    return Line3(_array(d, "point", path), _array(d, "direction", path))


def run_reconstruct(session_path, out, fmt="ascii"):
    session = load_session(session_path)
    k = _intrinsics(session.intrinsics_path)
    plane = _plane(session.laser_plane_path)
    axis = _line(session.axis_path)
    measurements = []
    for i, f in enumerate(session.frames):
        img = read_pgm(_read_bytes(f.image_path))
        measurements.append(FrameMeasurements(i, f.angle, extract_laser_points(img, session.threshold, session.scan_direction)))
    cloud, _ = reconstruct(measurements, k, plane, axis)
    write_file_atomic(out, write_ply(cloud, fmt))
    return cloud


def run_evaluate(cloud_path, truth_path):
    cloud = read_ply(_read_bytes(cloud_path))
    truth = _read_json(truth_path)
    try:
        surface = surface_from_dict(_get(truth, "surface", truth_path))
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{truth_path}: malformed surface ({exc})") from exc
    a = _get(truth, "axis", truth_path)
    axis = Line3(_array(a, "point", truth_path), _array(a, "direction", truth_path))
    return evaluate_cloud(cloud, surface, axis)


# ---------------------------------------------------------------------------
# subcommands


def _check_rms(rms: float, max_rms):
    if max_rms is not None and rms > max_rms:
        raise ThresholdExceeded(f"cloud rms {rms:.6f} mm exceeds --max-rms {max_rms}")


def cmd_simulate(args):
    run_simulate(args.out, args.surface, args.radius, args.height, args.frames, args.seed, args.noise_px, args.threshold)
    print(f"wrote {args.frames} frames to {args.out}")


def cmd_calibrate(args):
    r = run_calibrate(args.views, args.out, not args.no_distortion)
    k = r.intrinsics
    print(f"fx {k.fx:.6f} fy {k.fy:.6f} cx {k.cx:.6f} cy {k.cy:.6f} k1 {k.k1:.6g} k2 {k.k2:.6g} rms_px {r.rms_reprojection:.6f}")


def cmd_fit_laser(args):
    r = run_fit_laser(args.intrinsics, args.boards, args.out, args.threshold)
    print("laser plane normal {} offset {:.6f} mm rms {:.6f} mm".format(
        np.array2string(r.plane.normal, precision=6), r.plane.offset, r.rms))


def cmd_fit_axis(args):
    r = run_fit_axis(args.intrinsics, args.board, args.out, args.threshold)
    print("axis point {} direction {} rms {:.6f} mm".format(
        np.array2string(r.axis.point, precision=4), np.array2string(r.axis.direction, precision=6), r.rms))


def cmd_reconstruct(args):
    cloud = run_reconstruct(args.session, args.out, args.format)
    print(f"wrote {len(cloud)} points to {args.out}")


def cmd_evaluate(args):
    e = run_evaluate(args.cloud, args.truth)
    print(f"points {e.n}")
    print(f"rms_mm {e.rms_mm:.6f}")
    print(f"max_mm {e.max_mm:.6f}")
    _check_rms(e.rms_mm, args.max_rms)


def cmd_pipeline(args):
    out = Path(args.out)
    truth = run_simulate(out, args.surface, args.radius, args.height, args.frames, args.seed, args.noise_px, args.threshold)
    calib = run_calibrate(out / "calibration_views.json", out / "intrinsics.json")
    laser = run_fit_laser(out / "intrinsics.json", out / "laser_boards.json", out / "laser_plane.json", args.threshold)
    axis = run_fit_axis(out / "intrinsics.json", out / "axis_board.json", out / "axis.json", args.threshold)
    cloud_path = out / "cloud.ply"
    run_reconstruct(out / "session.json", cloud_path, args.format)
    err = run_evaluate(cloud_path, out / "ground_truth.json")

    k, kt = calib.intrinsics, CameraIntrinsics.from_dict(truth["intrinsics"])
    k_err = max(abs(getattr(k, n) - getattr(kt, n)) / abs(getattr(kt, n)) for n in ("fx", "fy", "cx", "cy"))
    plane_t = Plane(truth["plane"]["normal"], truth["plane"]["offset"])
    axis_t = Line3(truth["axis"]["point"], truth["axis"]["direction"])
    rows = [
        ("intrinsics max rel error", f"{k_err:.3e}"),
        ("reprojection rms px", f"{calib.rms_reprojection:.4f}"),
        ("laser plane angle deg", f"{angle_between(laser.plane.normal, plane_t.normal):.5f}"),
        ("laser plane offset mm", f"{abs(laser.plane.offset - plane_t.offset):.5f}"),
        ("axis angle deg", f"{angle_between(axis.axis.direction, axis_t.direction):.5f}"),
        ("axis anchor mm", f"{np.linalg.norm(axis.axis.point - axis_t.point):.5f}"),
        ("cloud points", f"{err.n}"),
        ("cloud rms mm", f"{err.rms_mm:.5f}"),
        ("cloud max mm", f"{err.max_mm:.5f}"),
    ]
    width = max(len(name) for name, _ in rows)
    for name, value in rows:
        print(f"{name:<{width}}  {value}")
    _check_rms(err.rms_mm, args.max_rms)


def _add_scene_flags(p):
    p.add_argument("--surface", choices=("cylinder", "sphere"), default="cylinder")
    p.add_argument("--radius", type=float, default=30.0, help="surface radius, mm")
    p.add_argument("--height", type=float, default=80.0, help="cylinder height, mm")
    p.add_argument("--frames", type=int, default=360, help="frames per revolution")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-px", type=float, default=0.0,
                   help="corner noise in px; image noise is 4 grey levels per px")
    p.add_argument("--threshold", type=int, default=128, help="stripe intensity threshold")


def build_parser() -> argparse.ArgumentParser:
    parser = CliParser(prog="laserforge", description="Line-laser turntable scanner toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a synthetic scan data set")
    _add_scene_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="camera intrinsics from chessboard corners")
    p.add_argument("--views", required=True, help="corner observations JSON")
    p.add_argument("--out", required=True, help="intrinsics JSON to write")
    p.add_argument("--no-distortion", action="store_true", help="keep k1 = k2 = 0")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("fit-laser", help="laser plane from stripes on two or more boards")
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--boards", required=True, help="board corners + stripe images JSON")
    p.add_argument("--threshold", type=int, default=128)
    p.add_argument("--out", required=True, help="laser plane JSON to write")
    p.set_defaults(func=cmd_fit_laser)

    p = sub.add_parser("fit-axis", help="turntable axis from a marker stripe on a board")
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--board", required=True, help="board corners + marker image JSON")
    p.add_argument("--threshold", type=int, default=128)
    p.add_argument("--out", required=True, help="axis JSON to write")
    p.set_defaults(func=cmd_fit_axis)

    p = sub.add_parser("reconstruct", help="triangulate and merge a scan session into PLY")
    p.add_argument("--session", required=True)
    p.add_argument("--out", required=True, help="PLY file to write")
    p.add_argument("--format", choices=("ascii", "binary"), default="ascii")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="cloud distance to the ground-truth surface")
    p.add_argument("--cloud", required=True)
    p.add_argument("--truth", required=True, help="ground_truth.json")
    p.add_argument("--max-rms", type=float, default=None, help="exit 2 when rms exceeds this, mm")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", help="simulate, calibrate and reconstruct end to end")
    _add_scene_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--format", choices=("ascii", "binary"), default="ascii")
    p.add_argument("--max-rms", type=float, default=None)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_INVALID
    try:
        args.func(args)
    except ThresholdExceeded as exc:
        print(f"laserforge {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except NumericalError as exc:
        print(f"laserforge {args.command}: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValidationError as exc:
        print(f"laserforge {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        where = exc.filename if exc.filename is not None else ""
        print(f"laserforge {args.command}: cannot access {where}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
