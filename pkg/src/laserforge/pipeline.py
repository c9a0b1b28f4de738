"""Stage glue shared by the CLI and the closed-loop checks.

Each stage takes already-loaded data (corner lists, images or stripes) so
the same code runs from files or straight off the simulator.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .calibration import (
    CalibrationResult,
    ChessboardSpec,
    board_object_points,
    calibrate_camera,
    estimate_homography,
    extrinsics_from_homography,
)
from .camera import CameraIntrinsics, undistort_pixels
from .errors import ValidationError
from .geometry import Plane
from .laser import (
    AxisCalibration,
    PlaneCalibration,
    StripeExtraction,
    calibrate_laser_plane,
    calibrate_rotation_axis,
    extract_laser_points,
    lift_stripe_to_plane,
)
from .reconstruction import (
    CloudError,
    FrameMeasurements,
    PointCloud,
    evaluate_cloud,
    reconstruct,
    undistort_stripe,
)
from .simulator import (
    BoardSurface,
    Cylinder,
    Sphere,
    RigConfig,
    analytic_stripe,
    axis_board_pose,
    calibration_poses,
    default_rig,
    laser_board_poses,
    render_corner_observations,
    render_laser_image,
    simulate_scan,
    surface_laser_curve,
    turntable_center_offset,
)

CALIBRATION_BOARD = ChessboardSpec(8, 6, 3.0)
TARGET_BOARD = ChessboardSpec(8, 6, 20.0)


def board_plane(k: CameraIntrinsics, spec: ChessboardSpec, corners) -> Plane:
    """Camera-frame plane of a board from its observed corners."""
    obj = board_object_points(spec)
    ideal = undistort_pixels(k, corners)
    pose = extrinsics_from_homography(k, estimate_homography(obj[:, :2], ideal))
    n = pose.rotation[:, 2]
    return Plane(n, float(n @ pose.translation))


def laser_plane_from_stripes(k: CameraIntrinsics, spec: ChessboardSpec, corner_views, stripes) -> PlaneCalibration:
    lifted = []
    for corners, stripe in zip(corner_views, stripes):
        ref = board_plane(k, spec, corners)
        lifted.append(lift_stripe_to_plane(undistort_stripe(stripe, k), k, ref))
    return calibrate_laser_plane(lifted)


def axis_from_stripe(k: CameraIntrinsics, spec: ChessboardSpec, corners, stripe: StripeExtraction) -> AxisCalibration:
    ref = board_plane(k, spec, corners)
    return calibrate_rotation_axis(lift_stripe_to_plane(undistort_stripe(stripe, k), k, ref))


@dataclass
class BoardCapture:
    """Simulated target-board shot: detected corners plus the stripe it carries."""

    corners: np.ndarray
    curve: np.ndarray
    noise_key: tuple

    def image(self, rig: RigConfig, stripe_sigma_px: float = 1.5) -> np.ndarray:
        return render_laser_image(rig, self.curve, stripe_sigma_px, rng=np.random.default_rng(self.noise_key))


def laser_board_captures(rig: RigConfig, spec: ChessboardSpec = TARGET_BOARD) -> list[BoardCapture]:
    poses = laser_board_poses(rig, spec)
    corners = render_corner_observations(rig, spec, poses, rng=np.random.default_rng((rig.seed, 2)))
    out = []
    for i, pose in enumerate(poses):
        curve = surface_laser_curve(BoardSurface(spec, pose), rig.laser_plane, rig.axis, 2000)
        out.append(BoardCapture(corners[i], curve, (rig.seed, 3, i)))
    return out


def axis_board_capture(rig: RigConfig, spec: ChessboardSpec = TARGET_BOARD) -> BoardCapture:
    pose = axis_board_pose(rig, spec)
    corners = render_corner_observations(rig, spec, [pose], rng=np.random.default_rng((rig.seed, 4)))[0]
    marker = BoardSurface(spec, pose).axis_marker(rig.axis, 2000)
    return BoardCapture(corners, marker, (rig.seed, 5))


def calibration_views(rig: RigConfig, spec: ChessboardSpec = CALIBRATION_BOARD, n_views: int = 20) -> np.ndarray:
    return render_corner_observations(rig, spec, calibration_poses(rig, spec, n_views, seed=rig.seed))


def default_surface(rig: RigConfig, kind: str = "cylinder", radius: float = 30.0, height: float = 80.0):
    """Cylinder or sphere centered on the turntable at the camera's height."""
    off = turntable_center_offset(rig)
    if kind == "cylinder":
        return Cylinder(radius, height, off)
    if kind == "sphere":
        return Sphere(radius, off)
    raise ValidationError(f"unknown surface {kind!r}; expected cylinder or sphere")


def angle_between(a, b) -> float:
    """Angle in degrees between two directions, sign-insensitive."""
    c = abs(float(np.dot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b)))
    return float(np.degrees(np.arccos(min(1.0, c))))


@dataclass
class ClosedLoopReport:
    calibration: CalibrationResult
    laser: PlaneCalibration
    axis: AxisCalibration
    cloud: PointCloud
    error: CloudError
    truth: RigConfig
    dropped: int
    seconds: float
    stage_seconds: dict = field(default_factory=dict)

    @property
    def intrinsics_rel_error(self) -> float:
        k, t = self.calibration.intrinsics, self.truth.intrinsics
        return max(abs(k.fx - t.fx) / t.fx, abs(k.fy - t.fy) / t.fy, abs(k.cx - t.cx) / t.cx, abs(k.cy - t.cy) / t.cy)

    @property
    def plane_angle_deg(self) -> float:
        return angle_between(self.laser.plane.normal, self.truth.laser_plane.normal)

    @property
    def plane_offset_mm(self) -> float:
        return abs(self.laser.plane.offset - self.truth.laser_plane.offset)

    @property
    def axis_angle_deg(self) -> float:
        return angle_between(self.axis.axis.direction, self.truth.axis.direction)

    @property
    def axis_anchor_mm(self) -> float:
        return float(np.linalg.norm(self.axis.axis.point - self.truth.axis.point))

    def summary_rows(self) -> list[tuple[str, str]]:
        return [
            ("intrinsics max rel error", f"{self.intrinsics_rel_error:.3e}"),
            ("reprojection rms px", f"{self.calibration.rms_reprojection:.4f}"),
            ("laser plane angle deg", f"{self.plane_angle_deg:.5f}"),
            ("laser plane offset mm", f"{self.plane_offset_mm:.5f}"),
            ("axis angle deg", f"{self.axis_angle_deg:.5f}"),
            ("axis anchor mm", f"{self.axis_anchor_mm:.5f}"),
            ("cloud points", f"{self.error.n}"),
            ("cloud rms mm", f"{self.error.rms_mm:.5f}"),
            ("cloud max mm", f"{self.error.max_mm:.5f}"),
        ]


def run_closed_loop(
    surface,
    n_frames: int = 360,
    rig: RigConfig | None = None,
    render: bool = True,
    threshold: int = 60,
    stripe_sigma_px: float = 1.5,
    calib_views: int = 20,
    calibration_board: ChessboardSpec = CALIBRATION_BOARD,
    target_board: ChessboardSpec = TARGET_BOARD,
) -> ClosedLoopReport:
    """Simulate every stage against ground truth and run the full pipeline.

    With ``render=False`` stripes come straight from the analytic curves,
    which isolates the geometry from stripe extraction.
    """
    rig = default_rig() if rig is None else rig
    start = time.perf_counter()
    stages = {}

    def to_stripe(capture):
        if not render:
            return analytic_stripe(rig, capture.curve)
        return extract_laser_points(capture.image(rig, stripe_sigma_px), threshold)

    t0 = time.perf_counter()
    views = calibration_views(rig, calibration_board, calib_views)
    calib = calibrate_camera(calibration_board, views)
    k = calib.intrinsics
    stages["camera"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    captures = laser_board_captures(rig, target_board)
    stripes = [to_stripe(c) for c in captures]
    laser = laser_plane_from_stripes(k, target_board, [c.corners for c in captures], stripes)
    stages["laser"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    cap = axis_board_capture(rig, target_board)
    axis = axis_from_stripe(k, target_board, cap.corners, to_stripe(cap))
    stages["axis"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    scan = simulate_scan(rig, surface, n_frames, stripe_sigma_px, render=render)
    measurements = []
    for f in scan.frames:
        stripe = extract_laser_points(f.image, threshold) if render else analytic_stripe(rig, f.curve)
        measurements.append(FrameMeasurements(f.index, f.angle, stripe))
    cloud, tri = reconstruct(measurements, k, laser.plane, axis.axis)
    error = evaluate_cloud(cloud, surface, rig.axis)
    stages["scan"] = time.perf_counter() - t0

    return ClosedLoopReport(
        calibration=calib,
        laser=laser,
        axis=axis,
        cloud=cloud,
        error=error,
        truth=rig,
        dropped=sum(t.dropped for t in tri),
        seconds=time.perf_counter() - start,
        stage_seconds=stages,
    )
