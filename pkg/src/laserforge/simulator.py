"""Synthetic laser-turntable rig with exact ground truth.

Surfaces are analytic (cylinder, sphere, flat chessboard) so every rendered
stripe pixel has a known 3-D origin. The turntable rotates the object by
+angle about the axis direction (right-hand rule); frames are rendered row
by row as Gaussian stripe profiles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .calibration import ChessboardSpec, board_object_points
from .camera import CameraIntrinsics, project_points
from .errors import OutOfFrame, ValidationError
from .geometry import (
    Line3,
    Plane,
    RigidTransform,
    as_points,
    axis_angle_matrix,
    perpendicular_basis,
    rotate_points_about_axis,
)
from .laser import StripeExtraction


@dataclass(frozen=True)
class RigConfig:
    intrinsics: CameraIntrinsics
    laser_plane: Plane
    axis: Line3
    image_size: tuple[int, int] = (640, 480)
    noise_sigma_px: float = 0.0
    seed: int = 0

    def __post_init__(self):
        w, h = self.image_size
        if w < 16 or h < 16:
            raise ValidationError(f"image must be at least 16x16, got {w}x{h}")
        if not self.noise_sigma_px >= 0:
            raise ValidationError("noise_sigma_px must be >= 0")


def _axis_frame(axis: Line3):
    e1, e2 = perpendicular_basis(axis.direction)
    return axis.point, e1, e2, axis.direction


@dataclass(frozen=True)
class Cylinder:
    """Open cylinder coaxial with the turntable, centered ``center_offset`` along it."""

    radius: float
    height: float
    center_offset: float = 0.0
    kind: str = field(default="cylinder", init=False)

    def __post_init__(self):
        if not (self.radius > 0 and self.height > 0):
            raise ValidationError("cylinder radius and height must be positive")

    def distance(self, points, axis: Line3) -> np.ndarray:
        a, _, _, e3 = _axis_frame(axis)
        rel = as_points(points) - a
        s = rel @ e3 - self.center_offset
        rho = np.linalg.norm(rel - np.outer(rel @ e3, e3), axis=1)
        over = np.abs(s) - self.height / 2
        side = np.abs(rho - self.radius)
        cap = np.where(rho <= self.radius, over, np.hypot(rho - self.radius, over))
        return np.where(over <= 0, side, cap)

    def curve(self, plane: Plane, camera: np.ndarray, axis: Line3, samples: int) -> np.ndarray:
        a, e1, e2, e3 = _axis_frame(axis)
        r = self.radius
        lo = self.center_offset - self.height / 2
        hi = self.center_offset + self.height / 2
        # visible side: outward normal m(phi) must face the camera
        alpha, beta = (a - camera) @ e1, (a - camera) @ e2
        reach = np.hypot(alpha, beta)
        if reach <= r:
            return np.empty((0, 3))
        center = np.arctan2(beta, alpha) + np.pi
        half = np.arccos(r / reach)

        n1, n2, n3 = plane.normal @ e1, plane.normal @ e2, plane.normal @ e3
        rhs = plane.offset - plane.normal @ a

        def points(phi, s):
            return a + r * np.outer(np.cos(phi), e1) + r * np.outer(np.sin(phi), e2) + np.outer(s, e3)

        def visible(phi):
            return np.cos(phi - center) > np.cos(half)

        if abs(n3) < 1e-12:
            rn = np.hypot(n1, n2)
            if rn == 0 or abs(rhs / r) > rn:
                return np.empty((0, 3))
            base = np.arctan2(n2, n1)
            spread = np.arccos(np.clip(rhs / (r * rn), -1.0, 1.0))
            s = np.linspace(lo, hi, samples)
            out = [points(np.full(samples, phi), s) for phi in sorted({base - spread, base + spread}) if visible(phi)]
            return np.vstack(out) if out else np.empty((0, 3))

        phi = center + half * (2 * (np.arange(samples) + 0.5) / samples - 1)
        s = (rhs - r * (n1 * np.cos(phi) + n2 * np.sin(phi))) / n3
        keep = (s >= lo) & (s <= hi)
        phi, s = phi[keep], s[keep]
        order = np.argsort(s, kind="stable")
        return points(phi[order], s[order])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "radius": self.radius, "height": self.height, "center_offset": self.center_offset}


@dataclass(frozen=True)
class Sphere:
    """Sphere centered on the axis, optionally pushed ``radial_offset`` off it.

    The off-axis variant is not a surface of revolution, which makes the
    merge step observable.
    """

    radius: float
    center_offset: float = 0.0
    radial_offset: float = 0.0
    kind: str = field(default="sphere", init=False)

    def __post_init__(self):
        if not self.radius > 0:
            raise ValidationError("sphere radius must be positive")

    def center(self, axis: Line3) -> np.ndarray:
        a, e1, _, e3 = _axis_frame(axis)
        return a + self.center_offset * e3 + self.radial_offset * e1

    def distance(self, points, axis: Line3) -> np.ndarray:
        return np.abs(np.linalg.norm(as_points(points) - self.center(axis), axis=1) - self.radius)

    def curve(self, plane: Plane, camera: np.ndarray, axis: Line3, samples: int) -> np.ndarray:
        c = self.center(axis)
        n = plane.normal
        delta = n @ c - plane.offset
        if abs(delta) >= self.radius:
            return np.empty((0, 3))
        c0 = c - delta * n
        rho = np.sqrt(self.radius**2 - delta**2)
        ea = axis.direction - (axis.direction @ n) * n
        if np.linalg.norm(ea) < 1e-9:
            ea = perpendicular_basis(n)[0]
        ea = ea / np.linalg.norm(ea)
        eb = np.cross(n, ea)
        g = c0 - camera
        ga, gb = g @ ea, g @ eb
        gamma = np.hypot(ga, gb)
        k = delta * (n @ g) - rho**2
        if gamma == 0 or k / (rho * gamma) >= 1:
            t = 2 * np.pi * (np.arange(samples) + 0.5) / samples
        elif k / (rho * gamma) <= -1:
            return np.empty((0, 3))
        else:
            tau = np.arctan2(gb, ga)
            half = np.pi - np.arccos(k / (rho * gamma))
            t = tau + np.pi + half * (2 * (np.arange(samples) + 0.5) / samples - 1)
        pts = c0 + rho * (np.outer(np.cos(t), ea) + np.outer(np.sin(t), eb))
        order = np.argsort((pts - axis.point) @ axis.direction, kind="stable")
        return pts[order]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "radius": self.radius,
            "center_offset": self.center_offset,
            "radial_offset": self.radial_offset,
        }


@dataclass(frozen=True)
class BoardSurface:
    """Flat chessboard; the physical board extends one square past the inner corners."""

    spec: ChessboardSpec
    pose: RigidTransform
    kind: str = field(default="board", init=False)

    @property
    def extent(self) -> tuple[float, float, float, float]:
        sq = self.spec.square_size
        return -sq, self.spec.inner_cols * sq, -sq, self.spec.inner_rows * sq

    @property
    def plane(self) -> Plane:
        n = self.pose.rotation[:, 2]
        return Plane(n, float(n @ self.pose.translation))

    def distance(self, points, axis: Line3 | None = None) -> np.ndarray:
        return np.abs(self.plane.signed_distance(points))

    def curve(self, plane: Plane, camera: np.ndarray, axis: Line3, samples: int) -> np.ndarray:
        rot, t = self.pose.rotation, self.pose.translation
        nb = rot.T @ plane.normal
        db = plane.offset - plane.normal @ t
        x0, x1, y0, y1 = self.extent
        if abs(nb[0]) >= abs(nb[1]):
            y = np.linspace(y0, y1, samples)
            x = (db - nb[1] * y) / nb[0]
        elif abs(nb[1]) > 1e-12:
            x = np.linspace(x0, x1, samples)
            y = (db - nb[0] * x) / nb[1]
        else:
            return np.empty((0, 3))
        keep = (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
        local = np.column_stack([x[keep], y[keep], np.zeros(keep.sum())])
        pts = self.pose.apply(local) if len(local) else np.empty((0, 3))
        order = np.argsort((pts - axis.point) @ axis.direction, kind="stable")
        return pts[order]

    def axis_marker(self, axis: Line3, samples: int) -> np.ndarray:
        """Points of the turntable axis that fall on this board.

        Stands in for the vertical beam shone along the axis onto a board
        placed through the turntable center.
        """
        local_a = self.pose.inverse().apply(axis.point)[0]
        local_d = self.pose.rotation.T @ axis.direction
        if abs(local_a[2]) > 1e-6 or abs(local_d[2]) > 1e-9:
            raise ValidationError("the axis does not lie on this board")
        x0, x1, y0, y1 = self.extent
        # parameter range where the line stays inside the board rectangle
        lo, hi = -np.inf, np.inf
        for p, d, a0, a1 in ((local_a[0], local_d[0], x0, x1), (local_a[1], local_d[1], y0, y1)):
            if abs(d) < 1e-12:
                if not a0 <= p <= a1:
                    return np.empty((0, 3))
                continue
            s0, s1 = sorted(((a0 - p) / d, (a1 - p) / d))
            lo, hi = max(lo, s0), min(hi, s1)
        if not lo < hi:
            return np.empty((0, 3))
        s = np.linspace(lo, hi, samples)
        return axis.point + np.outer(s, axis.direction)

    def to_dict(self) -> dict:
        from .geometry import vector_from_rotation

        return {
            "kind": self.kind,
            "board": self.spec.to_dict(),
            "axis_angle": [float(c) for c in vector_from_rotation(self.pose.rotation)],
            "t": [float(c) for c in self.pose.translation],
        }


def surface_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "cylinder":
        return Cylinder(float(d["radius"]), float(d["height"]), float(d.get("center_offset", 0.0)))
    if kind == "sphere":
        return Sphere(float(d["radius"]), float(d.get("center_offset", 0.0)), float(d.get("radial_offset", 0.0)))
    if kind == "board":
        pose = RigidTransform.from_axis_angle(d["axis_angle"], d["t"])
        return BoardSurface(ChessboardSpec.from_dict(d["board"]), pose)
    raise ValidationError(f"unknown surface kind {kind!r}")


def surface_laser_curve(surface, laser_plane: Plane, axis: Line3, samples: int = 2000, angle: float = 0.0) -> np.ndarray:
    """Camera-visible points of ``surface ∩ laser_plane`` with the object turned by ``angle``.

    The object is rotated rigidly about ``axis``; equivalently the plane and
    camera are rotated by ``-angle`` into the object frame, intersected there,
    and the result rotated back. Points come back ordered by height along the
    axis; an empty array means the sheet misses the visible surface.
    """
    if samples < 2:
        raise ValidationError("samples must be >= 2")
    camera = np.zeros(3)
    if angle != 0.0 and not isinstance(surface, BoardSurface):
        rot = axis_angle_matrix(axis.direction, angle)
        a = axis.point
        n_obj = rot.T @ laser_plane.normal
        d_obj = laser_plane.offset - laser_plane.normal @ a + n_obj @ a
        plane_obj = Plane(n_obj, d_obj)
        cam_obj = a + rot.T @ (camera - a)
        pts = surface.curve(plane_obj, cam_obj, axis, samples)
        return rotate_points_about_axis(pts, axis, angle) if len(pts) else pts
    return surface.curve(laser_plane, camera, axis, samples)


def render_corner_observations(rig: RigConfig, spec: ChessboardSpec, poses, rng=None) -> np.ndarray:
    """Projected board corners for each pose plus seeded Gaussian noise.

    Returns an array shaped (n_views, n_corners, 2). Raises ``OutOfFrame``
    naming the first offending view and corner.
    """
    rng = np.random.default_rng((rig.seed, 1)) if rng is None else rng
    obj = board_object_points(spec)
    w, h = rig.image_size
    views = []
    for vi, pose in enumerate(poses):
        cam = pose.apply(obj)
        bad = np.flatnonzero(cam[:, 2] <= 1e-9)
        if len(bad):
            raise OutOfFrame(f"view {vi} corner {bad[0]} is behind the camera", vi, int(bad[0]))
        px = project_points(rig.intrinsics, cam)
        bad = np.flatnonzero((px[:, 0] < 0) | (px[:, 0] > w - 1) | (px[:, 1] < 0) | (px[:, 1] > h - 1))
        if len(bad):
            raise OutOfFrame(f"view {vi} corner {bad[0]} projects outside the image", vi, int(bad[0]))
        if rig.noise_sigma_px > 0:
            px = px + rng.normal(0.0, rig.noise_sigma_px, px.shape)
        views.append(px)
    return np.array(views).reshape(len(views), spec.n_corners, 2)


def _monotone_pieces(uv: np.ndarray, gap_factor: float = 10.0):
    """Split a projected polyline into pieces whose v is monotone.

    A lone point is its own piece; it only marks a row it sits exactly on.
    """
    if len(uv) == 0:
        return []
    steps = np.linalg.norm(np.diff(uv, axis=0), axis=1)
    typical = np.median(steps) if len(steps) else 0.0
    breaks = set(np.flatnonzero(steps > gap_factor * max(typical, 1e-12)).tolist())
    dv = np.sign(np.diff(uv[:, 1]))
    pieces, start = [], 0
    for i in range(len(uv) - 1):
        turn = i > start and dv[i] != 0 and dv[i - 1] != 0 and dv[i] != dv[i - 1]
        if i in breaks or turn:
            pieces.append(uv[start : i + 1])
            start = i + 1 if i in breaks else i
    pieces.append(uv[start:])
    return [p for p in pieces if len(p)]


def curve_row_crossings(k: CameraIntrinsics, curve, image_size) -> tuple[np.ndarray, np.ndarray]:
    """Subpixel u of the projected curve at every integer row it spans.

    Returns (rows, us), possibly with several entries per row when the curve
    crosses it more than once.
    """
    curve = as_points(curve)
    if len(curve) == 0:
        return np.empty(0, dtype=np.int64), np.empty(0)
    uv = project_points(k, curve)
    w, h = image_size
    outside = (uv[:, 0] < 0) | (uv[:, 0] > w - 1) | (uv[:, 1] < 0) | (uv[:, 1] > h - 1)
    if np.any(outside):
        raise OutOfFrame(f"curve point {int(np.flatnonzero(outside)[0])} projects outside the image")
    rows_all, us_all = [], []
    for piece in _monotone_pieces(uv):
        if piece[-1, 1] < piece[0, 1]:
            piece = piece[::-1]
        v, u = piece[:, 1], piece[:, 0]
        rows = np.arange(np.ceil(v[0]), np.floor(v[-1]) + 1, dtype=np.int64)
        if len(rows) == 0:
            continue
        rows_all.append(rows)
        us_all.append(np.interp(rows, v, u))
    if not rows_all:
        return np.empty(0, dtype=np.int64), np.empty(0)
    rows = np.concatenate(rows_all)
    us = np.concatenate(us_all)
    # pieces share endpoints; keep one crossing per (row, u)
    key = np.unique(np.column_stack([rows, np.round(us, 9)]), axis=0)
    return key[:, 0].astype(np.int64), key[:, 1]


def render_laser_image(
    rig: RigConfig,
    curve,
    stripe_sigma_px: float = 1.5,
    peak: int = 255,
    rng=None,
) -> np.ndarray:
    """Dark frame with a Gaussian stripe profile on every row the curve crosses."""
    if not 0.5 <= stripe_sigma_px <= 3.0:
        raise ValidationError("stripe_sigma_px must be within [0.5, 3]")
    w, h = rig.image_size
    img = np.zeros((h, w))
    rows, us = curve_row_crossings(rig.intrinsics, curve, rig.image_size)
    if len(rows):
        cols = np.arange(w, dtype=float)
        prof = peak * np.exp(-((cols[None, :] - us[:, None]) ** 2) / (2.0 * stripe_sigma_px**2))
        np.maximum.at(img, rows, prof)
    if rig.noise_sigma_px > 0:
        rng = np.random.default_rng(rig.seed) if rng is None else rng
        img += rng.normal(0.0, 4.0 * rig.noise_sigma_px, img.shape)
    return np.clip(np.round(img), 0, 255).astype(np.uint8)


def analytic_stripe(rig: RigConfig, curve) -> StripeExtraction:
    """The stripe an ideal extractor would report: exact u per crossed row.

    Where a row is crossed more than once the leftmost crossing is kept,
    mirroring the extractor's tie rule.
    """
    rows, us = curve_row_crossings(rig.intrinsics, curve, rig.image_size)
    if len(rows) == 0:
        return StripeExtraction(np.empty((0, 2)), 0)
    order = np.lexsort((us, rows))
    rows, us = rows[order], us[order]
    first = np.ones(len(rows), dtype=bool)
    first[1:] = rows[1:] != rows[:-1]
    return StripeExtraction(np.column_stack([us[first], rows[first].astype(float)]), 0)


@dataclass
class ScanFrame:
    index: int
    angle: float  # radians, object rotation relative to frame 0
    image: np.ndarray | None
    curve: np.ndarray  # ground-truth camera-frame stripe points


@dataclass
class SimulatedScan:
    frames: list[ScanFrame]
    rig: RigConfig
    surface: object

    def ground_truth(self) -> dict:
        return {
            "plane": self.rig.laser_plane.to_dict(),
            "axis": self.rig.axis.to_dict(),
            "surface": self.surface.to_dict(),
            "intrinsics": self.rig.intrinsics.to_dict(),
        }


def simulate_scan(
    rig: RigConfig,
    surface,
    n_frames: int,
    stripe_sigma_px: float = 1.5,
    peak: int = 255,
    samples: int = 2000,
    render: bool = True,
) -> SimulatedScan:
    """Turn the object through a full revolution in ``n_frames`` equal steps.

    Frame i sees the object rotated by ``i * 2 pi / n_frames``. Each frame
    draws from its own RNG seeded with ``seed + i``, so frames can be
    rendered in any order with identical results.
    """
    if n_frames < 1:
        raise ValidationError("n_frames must be >= 1")
    frames = [
        scan_frame(rig, surface, i, n_frames, stripe_sigma_px, peak, samples, render) for i in range(n_frames)
    ]
    return SimulatedScan(frames, rig, surface)


def scan_frame(
    rig: RigConfig,
    surface,
    index: int,
    n_frames: int,
    stripe_sigma_px: float = 1.5,
    peak: int = 255,
    samples: int = 2000,
    render: bool = True,
) -> ScanFrame:
    """Frame ``index`` of an ``n_frames`` revolution, independent of every other frame."""
    angle = index * 2.0 * np.pi / n_frames
    curve = surface_laser_curve(surface, rig.laser_plane, rig.axis, samples, angle)
    image = None
    if render:
        image = render_laser_image(rig, curve, stripe_sigma_px, peak, rng=np.random.default_rng(rig.seed + index))
    return ScanFrame(index, angle, image, curve)


# ---------------------------------------------------------------------------
# Default desk-scale scene


def default_rig(noise_sigma_px: float = 0.0, seed: int = 0) -> RigConfig:
    """Camera 400 mm from a slightly tilted turntable axis, laser sheet 30 deg off the view plane.

    The sheet contains the axis, so exactly one stripe of a coaxial surface
    faces the camera.
    """
    k = CameraIntrinsics(800.0, 800.0, 320.0, 240.0)
    direction = np.array([0.02, 1.0, -0.08])
    axis = Line3(np.array([6.0, 0.0, 400.0]), direction)
    view_normal = np.cross(axis.direction, axis.point)
    normal = axis_angle_matrix(axis.direction, np.radians(30.0)) @ view_normal
    normal /= np.linalg.norm(normal)
    plane = Plane(normal, float(normal @ axis.point))
    return RigConfig(k, plane, axis, (640, 480), noise_sigma_px, seed)


def turntable_center_offset(rig: RigConfig) -> float:
    """Offset along the axis (from its anchor) of the point level with the optical axis."""
    d = rig.axis.direction
    return float(-rig.axis.point[1] / d[1]) if abs(d[1]) > 1e-9 else 0.0


def turntable_center(rig: RigConfig) -> np.ndarray:
    return rig.axis.point + turntable_center_offset(rig) * rig.axis.direction


def _look_pose(rot: np.ndarray, spec: ChessboardSpec, center_cam: np.ndarray) -> RigidTransform:
    sq = spec.square_size
    c_board = np.array([(spec.inner_cols - 1) * sq / 2, (spec.inner_rows - 1) * sq / 2, 0.0])
    return RigidTransform(rot, center_cam - rot @ c_board)


def calibration_poses(rig: RigConfig, spec: ChessboardSpec, n_views: int = 20, seed: int = 0,
                      fill: float = 0.45, margin_px: float = 8.0) -> list[RigidTransform]:
    """Seeded, varied board poses that keep every corner inside the frame."""
    rng = np.random.default_rng((seed, 7))
    k = rig.intrinsics
    w, h = rig.image_size
    width_mm = (spec.inner_cols - 1) * spec.square_size
    base_z = k.fx * width_mm / (fill * w)
    obj = board_object_points(spec)
    poses = []
    while len(poses) < n_views:
        tilt_axis = rng.normal(size=2)
        tilt_axis = np.array([*tilt_axis / np.linalg.norm(tilt_axis), 0.0])
        rot = axis_angle_matrix([0, 0, 1], rng.uniform(-0.5, 0.5)) @ axis_angle_matrix(
            tilt_axis, np.radians(rng.uniform(15.0, 40.0))
        )
        z = base_z * rng.uniform(0.85, 1.25)
        u = rng.uniform(0.3, 0.7) * w
        v = rng.uniform(0.3, 0.7) * h
        center = z * np.array([(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0])
        pose = _look_pose(rot, spec, center)
        cam = pose.apply(obj)
        if np.any(cam[:, 2] <= 1.0):
            continue
        px = project_points(k, cam)
        if np.all((px >= margin_px) & (px <= np.array([w - 1, h - 1]) - margin_px)):
            poses.append(pose)
    return poses


def _sheet_frame(rig: RigConfig):
    """Unit vectors (along axis, in-sheet across axis, sheet normal)."""
    e3 = rig.axis.direction
    n = rig.laser_plane.normal
    across = np.cross(n, e3)
    across /= np.linalg.norm(across)
    if across @ turntable_center(rig) > 0:  # point toward the camera
        across = -across
    return e3, across, n


def _facing_rotation(view_dir: np.ndarray, up: np.ndarray) -> np.ndarray:
    """Board rotation with +y along ``up`` and +z along ``view_dir`` (away from camera)."""
    z = view_dir - (view_dir @ up) * up
    z /= np.linalg.norm(z)
    x = np.cross(up, z)
    return np.column_stack([x, up, z])


def laser_board_poses(rig: RigConfig, spec: ChessboardSpec) -> list[RigidTransform]:
    """Two boards straddling the laser sheet at different depths and tilts."""
    e3, across, _ = _sheet_frame(rig)
    a = turntable_center(rig)
    poses = []
    for shift, yaw, pitch in ((45.0, 20.0, -8.0), (-35.0, -25.0, 12.0)):
        center = a + shift * across
        base = _facing_rotation(center / np.linalg.norm(center), e3)
        rot = axis_angle_matrix(base[:, 1], np.radians(yaw)) @ axis_angle_matrix(base[:, 0], np.radians(pitch)) @ base
        poses.append(_look_pose(rot, spec, center))
    return poses


def axis_board_pose(rig: RigConfig, spec: ChessboardSpec, yaw_deg: float = 15.0) -> RigidTransform:
    """Board standing on the turntable with the axis running down its middle column."""
    e3 = rig.axis.direction
    a = turntable_center(rig)
    base = _facing_rotation(a / np.linalg.norm(a), e3)
    rot = axis_angle_matrix(e3, np.radians(yaw_deg)) @ base
    return _look_pose(rot, spec, a)
