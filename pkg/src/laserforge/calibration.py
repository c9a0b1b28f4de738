"""Planar chessboard calibration.

Closed-form initialization (normalized DLT homographies, zero-skew
absolute-conic constraints, per-view extrinsics) followed by a joint
Gauss-Newton refinement of intrinsics, radial distortion and all board
poses against the reprojection error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import CameraIntrinsics, project_raw
from .errors import (
    Degenerate,
    DegenerateMotion,
    DimensionError,
    InsufficientViews,
    RankDeficient,
    Singular,
    ValidationError,
)
from .geometry import (
    RigidTransform,
    nearest_rotation,
    rotation_from_vector,
    vector_from_rotation,
)
from .numerics import gauss_newton, jacobi_svd, solve_least_squares, svd_small


@dataclass(frozen=True)
class ChessboardSpec:
    inner_cols: int = 8
    inner_rows: int = 6
    square_size: float = 3.0

    def __post_init__(self):
        if self.inner_cols < 3 or self.inner_rows < 3:
            raise ValidationError("a chessboard needs at least 3x3 inner corners")
        if not self.square_size > 0:
            raise ValidationError("square_size must be positive")

    @property
    def n_corners(self) -> int:
        return self.inner_cols * self.inner_rows

    def to_dict(self) -> dict:
        return {
            "inner_cols": self.inner_cols,
            "inner_rows": self.inner_rows,
            "square_size": float(self.square_size),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChessboardSpec":
        return cls(int(d["inner_cols"]), int(d["inner_rows"]), float(d["square_size"]))


@dataclass
class CalibrationResult:
    intrinsics: CameraIntrinsics
    poses: list[RigidTransform]
    rms_reprojection: float
    closed_form_rms: float = field(default=float("nan"), compare=False)

    def to_dict(self) -> dict:
        d = self.intrinsics.to_dict()
        d["rms_px"] = float(self.rms_reprojection)
        d["poses"] = [
            {
                "axis_angle": [float(c) for c in vector_from_rotation(p.rotation)],
                "t": [float(c) for c in p.translation],
            }
            for p in self.poses
        ]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationResult":
        poses = [RigidTransform.from_axis_angle(p["axis_angle"], p["t"]) for p in d.get("poses", [])]
        return cls(CameraIntrinsics.from_dict(d), poses, float(d.get("rms_px", float("nan"))))


def board_object_points(spec: ChessboardSpec) -> np.ndarray:
    """Corner coordinates on the board plane, row-major, first corner at the origin."""
    i, j = np.meshgrid(np.arange(spec.inner_rows), np.arange(spec.inner_cols), indexing="ij")
    pts = np.column_stack([j.ravel(), i.ravel(), np.zeros(spec.n_corners)]) * spec.square_size
    return pts + 0.0


def _normalizer(pts: np.ndarray) -> np.ndarray:
    centroid = pts.mean(axis=0)
    mean_dist = np.mean(np.linalg.norm(pts - centroid, axis=1))
    if mean_dist == 0.0:
        raise Degenerate("all points coincide")
    s = np.sqrt(2.0) / mean_dist
    return np.array([[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]])


def _apply_h(h: np.ndarray, xy: np.ndarray) -> np.ndarray:
    hom = np.column_stack([xy, np.ones(len(xy))]) @ h.T
    return hom[:, :2] / hom[:, 2:3]


def estimate_homography(object_xy, image) -> np.ndarray:
    """Normalized DLT homography from board (x, y) to pixels (u, v), H[2, 2] = 1."""
    obj = np.asarray(object_xy, dtype=float).reshape(-1, 2)
    img = np.asarray(image, dtype=float).reshape(-1, 2)
    if len(obj) != len(img):
        raise DimensionError(f"{len(obj)} object points vs {len(img)} image points")
    if len(obj) < 4:
        raise Degenerate(f"a homography needs at least 4 correspondences, got {len(obj)}")
    t_obj = _normalizer(obj)
    t_img = _normalizer(img)
    xo = _apply_h(t_obj, obj)
    xi = _apply_h(t_img, img)

    x, y = xo[:, 0], xo[:, 1]
    u, v = xi[:, 0], xi[:, 1]
    zeros = np.zeros_like(x)
    ones = np.ones_like(x)
    rows_u = np.column_stack([x, y, ones, zeros, zeros, zeros, -u * x, -u * y])
    rows_v = np.column_stack([zeros, zeros, zeros, x, y, ones, -v * x, -v * y])
    a = np.vstack([rows_u, rows_v])
    b = np.concatenate([u, v])
    try:
        h8 = solve_least_squares(a, b)
    except RankDeficient as exc:
        raise Degenerate(f"homography system is rank deficient: {exc}") from exc
    hn = np.append(h8, 1.0).reshape(3, 3)
    h = np.linalg.inv(t_img) @ hn @ t_obj
    if h[2, 2] == 0.0:
        raise Degenerate("homography maps the board origin to infinity")
    return h / h[2, 2]


def _conic_row(h: np.ndarray, i: int, j: int) -> np.ndarray:
    a, b = h[:, i], h[:, j]
    return np.array(
        [a[0] * b[0], a[1] * b[1], a[0] * b[2] + a[2] * b[0], a[1] * b[2] + a[2] * b[1], a[2] * b[2]]
    )


def intrinsics_from_homographies(hs) -> CameraIntrinsics:
    """Zero-skew intrinsics from three or more board homographies.

    Each homography contributes the two orthogonality constraints on the
    image of the absolute conic ``B = K^-T K^-1``. The scale of ``B`` is
    fixed by ``B11 = 1`` (always positive), leaving four unknowns.
    """
    hs = [np.asarray(h, dtype=float).reshape(3, 3) for h in hs]
    if len(hs) < 3:
        raise InsufficientViews(f"need at least 3 views, got {len(hs)}")
    rows = []
    for h in hs:
        h = h / np.linalg.norm(h)
        rows.append(_conic_row(h, 0, 1))
        rows.append(_conic_row(h, 0, 0) - _conic_row(h, 1, 1))
    v = np.array(rows)
    a = v[:, 1:]
    rhs = -v[:, 0]
    scale = np.linalg.norm(a, axis=0)
    if np.any(scale == 0.0):
        raise DegenerateMotion("constraint matrix has an empty column")
    a = a / scale
    sv = svd_small(a).sigma
    if sv[-1] <= 1e-10 * sv[0]:
        raise DegenerateMotion("board orientations do not constrain the intrinsics")
    b22, b13, b23, b33 = solve_least_squares(a, rhs) / scale
    b11 = 1.0
    if b22 <= 0:
        raise DegenerateMotion("recovered conic is not positive definite")
    cx = -b13 / b11
    cy = -b23 / b22
    lam = b33 - b13 * b13 / b11 - b23 * b23 / b22
    if lam <= 0:
        raise DegenerateMotion("recovered conic is not positive definite")
    return CameraIntrinsics(np.sqrt(lam / b11), np.sqrt(lam / b22), cx, cy)


def _k_inverse(k: CameraIntrinsics) -> np.ndarray:
    return np.array(
        [[1.0 / k.fx, 0.0, -k.cx / k.fx], [0.0, 1.0 / k.fy, -k.cy / k.fy], [0.0, 0.0, 1.0]]
    )


def extrinsics_from_homography(k: CameraIntrinsics, h) -> RigidTransform:
    """Board-to-camera pose from a homography and known intrinsics."""
    h = np.asarray(h, dtype=float).reshape(3, 3)
    if not np.all(np.isfinite(h)):
        raise Singular("homography is not finite")
    sv = jacobi_svd(h).sigma
    if sv[0] == 0.0 or sv[-1] <= 1e-12 * sv[0]:
        raise Singular("homography is not invertible")
    a = _k_inverse(k) @ h
    lam = 1.0 / np.linalg.norm(a[:, 0])
    r1 = lam * a[:, 0]
    r2 = lam * a[:, 1]
    t = lam * a[:, 2]
    if t[2] < 0:
        r1, r2, t = -r1, -r2, -t
    rot = nearest_rotation(np.column_stack([r1, r2, np.cross(r1, r2)]))
    return RigidTransform(rot, t)


def _check_views(spec: ChessboardSpec, views) -> np.ndarray:
    obs = np.asarray(views, dtype=float)
    if obs.ndim != 3 or obs.shape[1:] != (spec.n_corners, 2):
        raise DimensionError(
            f"expected views shaped (n, {spec.n_corners}, 2), got {obs.shape}"
        )
    if not np.all(np.isfinite(obs)):
        raise ValidationError("corner observations must be finite")
    return obs


def _pack(k: CameraIntrinsics, poses) -> np.ndarray:
    parts = [[k.fx, k.fy, k.cx, k.cy, k.k1, k.k2]]
    for p in poses:
        parts.append(vector_from_rotation(p.rotation))
        parts.append(p.translation)
    return np.concatenate(parts)


def _unpack(x: np.ndarray, n_views: int):
    k = CameraIntrinsics(*x[:6])
    poses = [
        RigidTransform.from_axis_angle(x[6 + 6 * i : 9 + 6 * i], x[9 + 6 * i : 12 + 6 * i])
        for i in range(n_views)
    ]
    return k, poses


def _project_views(params, poses_x: np.ndarray, obj: np.ndarray) -> np.ndarray:
    out = []
    for pose in poses_x.reshape(-1, 6):
        cam = obj @ rotation_from_vector(pose[:3]).T + pose[3:]
        out.append(project_raw(params, cam))
    return np.stack(out)


def _rms_2d(err: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.sum(err.reshape(-1, 2) ** 2, axis=1))))


def calibrate_camera(
    spec: ChessboardSpec,
    views,
    estimate_distortion: bool = True,
    max_iters: int = 100,
) -> CalibrationResult:
    """Calibrate from complete per-view corner lists (row-major board order).

    Parameters
    ----------
    spec : ChessboardSpec
        Board geometry; all corners of every view must be present.
    views : array_like, shape (n_views, n_corners, 2)
        Observed subpixel corners.
    estimate_distortion : bool
        Refine k1, k2 jointly. When False they stay at zero.

    Returns
    -------
    CalibrationResult
        Refined parameters; ``rms_reprojection`` never exceeds the
        closed-form initializer's.
    """
    obs = _check_views(spec, views)
    if len(obs) < 3:
        raise InsufficientViews(f"need at least 3 views, got {len(obs)}")
    obj = board_object_points(spec)
    hs = [estimate_homography(obj[:, :2], view) for view in obs]
    k0 = intrinsics_from_homographies(hs)
    poses0 = [extrinsics_from_homography(k0, h) for h in hs]
    x0 = _pack(k0, poses0)

    free = np.ones(len(x0), dtype=bool)
    if not estimate_distortion:
        free[4:6] = False

    def full(xf):
        x = x0.copy()
        x[free] = xf
        return x

    def residuals(xf):
        x = full(xf)
        return (_project_views(x[:6], x[6:], obj) - obs).ravel()

    closed_rms = _rms_2d(residuals(x0[free]))
    fit = gauss_newton(residuals, x0[free], max_iters=max_iters)
    k, poses = _unpack(full(fit.x), len(obs))
    rms = _rms_2d(residuals(fit.x))
    return CalibrationResult(k, poses, rms, closed_form_rms=closed_rms)


def reprojection_rms(result: CalibrationResult, spec: ChessboardSpec, views) -> float:
    """RMS pixel distance between observed corners and reprojected board points."""
    obs = _check_views(spec, views)
    if len(obs) != len(result.poses):
        raise DimensionError(f"{len(obs)} views but {len(result.poses)} poses")
    k = result.intrinsics
    params = (k.fx, k.fy, k.cx, k.cy, k.k1, k.k2)
    obj = board_object_points(spec)
    pred = np.stack([project_raw(params, p.apply(obj)) for p in result.poses])
    return _rms_2d(pred - obs)
