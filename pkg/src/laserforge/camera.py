"""Pinhole camera with two-term radial distortion.

Image convention: u to the right, v downward, pixel centers at integer
coordinates. Camera frame is right-handed with +z along the optical axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BehindCamera, Diverged, NonFinite, ValidationError
from .geometry import Ray, as_points


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    k1: float = 0.0
    k2: float = 0.0

    def __post_init__(self):
        vals = [self.fx, self.fy, self.cx, self.cy, self.k1, self.k2]
        if not all(np.isfinite(vals)):
            raise NonFinite("intrinsics must be finite")
        if self.fx <= 0 or self.fy <= 0:
            raise ValidationError(f"focal lengths must be positive, got {self.fx}, {self.fy}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def has_distortion(self) -> bool:
        return self.k1 != 0.0 or self.k2 != 0.0

    def without_distortion(self) -> "CameraIntrinsics":
        return CameraIntrinsics(self.fx, self.fy, self.cx, self.cy)

    def to_dict(self) -> dict:
        return {k: float(getattr(self, k)) for k in ("fx", "fy", "cx", "cy", "k1", "k2")}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(d["fx"], d["fy"], d["cx"], d["cy"], d.get("k1", 0.0), d.get("k2", 0.0))


def distort_normalized(xy: np.ndarray, k1: float, k2: float) -> np.ndarray:
    r2 = np.sum(xy * xy, axis=-1, keepdims=True)
    return xy * (1.0 + k1 * r2 + k2 * r2 * r2)


def project_raw(params, points: np.ndarray) -> np.ndarray:
    """Projection from a bare (fx, fy, cx, cy, k1, k2) tuple; no validation."""
    fx, fy, cx, cy, k1, k2 = params
    xy = points[:, :2] / points[:, 2:3]
    xy = distort_normalized(xy, k1, k2)
    return np.column_stack([fx * xy[:, 0] + cx, fy * xy[:, 1] + cy])


def project_points(k: CameraIntrinsics, points) -> np.ndarray:
    """Project camera-frame points (N, 3) to distorted pixels (N, 2)."""
    pts = as_points(points)
    behind = pts[:, 2] <= 1e-9
    if np.any(behind):
        raise BehindCamera(f"point {int(np.flatnonzero(behind)[0])} has z <= 0")
    return project_raw((k.fx, k.fy, k.cx, k.cy, k.k1, k.k2), pts)


def project_point(k: CameraIntrinsics, p) -> np.ndarray:
    return project_points(k, p)[0]


def distort_pixels(k: CameraIntrinsics, pixels) -> np.ndarray:
    """Map ideal (undistorted) pixels to where the lens actually images them."""
    px = np.asarray(pixels, dtype=float).reshape(-1, 2)
    xy = np.column_stack([(px[:, 0] - k.cx) / k.fx, (px[:, 1] - k.cy) / k.fy])
    xy = distort_normalized(xy, k.k1, k.k2)
    return np.column_stack([k.fx * xy[:, 0] + k.cx, k.fy * xy[:, 1] + k.cy])


def undistort_pixels(k: CameraIntrinsics, pixels, iterations: int = 10) -> np.ndarray:
    """Invert the radial model with Newton iterations on normalized coordinates.

    Raises ``Diverged`` if an iterate leaves ten times the image extent
    (taken as twice the principal point) or if the result does not map
    back onto the input within 1e-4 px.
    """
    px = np.asarray(pixels, dtype=float).reshape(-1, 2)
    if not np.all(np.isfinite(px)):
        raise NonFinite("pixels must be finite")
    if not k.has_distortion:
        return px.copy()
    target = np.column_stack([(px[:, 0] - k.cx) / k.fx, (px[:, 1] - k.cy) / k.fy])
    limit = 10.0 * max(2.0 * abs(k.cx) / k.fx, 2.0 * abs(k.cy) / k.fy, 1.0 / k.fx, 1.0 / k.fy)
    xy = target.copy()
    for _ in range(iterations):
        x, y = xy[:, 0], xy[:, 1]
        r2 = x * x + y * y
        scale = 1.0 + k.k1 * r2 + k.k2 * r2 * r2
        dscale = 2.0 * k.k1 + 4.0 * k.k2 * r2  # d(scale)/d(r2) * 2
        fx_ = x * scale - target[:, 0]
        fy_ = y * scale - target[:, 1]
        # Jacobian of xy*scale(r2): scale*I + dscale * [x y]^T [x y]
        a = scale + dscale * x * x
        b = dscale * x * y
        d = scale + dscale * y * y
        det = a * d - b * b
        with np.errstate(divide="ignore", invalid="ignore"):
            dx = (d * fx_ - b * fy_) / det
            dy = (a * fy_ - b * fx_) / det
        xy = np.column_stack([x - dx, y - dy])
        if not np.all(np.isfinite(xy)) or np.any(np.abs(xy) > limit):
            raise Diverged("undistortion left the image neighborhood")
    out = np.column_stack([k.fx * xy[:, 0] + k.cx, k.fy * xy[:, 1] + k.cy])
    miss = np.abs(distort_pixels(k, out) - px).max(axis=1)
    if np.any(miss > 1e-4):
        bad = int(np.argmax(miss))
        raise Diverged(f"undistortion of pixel {bad} did not converge (off by {miss[bad]:.3g} px)")
    return out


def undistort_pixel(k: CameraIntrinsics, p) -> np.ndarray:
    return undistort_pixels(k, p)[0]


def pixel_directions(k: CameraIntrinsics, pixels) -> np.ndarray:
    """Unit camera-frame ray directions through undistorted pixels, z > 0."""
    px = np.asarray(pixels, dtype=float).reshape(-1, 2)
    d = np.column_stack([(px[:, 0] - k.cx) / k.fx, (px[:, 1] - k.cy) / k.fy, np.ones(len(px))])
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def pixel_to_ray(k: CameraIntrinsics, p) -> Ray:
    """Back-project an undistorted pixel through the inverse camera matrix."""
    return Ray(np.zeros(3), pixel_directions(k, p)[0])
