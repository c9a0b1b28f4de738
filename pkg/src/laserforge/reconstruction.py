"""Sheet-of-light triangulation and turntable merging."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraIntrinsics, pixel_directions, undistort_pixels
from .errors import EmptyCloud, ValidationError
from .geometry import Line3, Plane, as_points, intersect_rays, rotate_points_about_axis
from .laser import StripeExtraction


@dataclass
class PointCloud:
    points: np.ndarray  # (N, 3), object frame = turntable at angle 0, camera-aligned
    colors: np.ndarray | None = None  # (N, 3) uint8

    def __post_init__(self):
        self.points = as_points(self.points)
        if self.colors is not None:
            self.colors = np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3)
            if len(self.colors) != len(self.points):
                raise ValidationError("colors must match points one to one")

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class FrameMeasurements:
    index: int
    angle: float  # radians
    stripe: StripeExtraction


@dataclass
class TriangulatedFrame:
    index: int
    angle: float
    points: np.ndarray  # camera frame
    dropped: int = 0


@dataclass(frozen=True)
class CloudError:
    rms_mm: float
    max_mm: float
    n: int


def undistort_stripe(stripe: StripeExtraction, k: CameraIntrinsics) -> StripeExtraction:
    if not k.has_distortion or len(stripe) == 0:
        return stripe
    return StripeExtraction(undistort_pixels(k, stripe.points), stripe.threshold_used, stripe.direction)


def triangulate_frame(stripe: StripeExtraction, k: CameraIntrinsics, laser_plane: Plane) -> TriangulatedFrame:
    """Intersect each (undistorted) stripe pixel's ray with the laser sheet.

    Rays parallel to the sheet or meeting it behind the camera are dropped
    and counted rather than raised; scan frames routinely contain such
    outliers. Returned with index 0 and angle 0; callers fill those in.
    """
    if len(stripe) == 0:
        return TriangulatedFrame(0, 0.0, np.empty((0, 3)))
    dirs = pixel_directions(k, stripe.points)
    t = intersect_rays(np.zeros(3), dirs, laser_plane, strict=False)
    ok = np.isfinite(t)
    return TriangulatedFrame(0, 0.0, dirs[ok] * t[ok, None], int((~ok).sum()))


def merge_frames(frames, axis: Line3) -> PointCloud:
    """Undo each frame's turntable rotation and concatenate.

    The object turned by +angle about ``axis`` for a frame, so its points
    are rotated back by -angle. Output order is frame index, then row,
    whatever order the frames arrive in.
    """
    chunks = []
    for frame in sorted(frames, key=lambda f: f.index):
        pts = as_points(frame.points)
        if len(pts):
            chunks.append(rotate_points_about_axis(pts, axis, -frame.angle))
    return PointCloud(np.vstack(chunks) if chunks else np.empty((0, 3)))


def reconstruct(measurements, k: CameraIntrinsics, laser_plane: Plane, axis: Line3) -> tuple[PointCloud, list[TriangulatedFrame]]:
    """Undistort, triangulate and merge a list of ``FrameMeasurements``."""
    tri = []
    for m in measurements:
        frame = triangulate_frame(undistort_stripe(m.stripe, k), k, laser_plane)
        frame.index, frame.angle = m.index, m.angle
        tri.append(frame)
    return merge_frames(tri, axis), tri


def evaluate_cloud(cloud: PointCloud, surface, axis: Line3) -> CloudError:
    """Distance statistics of a merged cloud against an analytic surface."""
    if len(cloud) == 0:
        raise EmptyCloud("cannot evaluate an empty cloud")
    d = surface.distance(cloud.points, axis)
    return CloudError(float(np.sqrt(np.mean(d * d))), float(np.max(d)), len(d))
