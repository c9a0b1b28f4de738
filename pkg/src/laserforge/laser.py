"""Laser stripe extraction and laser-plane / turntable-axis calibration.

Images are 2-D ``uint8`` arrays indexed ``[row, col]`` (v, u).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraIntrinsics, pixel_directions
from .errors import Degenerate, DimensionError, ValidationError
from .geometry import Line3, Plane, as_points, fit_line, fit_plane, intersect_rays

SCAN_DIRECTIONS = ("rows", "columns")


@dataclass(frozen=True)
class StripeExtraction:
    """Subpixel stripe centers, one per scanned line that holds signal.

    ``points`` is (N, 2) in (u, v) pixels. For row scans v is the integer
    row and u the centroid; for column scans the roles swap.
    """

    points: np.ndarray
    threshold_used: int
    direction: str = "rows"

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class PlaneCalibration:
    plane: Plane
    rms: float

    def to_dict(self) -> dict:
        return {**self.plane.to_dict(), "rms_mm": float(self.rms)}


@dataclass(frozen=True)
class AxisCalibration:
    axis: Line3
    rms: float

    def to_dict(self) -> dict:
        return {**self.axis.to_dict(), "rms_mm": float(self.rms)}


def as_gray_image(img) -> np.ndarray:
    arr = np.asarray(img)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"expected a 2-D grayscale image, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if np.any((arr < 0) | (arr > 255)) or np.any(arr != np.round(arr)):
            raise ValidationError("grayscale pixels must be integers in 0..255")
        arr = arr.astype(np.uint8)
    return arr


def _row_centroids(img: np.ndarray, threshold: int) -> tuple[np.ndarray, np.ndarray]:
    """Centroid of the brightest above-threshold run in each row.

    Fully vectorized: runs are labelled across the whole image, summed with
    bincount, and the winner per row picked with a lexsort (highest total
    intensity first, leftmost start on ties).
    """
    h, w = img.shape
    vals = img.astype(np.int64)
    mask = vals >= threshold
    if not mask.any():
        return np.empty(0), np.empty(0)
    padded = np.zeros((h, w + 1), dtype=bool)
    padded[:, 1:] = mask
    starts = mask & ~padded[:, :-1]
    run_id = np.cumsum(starts.ravel()).reshape(h, w) - 1
    ids = run_id[mask]
    rows, cols = np.nonzero(mask)
    n_runs = int(ids.max()) + 1

    run_row = np.zeros(n_runs, dtype=np.int64)
    run_row[ids] = rows
    run_start = np.full(n_runs, w, dtype=np.int64)
    np.minimum.at(run_start, ids, cols)

    total = np.bincount(ids, weights=vals[mask], minlength=n_runs)
    weight = (vals[mask] - threshold + 1).astype(float)
    wsum = np.bincount(ids, weights=weight, minlength=n_runs)
    # offsets from the run start keep the sums small and shift-invariant
    wcol = np.bincount(ids, weights=weight * (cols - run_start[ids]), minlength=n_runs)

    order = np.lexsort((run_start, -total, run_row))
    first = np.ones(len(order), dtype=bool)
    first[1:] = run_row[order][1:] != run_row[order][:-1]
    best = order[first]
    return run_row[best].astype(float), run_start[best] + wcol[best] / wsum[best]


def extract_laser_points(img, threshold: int = 128, direction: str = "rows") -> StripeExtraction:
    """Locate the laser stripe with subpixel precision.

    Every scan line (image row by default) is thresholded; among the runs of
    pixels at or above ``threshold`` the one with the largest summed
    intensity wins (leftmost on ties), and its center is the centroid
    weighted by ``intensity - threshold + 1``. Lines without any such pixel
    are skipped.
    """
    if not 0 < threshold < 255:
        raise ValidationError(f"threshold must be in (0, 255), got {threshold}")
    if direction not in SCAN_DIRECTIONS:
        raise ValidationError(f"scan direction must be one of {SCAN_DIRECTIONS}")
    img = as_gray_image(img)
    if direction == "rows":
        line, center = _row_centroids(img, threshold)
        pts = np.column_stack([center, line])
    else:
        line, center = _row_centroids(img.T, threshold)
        pts = np.column_stack([line, center])
    return StripeExtraction(pts.reshape(-1, 2), int(threshold), direction)


def lift_pixels_to_plane(k: CameraIntrinsics, pixels, reference: Plane) -> np.ndarray:
    """Intersect the camera rays of undistorted pixels with a plane; strict."""
    dirs = pixel_directions(k, pixels)
    t = intersect_rays(np.zeros(3), dirs, reference, strict=True)
    return dirs * t[:, None]


def lift_stripe_to_plane(stripe: StripeExtraction, k: CameraIntrinsics, reference: Plane) -> np.ndarray:
    """Camera-frame 3-D points of stripe pixels lying on a known plane.

    The pixels must already be undistorted. Any ray that misses the plane
    fails the whole lift: calibration inputs are expected to be clean.
    """
    if len(stripe) == 0:
        return np.empty((0, 3))
    return lift_pixels_to_plane(k, stripe.points, reference)


def calibrate_laser_plane(lifted_sets) -> PlaneCalibration:
    """Fit the laser sheet to stripe points lifted from two or more board poses."""
    sets = [as_points(s) for s in lifted_sets]
    if len(sets) < 2:
        # a single stripe is a line, so one pose can never pin down the sheet
        raise Degenerate(f"need stripes from at least 2 board poses, got {len(sets)}")
    fit = fit_plane(np.vstack(sets))
    return PlaneCalibration(fit.plane, fit.rms_distance)


def calibrate_rotation_axis(lifted_axis_points) -> AxisCalibration:
    fit = fit_line(lifted_axis_points)
    return AxisCalibration(fit.line, fit.rms_distance)
