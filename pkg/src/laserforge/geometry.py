"""Planes, lines, rigid transforms and the fits/rotations built on them.

Points are plain numpy arrays: a single point has shape (3,), a set of
points (N, 3). Units are millimeters, camera frame unless noted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BehindOrigin, Degenerate, DimensionError, NonFinite, Parallel, ValidationError
from .numerics import canonical_sign, svd_small


def _vec3(vec, what="vector") -> np.ndarray:
    v = np.asarray(vec, dtype=float)
    if v.size != 3:
        raise DimensionError(f"{what} must have 3 components, got shape {v.shape}")
    return v.reshape(3)


def _unit(vec, what="vector") -> np.ndarray:
    vec = _vec3(vec, what)
    norm = np.linalg.norm(vec)
    if not np.isfinite(norm) or norm == 0.0:
        raise Degenerate(f"{what} has zero or non-finite length")
    return vec / norm


def as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    if pts.ndim != 2 or (pts.size and pts.shape[1] != 3):
        raise DimensionError(f"expected (N, 3) points, got shape {pts.shape}")
    pts = pts.reshape(-1, 3)
    if not np.all(np.isfinite(pts)):
        raise NonFinite("points contain NaN or Inf")
    return pts


@dataclass(frozen=True)
class Plane:
    """The set ``{p : normal . p = offset}`` with unit normal and offset >= 0."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = _vec3(self.normal, "plane normal")
        norm = np.linalg.norm(n)
        if not np.isfinite(norm) or norm == 0.0 or not np.isfinite(self.offset):
            raise Degenerate("plane needs a finite, nonzero normal")
        n = n / norm
        d = float(self.offset) / norm
        if d < 0 or (d == 0 and not np.array_equal(canonical_sign(n), n)):
            n, d = -n, -d
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(d) + 0.0)

    def signed_distance(self, points) -> np.ndarray:
        return as_points(points) @ self.normal - self.offset

    def to_dict(self) -> dict:
        return {"normal": [float(c) for c in self.normal], "offset": self.offset}


@dataclass(frozen=True)
class Line3:
    """Infinite line anchored at its point closest to the origin."""

    point: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        d = canonical_sign(_unit(self.direction, "line direction"))
        p = _vec3(self.point, "line point")
        if not np.all(np.isfinite(p)):
            raise NonFinite("line point is not finite")
        p = p - (p @ d) * d
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "point", p)

    def distance(self, points) -> np.ndarray:
        rel = as_points(points) - self.point
        along = rel @ self.direction
        return np.linalg.norm(rel - np.outer(along, self.direction), axis=1)

    def to_dict(self) -> dict:
        return {
            "point": [float(c) for c in self.point],
            "direction": [float(c) for c in self.direction],
        }


@dataclass(frozen=True)
class Ray:
    """Half-line ``origin + t * direction`` for t > 0; direction is unit length."""

    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", _vec3(self.origin, "ray origin"))
        object.__setattr__(self, "direction", _unit(self.direction, "ray direction"))

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


@dataclass(frozen=True)
class RigidTransform:
    """``p_out = rotation @ p_in + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = _vec3(self.translation, "translation")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise NonFinite("transform is not finite")
        if np.abs(r.T @ r - np.eye(3)).max() > 1e-9 or abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValidationError("rotation is not a proper orthonormal matrix")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    def apply(self, points) -> np.ndarray:
        return as_points(points) @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.rotation.T, -self.rotation.T @ self.translation)

    @classmethod
    def from_axis_angle(cls, rvec, translation) -> "RigidTransform":
        return cls(rotation_from_vector(rvec), translation)


def ray_plane_intersect(origin, direction, plane: Plane) -> np.ndarray:
    origin = _vec3(origin, "origin")
    direction = _vec3(direction, "direction")
    t = intersect_rays(origin, direction.reshape(1, 3), plane, strict=True)[0]
    return origin + t * direction


def intersect_rays(origin, directions, plane: Plane, strict: bool = True) -> np.ndarray:
    """Ray parameters ``t`` where ``origin + t d`` meets ``plane``.

    With ``strict`` a parallel ray or a hit at ``t <= 0`` raises; otherwise
    those rays get NaN so callers can drop them.
    """
    origin = _vec3(origin, "origin")
    directions = np.asarray(directions, dtype=float).reshape(-1, 3)
    denom = directions @ plane.normal
    parallel = np.abs(denom) < 1e-9
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (plane.offset - origin @ plane.normal) / denom
    behind = ~parallel & ~(t > 0)
    if strict:
        if np.any(parallel):
            raise Parallel(f"ray {int(np.flatnonzero(parallel)[0])} is parallel to the plane")
        if np.any(behind):
            raise BehindOrigin(f"ray {int(np.flatnonzero(behind)[0])} meets the plane behind its origin")
    t = np.where(parallel | behind, np.nan, t)
    return t


@dataclass(frozen=True)
class PlaneFit:
    plane: Plane
    rms_distance: float


@dataclass(frozen=True)
class LineFit:
    line: Line3
    rms_distance: float


def fit_plane(points) -> PlaneFit:
    """Total-least-squares plane through a point set.

    The normal is the right-singular vector for the smallest singular value
    of the centered point matrix; the plane passes through the centroid.
    """
    pts = as_points(points)
    if len(pts) < 3:
        raise Degenerate(f"need at least 3 points for a plane, got {len(pts)}")
    centroid = pts.mean(axis=0)
    svd = svd_small(pts - centroid)
    if svd.sigma[0] == 0.0 or svd.sigma[1] <= 1e-9 * svd.sigma[0]:
        raise Degenerate("points are collinear or coincident")
    normal = svd.v[:, 2]
    plane = Plane(normal, float(normal @ centroid))
    rms = float(np.sqrt(np.mean(plane.signed_distance(pts) ** 2)))
    return PlaneFit(plane, rms)


def fit_line(points) -> LineFit:
    pts = as_points(points)
    if len(pts) < 2:
        raise Degenerate(f"need at least 2 points for a line, got {len(pts)}")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    if np.max(np.linalg.norm(centered, axis=1)) <= 1e-9:
        raise Degenerate("points are coincident")
    if len(pts) < 3:
        centered = np.vstack([centered, np.zeros((3 - len(pts), 3))])
    svd = svd_small(centered)
    line = Line3(centroid, svd.v[:, 0])
    rms = float(np.sqrt(np.mean(line.distance(pts) ** 2)))
    return LineFit(line, rms)


def skew(v) -> np.ndarray:
    x, y, z = _vec3(v)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def axis_angle_matrix(axis_direction, angle: float) -> np.ndarray:
    """Rodrigues rotation by ``angle`` (right-hand rule) about a unit axis."""
    k = _unit(axis_direction, "rotation axis")
    kx = skew(k)
    return np.eye(3) + np.sin(angle) * kx + (1.0 - np.cos(angle)) * (kx @ kx)


def rotation_from_vector(rvec) -> np.ndarray:
    rvec = _vec3(rvec, "rotation vector")
    angle = np.linalg.norm(rvec)
    if angle < 1e-12:
        kx = skew(rvec)
        return np.eye(3) + kx + 0.5 * (kx @ kx)
    return axis_angle_matrix(rvec / angle, angle)


def vector_from_rotation(rot) -> np.ndarray:
    """Axis-angle vector of a rotation matrix, via a unit quaternion."""
    r = np.asarray(rot, dtype=float).reshape(3, 3)
    tr = np.trace(r)
    # Shepperd: pick the largest quaternion component to divide by.
    cands = [tr, r[0, 0], r[1, 1], r[2, 2]]
    i = int(np.argmax(cands))
    if i == 0:
        w = 0.5 * np.sqrt(max(1.0 + tr, 0.0))
        x = (r[2, 1] - r[1, 2]) / (4 * w)
        y = (r[0, 2] - r[2, 0]) / (4 * w)
        z = (r[1, 0] - r[0, 1]) / (4 * w)
    elif i == 1:
        x = 0.5 * np.sqrt(max(1.0 + r[0, 0] - r[1, 1] - r[2, 2], 0.0))
        w = (r[2, 1] - r[1, 2]) / (4 * x)
        y = (r[0, 1] + r[1, 0]) / (4 * x)
        z = (r[0, 2] + r[2, 0]) / (4 * x)
    elif i == 2:
        y = 0.5 * np.sqrt(max(1.0 - r[0, 0] + r[1, 1] - r[2, 2], 0.0))
        w = (r[0, 2] - r[2, 0]) / (4 * y)
        x = (r[0, 1] + r[1, 0]) / (4 * y)
        z = (r[1, 2] + r[2, 1]) / (4 * y)
    else:
        z = 0.5 * np.sqrt(max(1.0 - r[0, 0] - r[1, 1] + r[2, 2], 0.0))
        w = (r[1, 0] - r[0, 1]) / (4 * z)
        x = (r[0, 2] + r[2, 0]) / (4 * z)
        y = (r[1, 2] + r[2, 1]) / (4 * z)
    qv = np.array([x, y, z])
    if w < 0:
        w, qv = -w, -qv
    s = np.linalg.norm(qv)
    if s < 1e-15:
        return 2.0 * qv
    return 2.0 * np.arctan2(s, w) * qv / s


def nearest_rotation(m) -> np.ndarray:
    """Closest proper rotation to ``m`` in the Frobenius sense."""
    svd = svd_small(np.asarray(m, dtype=float).reshape(3, 3))
    rot = svd.u @ svd.v.T
    if np.linalg.det(rot) < 0:
        u = svd.u.copy()
        u[:, 2] = -u[:, 2]
        rot = u @ svd.v.T
    return rot


def rotate_points_about_axis(points, axis: Line3, angle: float) -> np.ndarray:
    pts = as_points(points)
    rot = axis_angle_matrix(axis.direction, angle)
    return (pts - axis.point) @ rot.T + axis.point


def rotate_about_axis(p, axis: Line3, angle: float) -> np.ndarray:
    return rotate_points_about_axis(p, axis, angle)[0]


def perpendicular_basis(direction) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors completing ``direction`` to a right-handed frame."""
    d = _unit(direction)
    helper = np.eye(3)[int(np.argmin(np.abs(d)))]
    e1 = np.cross(helper, d)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(d, e1)
    return e1, e2
