"""Small dense linear algebra and nonlinear least squares.

The SVD here is a one-sided (Hestenes) Jacobi method: plane rotations are
applied to the columns of ``A`` until every column pair is orthogonal, which
diagonalizes ``A^T A`` without ever forming it. For the handful of columns
used by the fitting code this is exact to working precision and keeps small
singular values relatively accurate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    DimensionError,
    NonFinite,
    RankDeficient,
    SingularNormalEquations,
)

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class SvdResult:
    u: np.ndarray  # (m, n), orthonormal columns
    sigma: np.ndarray  # (n,), nonincreasing
    v: np.ndarray  # (n, n), orthonormal


@dataclass(frozen=True)
class GaussNewtonResult:
    x: np.ndarray
    final_rms: float
    iters: int


def canonical_sign(vec: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """Flip ``vec`` so that its first component with magnitude > eps is positive."""
    vec = np.asarray(vec, dtype=float)
    for c in vec:
        if abs(c) > eps:
            return vec if c > 0 else -vec
    return vec


def _as_matrix(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionError(f"expected a nonempty 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFinite("matrix contains NaN or Inf")
    return a


def _complete_columns(u: np.ndarray, missing: np.ndarray) -> None:
    """Fill columns flagged in ``missing`` with unit vectors orthogonal to the rest."""
    m, n = u.shape
    basis = np.eye(m)
    done = [k for k in range(n) if not missing[k]]
    for j in np.flatnonzero(missing):
        others = list(done)
        for e in basis:
            cand = e.copy()
            for _ in range(2):  # Gram-Schmidt, twice for stability
                for k in others:
                    cand -= (u[:, k] @ cand) * u[:, k]
            norm = np.linalg.norm(cand)
            if norm > 0.5:
                u[:, j] = cand / norm
                break
        done.append(j)


def jacobi_svd(a, tol: float = _EPS, max_sweeps: int = 80) -> SvdResult:
    """Thin SVD of a tall matrix by one-sided Jacobi rotations.

    No restriction on the number of columns; ``svd_small`` is the public,
    size-checked entry point. Right-singular vectors are sign-normalized so
    that the first non-negligible component of each column of ``v`` is
    positive.
    """
    a = _as_matrix(a)
    m, n = a.shape
    if m < n:
        raise DimensionError(f"need rows >= cols, got {m}x{n}")

    u = a.copy()
    v = np.eye(n)
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                up, uq = u[:, p], u[:, q]
                alpha = up @ up
                beta = uq @ uq
                gamma = up @ uq
                if gamma == 0.0 or abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                with np.errstate(over="ignore"):
                    zeta = (beta - alpha) / (2.0 * gamma)  # inf -> t = 0, no rotation
                t = (1.0 if zeta >= 0 else -1.0) / (abs(zeta) + np.hypot(1.0, zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                new_p = c * up - s * uq
                new_q = s * up + c * uq
                u[:, p], u[:, q] = new_p, new_q
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        if not rotated:
            break

    sigma = np.linalg.norm(u, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    u = u[:, order]
    v = v[:, order]

    # columns at rounding-noise level carry no direction; rebuild them orthogonally
    cutoff = max(np.finfo(float).tiny, sigma[0] * _EPS * max(m, n)) if n else 0.0
    missing = sigma <= cutoff
    u[:, ~missing] /= sigma[~missing]
    if np.any(missing):
        sigma[missing] = 0.0
        _complete_columns(u, missing)

    for j in range(n):
        if not np.array_equal(canonical_sign(v[:, j]), v[:, j]):
            v[:, j] = -v[:, j]
            u[:, j] = -u[:, j]
    return SvdResult(u=u, sigma=sigma, v=v)


def svd_small(a) -> SvdResult:
    """SVD of a tall matrix with at most four columns.

    Raises
    ------
    NonFinite
        If any entry is NaN or infinite.
    DimensionError
        If rows < cols or cols > 4.
    """
    a = _as_matrix(a)
    if a.shape[1] > 4:
        raise DimensionError(f"svd_small handles at most 4 columns, got {a.shape[1]}")
    return jacobi_svd(a)


def solve_least_squares(a, b, rcond: float = 1e-12) -> np.ndarray:
    """Minimize ``||a x - b||`` through the SVD pseudoinverse.

    Raises ``RankDeficient`` when the smallest singular value is not above
    ``rcond`` times the largest.
    """
    a = _as_matrix(a)
    b = np.asarray(b, dtype=float).reshape(-1)
    if b.shape[0] != a.shape[0]:
        raise DimensionError(f"b has {b.shape[0]} rows, a has {a.shape[0]}")
    if not np.all(np.isfinite(b)):
        raise NonFinite("right-hand side contains NaN or Inf")
    svd = jacobi_svd(a)
    if svd.sigma[0] == 0.0 or svd.sigma[-1] <= rcond * svd.sigma[0]:
        raise RankDeficient(
            f"smallest singular value {svd.sigma[-1]:.3e} vs largest {svd.sigma[0]:.3e}"
        )
    return svd.v @ ((svd.u.T @ b) / svd.sigma)


def _rms(r: np.ndarray) -> float:
    return float(np.sqrt(np.mean(r * r))) if r.size else 0.0


def _residuals(fn, x) -> np.ndarray:
    r = np.asarray(fn(x), dtype=float).reshape(-1)
    if not np.all(np.isfinite(r)):
        raise NonFinite("residual function returned NaN or Inf")
    return r


def numeric_jacobian(fn: Callable, x: np.ndarray) -> np.ndarray:
    """Central-difference Jacobian with step 1e-6 * max(1, |x_i|)."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        h = 1e-6 * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        cols.append((_residuals(fn, xp) - _residuals(fn, xm)) / (xp[i] - xm[i]))
    return np.column_stack(cols)


def _solve_normal(jtj: np.ndarray, g: np.ndarray, damping: float) -> np.ndarray | None:
    # Jacobi-scaled so parameters of very different magnitude (focal lengths
    # next to rotation vectors) do not wreck the conditioning.
    d = np.sqrt(np.diag(jtj))
    d[d == 0.0] = 1.0
    scaled = jtj / np.outer(d, d)
    if damping:
        scaled = scaled + damping * np.eye(len(d))
    try:
        if np.linalg.cond(scaled) > 1e14:
            return None
        step = np.linalg.solve(scaled, g / d) / d
    except np.linalg.LinAlgError:
        return None
    return step if np.all(np.isfinite(step)) else None


def gauss_newton(
    residual_fn: Callable[[np.ndarray], np.ndarray],
    x0,
    max_iters: int = 100,
    step_tol: float = 1e-12,
    residual_tol: float = 1e-14,
) -> GaussNewtonResult:
    """Minimize the RMS of ``residual_fn`` starting from ``x0``.

    Plain Gauss-Newton steps are tried first. A step that is singular or
    fails to lower the RMS is retried with Levenberg damping, starting at
    1e-3 of the mean diagonal of the Jacobi-scaled ``J^T J`` and growing
    tenfold. Only steps
    that lower the RMS are accepted, so the returned RMS never exceeds the
    starting one.
    """
    x = np.array(x0, dtype=float).reshape(-1)
    r = _residuals(residual_fn, x)
    rms = _rms(r)
    iters = 0
    while iters < max_iters and rms > residual_tol:
        iters += 1
        jac = numeric_jacobian(residual_fn, x)
        jtj = jac.T @ jac
        g = -(jac.T @ r)
        if not np.any(jtj):
            break

        accepted = False
        singular_everywhere = True
        damping = 0.0
        step = None
        for _ in range(12):
            step = _solve_normal(jtj, g, damping)
            if step is not None:
                singular_everywhere = False
                x_new = x + step
                try:
                    r_new = _residuals(residual_fn, x_new)
                except NonFinite:
                    r_new = None
                if r_new is not None:
                    rms_new = _rms(r_new)
                    if rms_new < rms:
                        x, r, rms = x_new, r_new, rms_new
                        accepted = True
                        break
            damping = 1e-3 if damping == 0.0 else damping * 10.0
        if singular_everywhere:
            raise SingularNormalEquations("normal equations singular even with damping")
        if not accepted:
            break
        if np.linalg.norm(step) <= step_tol * (np.linalg.norm(x) + step_tol):
            break
    return GaussNewtonResult(x=x, final_rms=rms, iters=iters)
