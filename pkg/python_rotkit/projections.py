"""Procrustes projections onto SO(3): SVD+, Gram-Schmidt and their vector-Jacobian products."""

from __future__ import annotations

import logging
from collections.abc import Callable
from itertools import combinations

import numpy as np
import numpy.typing as npt

from python_rotkit.const import (
    NEAR_SINGULAR_DET,
    SIXD_MIN_NORM,
    SIXD_MIN_SINE,
    SVD_GAP_FLOOR,
    SVD_MAX_SWEEPS,
    SVD_OFF_DIAGONAL_TOL,
    SVD_RANK_TOL,
)
from python_rotkit.exceptions import DataError, NumericalError, SingularInputError
from python_rotkit.model import FloatArray, RotationMatrix, SixD, SVDFactors

_LOGGER = logging.getLogger(__name__)

_JACOBI_PAIRS = tuple(combinations(range(3), 2))


def _as_matrix(m: npt.ArrayLike) -> FloatArray:
    arr = np.asarray(m, dtype=np.float64)
    if arr.shape[-2:] != (3, 3):
        raise DataError(f"expected (..., 3, 3) matrices, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError("matrix has non-finite entries")
    return arr


def _rotate_columns(
    x: FloatArray, p: int, q: int, c: FloatArray, s: FloatArray
) -> None:
    xp = x[..., :, p].copy()
    xq = x[..., :, q].copy()
    x[..., :, p] = c[..., None] * xp - s[..., None] * xq
    x[..., :, q] = s[..., None] * xp + c[..., None] * xq


def svd3(m: npt.ArrayLike) -> SVDFactors:
    """Singular value decomposition of 3x3 matrices by one-sided Jacobi sweeps.

    Columns of ``m`` are rotated pairwise until mutually orthogonal; their norms
    are the singular values. Singular values come back in descending order and
    ``u`` is completed to an orthogonal matrix when ``m`` is rank deficient.
    """
    a = _as_matrix(m).copy()
    v = np.broadcast_to(np.eye(3), a.shape).copy()

    for sweep in range(SVD_MAX_SWEEPS):
        converged = True
        for p, q in _JACOBI_PAIRS:
            alpha = np.sum(a[..., :, p] ** 2, axis=-1)
            beta = np.sum(a[..., :, q] ** 2, axis=-1)
            gamma = np.sum(a[..., :, p] * a[..., :, q], axis=-1)
            active = np.abs(gamma) > SVD_OFF_DIAGONAL_TOL * np.sqrt(alpha * beta)
            if not np.any(active):
                continue
            converged = False
            safe_gamma = np.where(active, gamma, 1.0)
            zeta = (beta - alpha) / (2.0 * safe_gamma)
            sign = np.where(zeta >= 0.0, 1.0, -1.0)
            t = np.where(active, sign / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta)), 0.0)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            _rotate_columns(a, p, q, c, s)
            _rotate_columns(v, p, q, c, s)
        if converged:
            _LOGGER.debug("svd3 converged after %d sweeps", sweep)
            break
    else:
        raise NumericalError(f"svd3 did not converge in {SVD_MAX_SWEEPS} sweeps")

    sigma = np.linalg.norm(a, axis=-2)
    order = np.argsort(-sigma, axis=-1, kind="stable")
    sigma = np.take_along_axis(sigma, order, axis=-1)
    a = np.take_along_axis(a, order[..., None, :], axis=-1)
    v = np.take_along_axis(v, order[..., None, :], axis=-1)

    u = _complete_left_vectors(a, sigma)
    return SVDFactors(u=u, sigma=sigma, v=v)


def _complete_left_vectors(a: FloatArray, sigma: FloatArray) -> FloatArray:
    rank_floor = SVD_RANK_TOL * sigma[..., :1]
    live = (sigma > rank_floor) & (sigma > 0.0)
    u = a / np.where(live, sigma, 1.0)[..., None, :]

    # rank 0: identity
    zero = ~live[..., 0]
    u = np.where(zero[..., None, None], np.eye(3), u)

    # rank 1: pick the coordinate axis least aligned with u1
    rank_one = live[..., 0] & ~live[..., 1]
    if np.any(rank_one):
        u1 = u[..., :, 0]
        axis = np.eye(3)[np.argmin(np.abs(u1), axis=-1)]
        u2 = axis - np.sum(axis * u1, axis=-1, keepdims=True) * u1
        u2 /= np.linalg.norm(u2, axis=-1, keepdims=True)
        u = np.where(rank_one[..., None, None], np.stack([u1, u2, u2], axis=-1), u)

    # rank <= 2: third column from the cross product
    deficient = ~live[..., 2]
    if np.any(deficient):
        u3 = np.cross(u[..., :, 0], u[..., :, 1])
        u = np.where(deficient[..., None, None], np.concatenate([u[..., :2], u3[..., None]], axis=-1), u)
    return u


def _reflection_sign(factors: SVDFactors) -> FloatArray:
    d = np.sign(np.linalg.det(factors.u) * np.linalg.det(factors.v))
    return np.where(d == 0.0, 1.0, d)


def _warn_near_singular(m: FloatArray) -> None:
    det = np.linalg.det(m)
    count = int(np.count_nonzero(np.abs(det) < NEAR_SINGULAR_DET))
    if count:
        _LOGGER.warning("svd_plus input near singular (|det| < %g) for %d matrices", NEAR_SINGULAR_DET, count)


def svd_plus(m: npt.ArrayLike, factors: SVDFactors | None = None) -> RotationMatrix:
    """Closest rotation to ``m`` in Frobenius norm, U diag(1, 1, det(UV^T)) V^T."""
    m = _as_matrix(m)
    _warn_near_singular(m)
    if factors is None:
        factors = svd3(m)
    d = _reflection_sign(factors)
    u = factors.u.copy()
    u[..., :, 2] *= d[..., None]
    return u @ np.swapaxes(factors.v, -1, -2)


def svd_plus_vjp(
    m: npt.ArrayLike, cotangent: npt.ArrayLike, factors: SVDFactors | None = None
) -> FloatArray:
    """Pull a cotangent of svd_plus(m) back to m.

    With M = U' S V^T, S the signed singular values, the gradient is
    U' K V^T where K_ij = (G_ij - G_ji) / (s_i + s_j) for G = U'^T C V.
    Denominators are floored at ``SVD_GAP_FLOOR``.
    """
    m = _as_matrix(m)
    g = np.asarray(cotangent, dtype=np.float64)
    if factors is None:
        factors = svd3(m)
    d = _reflection_sign(factors)

    u = factors.u.copy()
    u[..., :, 2] *= d[..., None]
    s = factors.sigma.copy()
    s[..., 2] *= d
    v = factors.v

    g_hat = np.swapaxes(u, -1, -2) @ g @ v
    off_diagonal = ~np.eye(3, dtype=bool)
    denom = s[..., :, None] + s[..., None, :]
    floored = (np.abs(denom) < SVD_GAP_FLOOR) & off_diagonal
    if np.any(floored):
        _LOGGER.warning(
            "svd_plus_vjp regularized %d singular-value gaps below %g",
            int(np.count_nonzero(floored)) // 2,
            SVD_GAP_FLOOR,
        )
    denom = np.where(floored, np.where(denom < 0.0, -SVD_GAP_FLOOR, SVD_GAP_FLOOR), denom)
    denom = np.where(off_diagonal, denom, 1.0)
    k = (g_hat - np.swapaxes(g_hat, -1, -2)) / denom
    k = np.where(off_diagonal, k, 0.0)
    return u @ k @ np.swapaxes(v, -1, -2)


def _sixd_columns(m: SixD | npt.ArrayLike) -> tuple[FloatArray, FloatArray]:
    values = m.values if isinstance(m, SixD) else np.asarray(m, dtype=np.float64)
    if values.shape[-1:] != (6,):
        raise DataError(f"expected (..., 6) vectors, got shape {values.shape}")
    return values[..., :3], values[..., 3:]


def gso_degenerate(m: SixD | npt.ArrayLike) -> npt.NDArray[np.bool_]:
    """Mask of inputs on which Gram-Schmidt is undefined (zero or parallel columns)."""
    nu1, nu2 = _sixd_columns(m)
    n1 = np.linalg.norm(nu1, axis=-1)
    nu2_norm = np.linalg.norm(nu2, axis=-1)
    cross = np.linalg.norm(np.cross(nu1, nu2), axis=-1)
    scale = np.where((n1 > 0.0) & (nu2_norm > 0.0), n1 * nu2_norm, 1.0)
    return (n1 < SIXD_MIN_NORM) | (nu2_norm == 0.0) | (cross / scale < SIXD_MIN_SINE)


def _gso_frame(
    nu1: FloatArray, nu2: FloatArray
) -> tuple[FloatArray, FloatArray, FloatArray, FloatArray, FloatArray]:
    n1 = np.linalg.norm(nu1, axis=-1)
    if np.any(n1 < SIXD_MIN_NORM):
        raise SingularInputError("gso input has a zero first column")
    b1 = nu1 / n1[..., None]
    u2 = nu2 - np.sum(b1 * nu2, axis=-1, keepdims=True) * b1
    n2 = np.linalg.norm(u2, axis=-1)
    nu2_norm = np.linalg.norm(nu2, axis=-1)
    sine = n2 / np.where(nu2_norm > 0.0, nu2_norm, 1.0)
    if np.any((nu2_norm == 0.0) | (sine < SIXD_MIN_SINE)):
        raise SingularInputError("gso input columns are parallel or the second column is zero")
    b2 = u2 / n2[..., None]
    return b1, b2, np.cross(b1, b2), n1, n2


def gso(m: SixD | npt.ArrayLike) -> RotationMatrix:
    """Gram-Schmidt completion of two columns into a rotation."""
    nu1, nu2 = _sixd_columns(m)
    b1, b2, b3, _, _ = _gso_frame(nu1, nu2)
    return np.stack([b1, b2, b3], axis=-1)


def gso_vjp(m: SixD | npt.ArrayLike, cotangent: npt.ArrayLike) -> FloatArray:
    """Pull a cotangent of gso(m) back to the (nu1, nu2) input, shape (..., 6)."""
    nu1, nu2 = _sixd_columns(m)
    b1, b2, _, n1, n2 = _gso_frame(nu1, nu2)
    g = np.asarray(cotangent, dtype=np.float64)
    g1, g2, g3 = g[..., :, 0], g[..., :, 1], g[..., :, 2]

    def dot(x: FloatArray, y: FloatArray) -> FloatArray:
        return np.sum(x * y, axis=-1, keepdims=True)

    bar_b1 = g1 + np.cross(b2, g3)
    bar_b2 = g2 + np.cross(g3, b1)
    bar_u2 = (bar_b2 - dot(bar_b2, b2) * b2) / n2[..., None]
    bar_nu2 = bar_u2 - dot(bar_u2, b1) * b1
    bar_b1 = bar_b1 - dot(bar_u2, b1) * nu2 - dot(b1, nu2) * bar_u2
    bar_nu1 = (bar_b1 - dot(bar_b1, b1) * b1) / n1[..., None]
    return np.concatenate([bar_nu1, bar_nu2], axis=-1)


def weighted_procrustes(m: npt.ArrayLike, weights: npt.ArrayLike) -> RotationMatrix:
    """Rotation minimizing sum_j w_j ||r_j - m_j||^2 over the columns of ``m``.

    ``m`` may hold two or three columns; a missing third column is zero.
    """
    m_arr = np.asarray(m, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (3,) or np.any(w < 0.0):
        raise DataError(f"weights must be three nonnegative scalars, got {w}")
    if m_arr.shape[-2:] == (3, 2):
        pad = np.zeros((*m_arr.shape[:-1], 1))
        m_arr = np.concatenate([m_arr, pad], axis=-1)
    cross = _as_matrix(m_arr) * w
    factors = svd3(cross)
    d = _reflection_sign(factors)
    sigma = factors.sigma
    ambiguous = sigma[..., 1] + d * sigma[..., 2] <= SVD_RANK_TOL * sigma[..., 0]
    if np.any(ambiguous):
        _LOGGER.warning("weighted_procrustes minimizer is not unique for %d inputs", int(np.count_nonzero(ambiguous)))
    u = factors.u.copy()
    u[..., :, 2] *= d[..., None]
    return u @ np.swapaxes(factors.v, -1, -2)


def finite_diff_grad(
    fn: Callable[[FloatArray], float], x: npt.ArrayLike, h: float = 1e-5
) -> FloatArray:
    """Central-difference gradient of a scalar function, entry by entry."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for index in np.ndindex(x.shape):
        orig = x[index]
        x[index] = orig + h
        plus = fn(x)
        x[index] = orig - h
        minus = fn(x)
        x[index] = orig
        grad[index] = (plus - minus) / (2.0 * h)
    return grad
