"""Rotation matrix algebra on SO(3).

All functions accept a single value or a batch stacked along leading axes.
"""

from __future__ import annotations

import logging

import numpy as np
import numpy.typing as npt

from python_rotkit.const import SKEW_TOL, SMALL_ANGLE, VALID_TOL
from python_rotkit.exceptions import DataError
from python_rotkit.model import FloatArray, RotationMatrix, Vec3

_LOGGER = logging.getLogger(__name__)

# sin(angle) below which log() reads the axis from the symmetric part
_NEAR_PI_SINE = 1e-3
# skew magnitude below which the axis sign at angle pi is a pure convention
_AXIS_SIGN_EPS = 1e-12


def _as_matrix(m: npt.ArrayLike) -> FloatArray:
    arr = np.asarray(m, dtype=np.float64)
    if arr.shape[-2:] != (3, 3):
        raise DataError(f"expected (..., 3, 3) matrices, got shape {arr.shape}")
    return arr


def _as_vec3(v: npt.ArrayLike) -> Vec3:
    arr = np.asarray(v, dtype=np.float64)
    if arr.shape[-1:] != (3,):
        raise DataError(f"expected (..., 3) vectors, got shape {arr.shape}")
    return arr


def identity(batch_shape: tuple[int, ...] = ()) -> RotationMatrix:
    return np.broadcast_to(np.eye(3), (*batch_shape, 3, 3)).copy()


def compose(r1: npt.ArrayLike, r2: npt.ArrayLike) -> RotationMatrix:
    return _as_matrix(r1) @ _as_matrix(r2)


def inverse(r: npt.ArrayLike) -> RotationMatrix:
    return np.swapaxes(_as_matrix(r), -1, -2).copy()


def hat(v: npt.ArrayLike) -> FloatArray:
    """Cross-product matrix, hat(v) @ w == cross(v, w)."""
    v = _as_vec3(v)
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    zero = np.zeros_like(x)
    return np.stack(
        [
            np.stack([zero, -z, y], axis=-1),
            np.stack([z, zero, -x], axis=-1),
            np.stack([-y, x, zero], axis=-1),
        ],
        axis=-2,
    )


def vee(s: npt.ArrayLike) -> Vec3:
    s = _as_matrix(s)
    asymmetry = np.max(np.abs(s + np.swapaxes(s, -1, -2)), initial=0.0)
    if asymmetry > SKEW_TOL:
        raise DataError(f"vee expects a skew-symmetric matrix, asymmetry {asymmetry:.3g}")
    return np.stack([s[..., 2, 1], s[..., 0, 2], s[..., 1, 0]], axis=-1)


def _skew_part(r: FloatArray) -> Vec3:
    # vee((R - R^T) / 2) without the skew check
    return 0.5 * np.stack(
        [r[..., 2, 1] - r[..., 1, 2], r[..., 0, 2] - r[..., 2, 0], r[..., 1, 0] - r[..., 0, 1]],
        axis=-1,
    )


def exp_so3(omega: npt.ArrayLike) -> RotationMatrix:
    """Rodrigues' formula for exponential coordinates."""
    omega = _as_vec3(omega)
    theta = np.linalg.norm(omega, axis=-1)
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    theta_sq = theta * theta
    a = np.where(small, 1.0 - theta_sq / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta_sq / 24.0, (1.0 - np.cos(safe)) / (safe * safe))
    k = hat(omega)
    return np.eye(3) + a[..., None, None] * k + b[..., None, None] * (k @ k)


def log_so3(r: npt.ArrayLike) -> Vec3:
    """Principal matrix logarithm, returned as exponential coordinates with norm <= pi.

    At exactly pi the axis sign is chosen so that its largest-magnitude
    component is positive.
    """
    r = _as_matrix(r)
    skew = _skew_part(r)
    sin_theta = np.linalg.norm(skew, axis=-1)
    cos_theta = np.clip(0.5 * (np.trace(r, axis1=-2, axis2=-1) - 1.0), -1.0, 1.0)
    theta = np.arctan2(sin_theta, cos_theta)

    small = theta < SMALL_ANGLE
    near_pi = (cos_theta < 0.0) & (sin_theta < _NEAR_PI_SINE)

    # generic branch: omega = theta / sin(theta) * skew
    safe_sin = np.where(small | near_pi, 1.0, sin_theta)
    scale = np.where(small, 1.0 + theta * theta / 6.0, theta / safe_sin)
    omega = scale[..., None] * skew

    if np.any(near_pi):
        omega = np.where(near_pi[..., None], _log_near_pi(r, skew, cos_theta, theta), omega)
    return omega


def _log_near_pi(r: FloatArray, skew: Vec3, cos_theta: FloatArray, theta: FloatArray) -> Vec3:
    # (R + R^T) / 2 - cos(theta) I = (1 - cos(theta)) n n^T
    sym = 0.5 * (r + np.swapaxes(r, -1, -2)) - cos_theta[..., None, None] * np.eye(3)
    denom = np.maximum(1.0 - cos_theta, 1.0)
    outer = sym / denom[..., None, None]
    diag = np.diagonal(outer, axis1=-2, axis2=-1)
    pivot = np.argmax(diag, axis=-1)
    column = np.take_along_axis(outer, pivot[..., None, None], axis=-1)[..., 0]
    pivot_value = np.take_along_axis(diag, pivot[..., None], axis=-1)
    axis = column / np.sqrt(np.maximum(pivot_value, VALID_TOL))
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)

    aligned = np.sum(axis * skew, axis=-1)
    biggest = np.take_along_axis(axis, np.argmax(np.abs(axis), axis=-1)[..., None], axis=-1)[..., 0]
    sign = np.where(np.abs(aligned) > _AXIS_SIGN_EPS, np.sign(aligned), np.sign(biggest))
    sign = np.where(sign == 0.0, 1.0, sign)
    return (sign * theta)[..., None] * axis


def quaternion_matrix(q: npt.ArrayLike) -> RotationMatrix:
    """Rotation matrix of a scalar-first unit quaternion (no norm check)."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1),
        ],
        axis=-2,
    )


def sample_uniform(rng: np.random.Generator, n: int | None = None) -> RotationMatrix:
    """Haar-uniform rotations from normalized 4D Gaussian draws."""
    shape = (4,) if n is None else (n, 4)
    q = rng.standard_normal(shape)
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    return quaternion_matrix(q)


def is_valid(m: npt.ArrayLike, tol: float = VALID_TOL) -> bool | npt.NDArray[np.bool_]:
    m = _as_matrix(m)
    m1, m2, m3 = m[..., :, 0], m[..., :, 1], m[..., :, 2]
    norms_ok = np.all(np.abs(np.linalg.norm(m, axis=-2) - 1.0) <= tol, axis=-1)
    cross_ok = np.all(np.abs(np.cross(m1, m2) - m3) <= tol, axis=-1)
    det_ok = np.abs(np.linalg.det(m) - 1.0) <= tol
    finite = np.all(np.isfinite(m), axis=(-2, -1))
    valid = finite & norms_ok & cross_ok & det_ok
    if valid.ndim == 0:
        return bool(valid)
    return valid


def vec(m: npt.ArrayLike) -> FloatArray:
    """Column-major flattening (m1, m2, m3)."""
    m = _as_matrix(m)
    return np.swapaxes(m, -1, -2).reshape(*m.shape[:-2], 9)


def unvec(v: npt.ArrayLike) -> FloatArray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1:] != (9,):
        raise DataError(f"expected (..., 9) vectors, got shape {v.shape}")
    return np.swapaxes(v.reshape(*v.shape[:-1], 3, 3), -1, -2)


def rotation_angle(r: npt.ArrayLike) -> FloatArray:
    """Angle of the rotation in [0, pi]."""
    r = _as_matrix(r)
    sin_theta = np.linalg.norm(_skew_part(r), axis=-1)
    cos_theta = 0.5 * (np.trace(r, axis1=-2, axis2=-1) - 1.0)
    return np.arctan2(sin_theta, cos_theta)


def rot_x(angle: npt.ArrayLike) -> RotationMatrix:
    return exp_so3(np.multiply.outer(np.asarray(angle, dtype=np.float64), [1.0, 0.0, 0.0]))


def rot_y(angle: npt.ArrayLike) -> RotationMatrix:
    return exp_so3(np.multiply.outer(np.asarray(angle, dtype=np.float64), [0.0, 1.0, 0.0]))


def rot_z(angle: npt.ArrayLike) -> RotationMatrix:
    return exp_so3(np.multiply.outer(np.asarray(angle, dtype=np.float64), [0.0, 0.0, 1.0]))
