"""Distances between representation vectors and between rotations.

Vector metrics reduce over the last axis; matrix metrics over the last two.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable

import numpy as np
import numpy.typing as npt

from python_rotkit import so3
from python_rotkit.const import (
    FIELD_METRICS,
    MATRIX_METRICS,
    NONZERO_NORM,
    VALID_TOL,
    MetricType,
)
from python_rotkit.exceptions import ConfigError, DataError
from python_rotkit.model import FloatArray, Representation

_LOGGER = logging.getLogger(__name__)

Operand = Representation | npt.ArrayLike


def _values(x: Operand) -> FloatArray:
    if isinstance(x, Representation):
        return x.values
    return np.asarray(x, dtype=np.float64)


def _norm(x: FloatArray) -> FloatArray:
    return np.linalg.norm(x, axis=-1)


def _nonzero_norm(x: FloatArray, what: str) -> FloatArray:
    norm = _norm(x)
    if np.any(norm <= NONZERO_NORM):
        raise DataError(f"{what} has a zero-length operand")
    return norm


def l2(a: Operand, b: Operand) -> FloatArray:
    return _norm(_values(a) - _values(b))


def l1(a: Operand, b: Operand) -> FloatArray:
    return np.sum(np.abs(_values(a) - _values(b)), axis=-1)


def mse(a: Operand, b: Operand) -> FloatArray:
    return np.mean((_values(a) - _values(b)) ** 2, axis=-1)


def mae(a: Operand, b: Operand) -> FloatArray:
    return np.mean(np.abs(_values(a) - _values(b)), axis=-1)


def _cosine(a: FloatArray, b: FloatArray, what: str) -> FloatArray:
    return np.sum(a * b, axis=-1) / (_nonzero_norm(a, what) * _nonzero_norm(b, what))


def cosine_distance(a: Operand, b: Operand) -> FloatArray:
    """1 - cos of the angle between a and b, in [0, 2]. Not a metric."""
    return 1.0 - _cosine(_values(a), _values(b), "cosine_distance")


def angular_distance(a: Operand, b: Operand) -> FloatArray:
    return np.arccos(np.clip(_cosine(_values(a), _values(b), "angular_distance"), -1.0, 1.0))


def l2_normalized(y: Operand, z: Operand) -> FloatArray:
    """Euclidean distance after normalizing the first operand to unit length."""
    y_arr = _values(y)
    return _norm(y_arr / _nonzero_norm(y_arr, "l2_normalized")[..., None] - _values(z))


def quat_pick_i(q1: Operand, q2: Operand) -> FloatArray:
    a, b = _values(q1), _values(q2)
    return np.minimum(_norm(a - b), _norm(a + b))


def quat_pick_ii(q1: Operand, q2: Operand) -> FloatArray:
    return 1.0 - np.abs(np.sum(_values(q1) * _values(q2), axis=-1))


def _check_canonical_beta(e: FloatArray) -> None:
    beta = e[..., 1]
    if np.any(np.abs(beta) > math.pi / 2.0 + VALID_TOL):
        raise DataError("euler_pick needs canonical beta in [-pi/2, pi/2]")


def euler_pick(e1: Operand, e2: Operand) -> FloatArray:
    """Euclidean norm of the per-angle wrapped differences."""
    a, b = _values(e1), _values(e2)
    _check_canonical_beta(a)
    _check_canonical_beta(b)
    diff = np.abs(a - b)
    wrapped = np.minimum(diff, 2.0 * math.pi - diff)
    return _norm(wrapped)


def chordal(r1: npt.ArrayLike, r2: npt.ArrayLike) -> FloatArray:
    """Frobenius distance, computed on vec() so it equals the NineD vector distance."""
    return _norm(so3.vec(r1) - so3.vec(r2))


def chordal_sq(r1: npt.ArrayLike, r2: npt.ArrayLike) -> FloatArray:
    return np.sum((so3.vec(r1) - so3.vec(r2)) ** 2, axis=-1)


def chordal_mse(r1: npt.ArrayLike, r2: npt.ArrayLike) -> float:
    """Mean squared chordal distance over a set of rotation pairs."""
    return float(np.mean(chordal_sq(r1, r2)))


def geodesic(r1: npt.ArrayLike, r2: npt.ArrayLike) -> FloatArray:
    r1 = np.asarray(r1, dtype=np.float64)
    r2 = np.asarray(r2, dtype=np.float64)
    trace = np.trace(r1 @ np.swapaxes(r2, -1, -2), axis1=-2, axis2=-1)
    return np.arccos(np.clip(0.5 * (trace - 1.0), -1.0, 1.0))


_VECTOR_FUNCTIONS: dict[MetricType, Callable[[Operand, Operand], FloatArray]] = {
    MetricType.L2: l2,
    MetricType.L1: l1,
    MetricType.MSE: mse,
    MetricType.MAE: mae,
    MetricType.COSINE: cosine_distance,
    MetricType.ANGULAR: angular_distance,
    MetricType.L2_NORMALIZED: l2_normalized,
    MetricType.QUAT_PICK_I: quat_pick_i,
    MetricType.QUAT_PICK_II: quat_pick_ii,
    MetricType.EULER_PICK: euler_pick,
}

_MATRIX_FUNCTIONS: dict[MetricType, Callable[[npt.ArrayLike, npt.ArrayLike], FloatArray]] = {
    MetricType.CHORDAL: chordal,
    MetricType.CHORDAL_SQ: chordal_sq,
    MetricType.GEODESIC: geodesic,
}


def distance(metric: MetricType, a: Operand, b: Operand) -> FloatArray:
    """Evaluate any metric; matrix metrics expect (..., 3, 3) operands."""
    if metric in MATRIX_METRICS:
        return _MATRIX_FUNCTIONS[metric](_values(a), _values(b))
    return _VECTOR_FUNCTIONS[metric](a, b)


# Gradient fields of d(y, z) over the plane

_FIELD_STEP = 1e-6


def _analytic_gradient(
    metric: MetricType, y: FloatArray, z: FloatArray
) -> tuple[FloatArray, npt.NDArray[np.bool_]]:
    y_norm = _norm(y)
    z_hat = z / _norm(z)
    at_origin = y_norm <= NONZERO_NORM
    safe_norm = np.where(at_origin, 1.0, y_norm)
    u = y / safe_norm[..., None]
    cos = np.clip(np.sum(u * z_hat, axis=-1), -1.0, 1.0)

    if metric is MetricType.L2:
        diff = y - z
        dist = _norm(diff)
        defined = dist > NONZERO_NORM
        grad = diff / np.where(defined, dist, 1.0)[..., None]
    elif metric is MetricType.L2_NORMALIZED:
        dist = _norm(u - z)
        defined = ~at_origin & (dist > NONZERO_NORM)
        grad = (-z + np.sum(u * z, axis=-1, keepdims=True) * u) / (
            np.where(defined, dist, 1.0) * safe_norm
        )[..., None]
    elif metric is MetricType.COSINE:
        defined = ~at_origin
        grad = -(z_hat - cos[..., None] * u) / safe_norm[..., None]
    else:
        sine = np.sqrt(np.maximum(1.0 - cos * cos, 0.0))
        defined = ~at_origin & (sine > NONZERO_NORM)
        grad = -(z_hat - cos[..., None] * u) / (safe_norm * np.where(defined, sine, 1.0))[..., None]
    return np.where(defined[..., None], grad, 0.0), defined


def _finite_difference_gradient(
    metric: MetricType, y: FloatArray, z: FloatArray, defined: npt.NDArray[np.bool_]
) -> FloatArray:
    fn = _VECTOR_FUNCTIONS[metric]
    grad = np.zeros_like(y)
    safe_y = np.where(defined[..., None], y, z)
    for axis in range(y.shape[-1]):
        step = np.zeros(y.shape[-1])
        step[axis] = _FIELD_STEP
        grad[..., axis] = (fn(safe_y + step, z) - fn(safe_y - step, z)) / (2.0 * _FIELD_STEP)
    return np.where(defined[..., None], grad, 0.0)


def gradient_field(
    metric: MetricType,
    target: npt.ArrayLike,
    grid: npt.ArrayLike,
    *,
    finite_difference: bool = False,
) -> tuple[FloatArray, FloatArray, npt.NDArray[np.bool_]]:
    """Negative gradient of d(y, target) at every grid point.

    Returns ``(points, -grad, defined)``. Where the gradient does not exist the
    vector is zero and ``defined`` is False.
    """
    if metric not in FIELD_METRICS:
        raise ConfigError(f"gradient_field supports {[m.value for m in FIELD_METRICS]}, not {metric.value}")
    z = np.asarray(target, dtype=np.float64)
    points = np.asarray(grid, dtype=np.float64)
    if z.shape != (2,) or points.shape[-1:] != (2,):
        raise DataError("gradient_field works on 2D operands")
    _nonzero_norm(z, "gradient_field target")

    grad, defined = _analytic_gradient(metric, points, z)
    if finite_difference:
        grad = _finite_difference_gradient(metric, points, z, defined)
    _LOGGER.debug(
        "gradient_field %s: %d points, %d undefined", metric.value, len(points), int((~defined).sum())
    )
    return points, -grad, defined
