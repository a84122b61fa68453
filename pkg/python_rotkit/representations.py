"""Rotation representations and their maps to and from rotation matrices.

Every representation has a map ``f`` onto SO(3) (``to_matrix``) and a map ``g``
back (``from_matrix``) with ``f(g(R)) == R``. Double-covering representations
also get a partner with the same rotation and a half-space canonicalization.
"""

from __future__ import annotations

import logging
import math

import numpy as np
import numpy.typing as npt

from python_rotkit import projections, so3
from python_rotkit.const import (
    GIMBAL_TOL,
    IDENTITY_TOL,
    NONZERO_NORM,
    QUAT_NORM_TOL,
    SMALL_ROTATION_BOUND,
    RepresentationType,
)
from python_rotkit.exceptions import ConfigError, DataError
from python_rotkit.model import (
    MRP,
    REPRESENTATION_CLASSES,
    Angle2D,
    AxisAngle,
    EulerXYZ,
    ExpCoord,
    FloatArray,
    NineD,
    Representation,
    RotationMatrix,
    SinCos2D,
    SixD,
    UnitQuaternion,
)

_LOGGER = logging.getLogger(__name__)

_TWO_PI = 2.0 * math.pi
# ||omega|| / angle / ||p|| within this of the boundary counts as on it
_BOUNDARY_TOL = 1e-12
_ZERO_ANGLE_AXIS = np.array([1.0, 0.0, 0.0])


def wrap_angle(angle: npt.ArrayLike) -> FloatArray:
    """Principal value in [-pi, pi)."""
    return np.mod(np.asarray(angle, dtype=np.float64) + math.pi, _TWO_PI) - math.pi


def _check_unit(values: FloatArray, what: str) -> None:
    deviation = np.abs(np.linalg.norm(values, axis=-1) - 1.0)
    if np.any(deviation > QUAT_NORM_TOL):
        raise DataError(f"{what} must have unit norm, deviation {float(np.max(deviation)):.3g}")


def _positive_largest(v: FloatArray) -> FloatArray:
    """+1 where the largest-magnitude component of v is nonnegative, else -1."""
    largest = np.take_along_axis(v, np.argmax(np.abs(v), axis=-1)[..., None], axis=-1)[..., 0]
    return np.where(largest < 0.0, -1.0, 1.0)


# Euler angles, R = Rz(gamma) Ry(beta) Rx(alpha)


def euler_to_matrix(e: EulerXYZ) -> RotationMatrix:
    ca, sa = np.cos(e.alpha), np.sin(e.alpha)
    cb, sb = np.cos(e.beta), np.sin(e.beta)
    cg, sg = np.cos(e.gamma), np.sin(e.gamma)
    return np.stack(
        [
            np.stack([cg * cb, cg * sb * sa - sg * ca, cg * sb * ca + sg * sa], axis=-1),
            np.stack([sg * cb, sg * sb * sa + cg * ca, sg * sb * ca - cg * sa], axis=-1),
            np.stack([-sb, cb * sa, cb * ca], axis=-1),
        ],
        axis=-2,
    )


def matrix_to_euler(r: RotationMatrix) -> EulerXYZ:
    """Canonical angles with beta in [-pi/2, pi/2] and alpha, gamma in [-pi, pi).

    In gimbal lock gamma is 0 and the whole in-plane rotation goes to alpha.
    """
    r = np.asarray(r, dtype=np.float64)
    cos_beta = np.hypot(r[..., 0, 0], r[..., 1, 0])
    beta = np.arctan2(-r[..., 2, 0], cos_beta)
    locked = cos_beta < GIMBAL_TOL
    alpha = np.where(
        locked,
        np.arctan2(-r[..., 2, 0] * r[..., 0, 1], r[..., 1, 1]),
        np.arctan2(r[..., 2, 1], r[..., 2, 2]),
    )
    gamma = np.where(locked, 0.0, np.arctan2(r[..., 1, 0], r[..., 0, 0]))
    if np.any(locked):
        _LOGGER.debug("matrix_to_euler hit gimbal lock for %d matrices", int(np.count_nonzero(locked)))
    return EulerXYZ(np.stack([wrap_angle(alpha), beta, wrap_angle(gamma)], axis=-1))


# Unit quaternions, scalar first


def canonical_quaternion(q: npt.ArrayLike) -> FloatArray:
    """Flip q so that w > 0, or at w == 0 the first nonzero of (x, y, z) is positive."""
    q = np.asarray(q, dtype=np.float64)
    xyz = q[..., 1:]
    nonzero = xyz != 0.0
    first = np.take_along_axis(xyz, np.argmax(nonzero, axis=-1)[..., None], axis=-1)[..., 0]
    flip = (q[..., 0] < 0.0) | ((q[..., 0] == 0.0) & (first < 0.0))
    return np.where(flip[..., None], -q, q)


def is_canonical_quaternion(q: UnitQuaternion) -> bool:
    return bool(np.array_equal(canonical_quaternion(q.values), q.values))


def quat_to_matrix(q: UnitQuaternion) -> RotationMatrix:
    _check_unit(q.values, "quaternion")
    return so3.quaternion_matrix(q.values)


def matrix_to_quat(r: RotationMatrix) -> UnitQuaternion:
    return UnitQuaternion(canonical_quaternion(shepperd_quaternion(r).values))


def shepperd_quaternion(r: RotationMatrix) -> UnitQuaternion:
    """Shepperd's method: branch on the largest of trace and diagonal.

    The sign is not canonicalized: the component the branch solves for is
    positive, so w < 0 occurs whenever the branch is not the trace branch.
    """
    r = np.asarray(r, dtype=np.float64)
    r00, r11, r22 = r[..., 0, 0], r[..., 1, 1], r[..., 2, 2]
    trace = r00 + r11 + r22
    branch = np.argmax(np.stack([trace, r00, r11, r22], axis=-1), axis=-1)

    def safe(x: FloatArray) -> FloatArray:
        return np.sqrt(np.maximum(x, 0.0)) / 2.0

    w_b = safe(1.0 + trace)
    x_b = safe(1.0 + r00 - r11 - r22)
    y_b = safe(1.0 - r00 + r11 - r22)
    z_b = safe(1.0 - r00 - r11 + r22)

    d21, d02, d10 = r[..., 2, 1] - r[..., 1, 2], r[..., 0, 2] - r[..., 2, 0], r[..., 1, 0] - r[..., 0, 1]
    s01, s02, s12 = r[..., 0, 1] + r[..., 1, 0], r[..., 0, 2] + r[..., 2, 0], r[..., 1, 2] + r[..., 2, 1]

    def quarter(x: FloatArray) -> FloatArray:
        return 4.0 * np.where(x > 0.0, x, 1.0)

    candidates = np.stack(
        [
            np.stack([w_b, d21 / quarter(w_b), d02 / quarter(w_b), d10 / quarter(w_b)], axis=-1),
            np.stack([d21 / quarter(x_b), x_b, s01 / quarter(x_b), s02 / quarter(x_b)], axis=-1),
            np.stack([d02 / quarter(y_b), s01 / quarter(y_b), y_b, s12 / quarter(y_b)], axis=-1),
            np.stack([d10 / quarter(z_b), s02 / quarter(z_b), s12 / quarter(z_b), z_b], axis=-1),
        ],
        axis=-2,
    )
    q = np.take_along_axis(candidates, branch[..., None, None], axis=-2)[..., 0, :]
    return UnitQuaternion(q / np.linalg.norm(q, axis=-1, keepdims=True))


# Axis-angle, exponential coordinates, modified Rodrigues parameters


def aa_to_matrix(aa: AxisAngle) -> RotationMatrix:
    _check_unit(aa.axis, "axis")
    return so3.exp_so3(aa.angle[..., None] * aa.axis)


def exp_to_aa(omega: ExpCoord) -> AxisAngle:
    """Axis (1, 0, 0) stands in for the arbitrary axis of a zero rotation."""
    angle = np.linalg.norm(omega.values, axis=-1)
    zero = angle < NONZERO_NORM
    axis = np.where(
        zero[..., None], _ZERO_ANGLE_AXIS, omega.values / np.where(zero, 1.0, angle)[..., None]
    )
    return AxisAngle.from_axis_angle(axis, np.where(zero, 0.0, angle))


def aa_to_exp(aa: AxisAngle) -> ExpCoord:
    return ExpCoord(aa.angle[..., None] * aa.axis)


def matrix_to_aa(r: RotationMatrix) -> AxisAngle:
    return exp_to_aa(matrix_to_exp(r))


def exp_to_matrix(omega: ExpCoord) -> RotationMatrix:
    return so3.exp_so3(omega.values)


def matrix_to_exp(r: RotationMatrix) -> ExpCoord:
    return ExpCoord(so3.log_so3(r))


def aa_to_mrp(aa: AxisAngle) -> MRP:
    return MRP(np.tan(aa.angle / 4.0)[..., None] * aa.axis)


def mrp_to_aa(p: MRP) -> AxisAngle:
    norm = np.linalg.norm(p.values, axis=-1)
    zero = norm < NONZERO_NORM
    axis = np.where(zero[..., None], _ZERO_ANGLE_AXIS, p.values / np.where(zero, 1.0, norm)[..., None])
    return AxisAngle.from_axis_angle(axis, 4.0 * np.arctan(norm))


def mrp_to_matrix(p: MRP) -> RotationMatrix:
    # stereographic inverse onto the unit quaternion sphere
    sq = np.sum(p.values**2, axis=-1)
    q = np.concatenate([(1.0 - sq)[..., None], 2.0 * p.values], axis=-1) / (1.0 + sq)[..., None]
    return so3.quaternion_matrix(q)


def matrix_to_mrp(r: RotationMatrix) -> MRP:
    q = matrix_to_quat(r)
    return MRP(q.xyz / (1.0 + q.w)[..., None])


# Column representations


def sixd_to_matrix(s: SixD) -> RotationMatrix:
    return projections.gso(s)


def matrix_to_sixd(r: RotationMatrix) -> SixD:
    return SixD(so3.vec(r)[..., :6])


def nined_to_matrix(n: NineD) -> RotationMatrix:
    return projections.svd_plus(n.m)


def matrix_to_nined(r: RotationMatrix) -> NineD:
    return NineD(so3.vec(r))


# SO(2)


def angle_to_sincos(a: Angle2D) -> SinCos2D:
    return SinCos2D(np.stack([np.cos(a.alpha), np.sin(a.alpha)], axis=-1))


def sincos_to_angle(s: SinCos2D) -> Angle2D:
    _check_unit(s.values, "sin-cos pair")
    return Angle2D(wrap_angle(np.arctan2(s.s, s.c))[..., None])


def _so2_matrix(angle: FloatArray) -> FloatArray:
    c, s = np.cos(angle), np.sin(angle)
    return np.stack([np.stack([c, -s], axis=-1), np.stack([s, c], axis=-1)], axis=-2)


# Dispatch


def to_matrix(rep: Representation) -> RotationMatrix:
    """Map any representation onto its rotation matrix (2x2 for the SO(2) variants)."""
    match rep:
        case EulerXYZ():
            return euler_to_matrix(rep)
        case ExpCoord():
            return exp_to_matrix(rep)
        case AxisAngle():
            return aa_to_matrix(rep)
        case UnitQuaternion():
            return quat_to_matrix(rep)
        case MRP():
            return mrp_to_matrix(rep)
        case SixD():
            return sixd_to_matrix(rep)
        case NineD():
            return nined_to_matrix(rep)
        case Angle2D():
            return _so2_matrix(rep.alpha)
        case SinCos2D():
            return _so2_matrix(sincos_to_angle(rep).alpha)
    raise ConfigError(f"unsupported representation {type(rep).__name__}")


def from_matrix(r: npt.ArrayLike, tag: RepresentationType) -> Representation:
    r = np.asarray(r, dtype=np.float64)
    if tag in (RepresentationType.ANGLE2D, RepresentationType.SINCOS2D):
        angle = Angle2D(np.arctan2(r[..., 1, 0], r[..., 0, 0])[..., None])
        angle = Angle2D(wrap_angle(angle.values))
        return angle if tag is RepresentationType.ANGLE2D else angle_to_sincos(angle)
    match tag:
        case RepresentationType.EULER:
            return matrix_to_euler(r)
        case RepresentationType.EXP:
            return matrix_to_exp(r)
        case RepresentationType.AXIS_ANGLE:
            return matrix_to_aa(r)
        case RepresentationType.QUAT:
            return matrix_to_quat(r)
        case RepresentationType.MRP:
            return matrix_to_mrp(r)
        case RepresentationType.SIXD:
            return matrix_to_sixd(r)
        case RepresentationType.NINED:
            return matrix_to_nined(r)
    raise ConfigError(f"unsupported representation tag {tag}")


def make(tag: RepresentationType, values: npt.ArrayLike) -> Representation:
    return REPRESENTATION_CLASSES[tag](np.asarray(values, dtype=np.float64))


# Double cover and half-space canonicalization


def double_cover_partner(rep: Representation) -> Representation:
    """The other preimage of the same rotation."""
    match rep:
        case UnitQuaternion():
            return UnitQuaternion(-rep.values)
        case ExpCoord():
            theta = np.linalg.norm(rep.values, axis=-1)
            if np.any(theta < NONZERO_NORM) or np.any(theta >= _TWO_PI):
                raise DataError("exponential coordinates need 0 < ||omega|| < 2 pi for a partner")
            return ExpCoord(((theta - _TWO_PI) / theta)[..., None] * rep.values)
        case AxisAngle():
            return AxisAngle(-rep.values)
        case MRP():
            sq = np.sum(rep.values**2, axis=-1)
            if np.any(sq < NONZERO_NORM**2):
                raise DataError("the zero MRP has no finite shadow")
            return MRP(-rep.values / sq[..., None])
    raise ConfigError(f"{type(rep).__name__} has no double-cover partner")


def halfspace_map(rep: Representation) -> Representation:
    """Restrict a double-covering representation to its canonical half.

    Values already in canonical form are returned unchanged, so the map is
    idempotent bit for bit.
    """
    match rep:
        case UnitQuaternion():
            return UnitQuaternion(canonical_quaternion(rep.values))
        case ExpCoord():
            return ExpCoord(_canonical_exp(rep.values))
        case AxisAngle():
            return AxisAngle(_canonical_aa(rep.values))
        case MRP():
            return MRP(_canonical_mrp(rep.values))
    raise ConfigError(f"{type(rep).__name__} has no half-space map")


def _canonical_exp(omega: FloatArray) -> FloatArray:
    theta = np.linalg.norm(omega, axis=-1)
    outside = theta > math.pi + _BOUNDARY_TOL
    wrapped = wrap_angle(theta)
    safe = np.where(theta > 0.0, theta, 1.0)
    omega = np.where(outside[..., None], (wrapped / safe)[..., None] * omega, omega)
    on_boundary = np.abs(np.linalg.norm(omega, axis=-1) - math.pi) <= _BOUNDARY_TOL
    flip = on_boundary & (_positive_largest(omega) < 0.0)
    return np.where(flip[..., None], -omega, omega)


def _canonical_aa(values: FloatArray) -> FloatArray:
    axis, angle = values[..., :3], values[..., 3]
    outside = (angle < 0.0) | (angle > math.pi + _BOUNDARY_TOL)
    wrapped = np.where(outside, wrap_angle(angle), angle)
    negative = wrapped < 0.0
    axis = np.where(negative[..., None], -axis, axis)
    angle = np.abs(wrapped)
    flip = (np.abs(angle - math.pi) <= _BOUNDARY_TOL) & (_positive_largest(axis) < 0.0)
    axis = np.where(flip[..., None], -axis, axis)
    return np.concatenate([axis, angle[..., None]], axis=-1)


def _canonical_mrp(p: FloatArray) -> FloatArray:
    sq = np.sum(p**2, axis=-1)
    outside = sq > (1.0 + _BOUNDARY_TOL) ** 2
    p = np.where(outside[..., None], -p / np.where(outside, sq, 1.0)[..., None], p)
    on_boundary = np.abs(np.linalg.norm(p, axis=-1) - 1.0) <= _BOUNDARY_TOL
    flip = on_boundary & (_positive_largest(p) < 0.0)
    return np.where(flip[..., None], -p, p)


def is_small_rotation(r: RotationMatrix) -> bool | npt.NDArray[np.bool_]:
    distance = np.linalg.norm(np.eye(3) - np.asarray(r, dtype=np.float64), axis=(-2, -1))
    small = distance <= SMALL_ROTATION_BOUND + IDENTITY_TOL
    return bool(small) if small.ndim == 0 else small


# Quaternion augmentation


def augment_quaternion_dataset(
    quats: UnitQuaternion, features: npt.ArrayLike, epsilon: float
) -> tuple[UnitQuaternion, FloatArray]:
    """Append the negation of every quaternion with scalar part below epsilon.

    Features of the appended samples are copies of the originals.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] != quats.values.shape[0]:
        raise DataError(
            f"quaternions and features differ in length: {quats.values.shape[0]} != {features.shape[0]}"
        )
    if not is_canonical_quaternion(quats):
        raise DataError("augment_quaternion_dataset expects canonical quaternions")
    mask = quats.w < epsilon
    _LOGGER.debug("dataset augmentation duplicates %d of %d quaternions", int(mask.sum()), mask.size)
    return (
        UnitQuaternion(np.concatenate([quats.values, -quats.values[mask]], axis=0)),
        np.concatenate([features, features[mask]], axis=0),
    )


def batch_augment_quaternions(
    batch: UnitQuaternion, rng: np.random.Generator, epsilon: float, flip_prob: float
) -> UnitQuaternion:
    """Negate entries with scalar part below epsilon, each with probability flip_prob."""
    draws = rng.random(batch.w.shape) < flip_prob
    flip = (batch.w < epsilon) & draws
    return UnitQuaternion(np.where(flip[..., None], -batch.values, batch.values))


def random_flip_quaternions(
    batch: UnitQuaternion, rng: np.random.Generator, flip_prob: float
) -> UnitQuaternion:
    """Multiply each quaternion by -1 with probability flip_prob, regardless of its scalar part."""
    flip = rng.random(batch.w.shape) < flip_prob
    return UnitQuaternion(np.where(flip[..., None], -batch.values, batch.values))
