import numpy as np
import pytest

from python_rotkit import autodiff as ad
from python_rotkit import learn, projections, so3
from python_rotkit.autodiff import DiffValue
from python_rotkit.const import MetricType, PickingPolicy, ProjectionType, RepresentationType, TargetSpace
from python_rotkit.exceptions import DataError, NumericalError
from python_rotkit.model import LossSpec


def _rel_err(analytic, numeric):
    return np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12)


def _check(fn_diff, x, rtol=1e-4):
    """Compare the tape gradient of a scalar function with central differences."""
    leaf = DiffValue(np.array(x, dtype=np.float64))
    root = fn_diff(leaf)
    ad.backward(root)
    numeric = projections.finite_diff_grad(lambda v: float(fn_diff(DiffValue(v)).value), x)
    assert _rel_err(leaf.adjoint, numeric) < rtol


def test_broadcast_add_and_mul(rng):
    x = DiffValue(rng.normal(size=(5, 4)))
    b = DiffValue(rng.normal(size=4))
    root = ((x + b) * b).sum()
    ad.backward(root)
    assert np.allclose(x.adjoint, np.broadcast_to(b.value, (5, 4)))
    assert np.allclose(b.adjoint, np.sum(x.value + 2.0 * b.value, axis=0))


def test_ndarray_on_the_left_defers_to_tape(rng):
    w = DiffValue(rng.normal(size=(3, 2)))
    a = rng.normal(size=(4, 3))
    out = a @ w
    assert isinstance(out, DiffValue)
    out2 = np.ones(2) - w
    assert isinstance(out2, DiffValue)
    ad.backward((out.sum() + out2.sum()))
    assert np.allclose(w.adjoint, a.sum(axis=0)[:, None] - 1.0)


def test_shared_node_accumulates():
    x = DiffValue(3.0)
    y = x * x + x
    ad.backward(y)
    assert x.adjoint == pytest.approx(7.0)


def test_backward_needs_scalar_root():
    with pytest.raises(DataError, match="scalar root"):
        ad.backward(DiffValue(np.ones(3)))


def test_cycle_detection():
    a = DiffValue(1.0)
    b = a * 2.0
    a.parents = ((b, lambda g: g),)
    with pytest.raises(NumericalError, match="cycle"):
        ad.backward(b)


def test_getitem_stack_concatenate(rng):
    x = DiffValue(rng.normal(size=(4, 3)))
    parts = ad.concatenate([x[:, :1], x[:, 1:]], axis=-1)
    stacked = ad.stack([parts, x], axis=0)
    ad.backward((stacked * stacked).sum())
    assert np.allclose(x.adjoint, 4.0 * x.value)


def test_sqrt_and_relu_at_zero():
    x = DiffValue(np.array([0.0, 4.0]))
    ad.backward(ad.sqrt(x).sum())
    assert np.allclose(x.adjoint, [0.0, 0.25])
    y = DiffValue(np.array([-1.0, 0.0, 2.0]))
    ad.backward(ad.relu(y).sum())
    assert y.adjoint.tolist() == [0.0, 0.0, 1.0]


def test_arccos_is_clamped():
    x = DiffValue(np.array([1.0, 0.5]))
    out = ad.arccos(x)
    ad.backward(out.sum())
    assert np.isfinite(out.value).all()
    assert x.adjoint[0] == 0.0
    assert x.adjoint[1] == pytest.approx(-1.0 / np.sqrt(0.75))


def test_vec_matches_numpy(rng):
    m = rng.normal(size=(2, 3, 3))
    assert np.array_equal(ad.vec(DiffValue(m)).value, so3.vec(m))


def test_dense_layer_gradient(rng):
    x = rng.normal(size=(8, 5))
    w = rng.normal(size=(5, 3))
    b = rng.normal(size=3)
    c = rng.normal(size=(8, 3))
    _check(lambda v: ((x @ v + b) * c).sum(), w)
    _check(lambda v: ((x @ w + v) * c).sum(), b)


def test_relu_gradient(rng):
    x = rng.normal(size=(100,))
    x = x[np.abs(x) > 1e-3]
    c = rng.normal(size=x.shape)
    _check(lambda v: (ad.relu(v) * c).sum(), x)


def test_gso_node_gradient(rng):
    checked = 0
    while checked < 100:
        x = rng.normal(size=6)
        if np.linalg.norm(np.cross(x[:3], x[3:])) < 1e-2:
            continue
        c = rng.normal(size=(3, 3))
        _check(lambda v, c=c: (ad.gso(v) * c).sum(), x)
        checked += 1


def test_svd_plus_node_gradient(rng):
    checked = 0
    while checked < 100:
        x = rng.normal(size=9)
        signed = np.linalg.svd(so3.unvec(x), compute_uv=False)
        signed[2] *= np.sign(np.linalg.det(so3.unvec(x)))
        if signed[1] + signed[2] < 5e-2:
            continue
        c = rng.normal(size=(3, 3))
        _check(lambda v, c=c: (ad.svd_plus(v) * c).sum(), x)
        checked += 1


def test_quat_to_matrix_node(rng):
    q = rng.normal(size=(50, 4))
    unit = q / np.linalg.norm(q, axis=-1, keepdims=True)
    assert np.allclose(ad.quat_to_matrix(DiffValue(q)).value, so3.quaternion_matrix(unit), atol=1e-12)
    c = rng.normal(size=(50, 3, 3))
    _check(lambda v: (ad.quat_to_matrix(v) * c).sum(), q)


def test_quat_to_matrix_rejects_zero():
    with pytest.raises(NumericalError, match="zero quaternion"):
        ad.quat_to_matrix(DiffValue(np.zeros(4)))


def _unit(rng, n, d):
    v = rng.normal(size=(n, d))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


_LOSS_CASES = {
    "l2": (LossSpec(MetricType.L2, representation=RepresentationType.EXP), 3),
    "l1": (LossSpec(MetricType.L1, representation=RepresentationType.EXP), 3),
    "mse": (LossSpec(MetricType.MSE, representation=RepresentationType.EXP), 3),
    "mae": (LossSpec(MetricType.MAE, representation=RepresentationType.EXP), 3),
    "cosine": (LossSpec(MetricType.COSINE, representation=RepresentationType.QUAT), 4),
    "angular": (LossSpec(MetricType.ANGULAR, representation=RepresentationType.QUAT), 4),
    "l2_normalized": (LossSpec(MetricType.L2_NORMALIZED, representation=RepresentationType.QUAT), 4),
    "quat_pick_i": (LossSpec(MetricType.QUAT_PICK_I, representation=RepresentationType.QUAT), 4),
    "quat_pick_ii": (LossSpec(MetricType.QUAT_PICK_II, representation=RepresentationType.QUAT), 4),
    "mse picked": (
        LossSpec(MetricType.MSE, picking=PickingPolicy.QUAT_PICK_I, representation=RepresentationType.QUAT),
        4,
    ),
    "l2 sign picked": (
        LossSpec(MetricType.L2, picking=PickingPolicy.QUAT_PICK_II, representation=RepresentationType.QUAT),
        4,
    ),
    "euler_pick": (LossSpec(MetricType.EULER_PICK, representation=RepresentationType.EULER), 3),
    "chordal gso": (
        LossSpec(MetricType.CHORDAL, ProjectionType.GSO, target_space=TargetSpace.SO3, representation=RepresentationType.SIXD),
        6,
    ),
    "chordal_sq svd_plus": (
        LossSpec(
            MetricType.CHORDAL_SQ,
            ProjectionType.SVD_PLUS,
            target_space=TargetSpace.SO3,
            representation=RepresentationType.NINED,
        ),
        9,
    ),
    "geodesic svd_plus": (
        LossSpec(
            MetricType.GEODESIC,
            ProjectionType.SVD_PLUS,
            target_space=TargetSpace.SO3,
            representation=RepresentationType.NINED,
        ),
        9,
    ),
    "chordal quat": (
        LossSpec(MetricType.CHORDAL, target_space=TargetSpace.SO3, representation=RepresentationType.QUAT),
        4,
    ),
}


@pytest.mark.parametrize("name", list(_LOSS_CASES), ids=list(_LOSS_CASES))
def test_loss_gradients(name, rng):
    spec, width = _LOSS_CASES[name]
    prediction = rng.normal(size=(100, width))
    if spec.target_space is TargetSpace.SO3:
        target = so3.sample_uniform(rng, 100)
        if spec.projection is ProjectionType.SVD_PLUS:
            # well clear of the svd_plus and geodesic singular sets
            prediction = so3.vec(target) + 0.3 * rng.normal(size=(100, 9))
    elif spec.representation is RepresentationType.QUAT:
        target = _unit(rng, 100, 4)
        # stay off the kink where t and -t are equally close
        sign = rng.choice([-1.0, 1.0], size=(100, 1))
        prediction = sign * target + 0.3 * prediction
    elif spec.representation is RepresentationType.EULER:
        target = rng.uniform(-1.0, 1.0, size=(100, 3))
    else:
        target = rng.normal(size=(100, width))
    _check(lambda v: learn.loss(spec, v, target), prediction)
