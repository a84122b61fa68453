import logging
import math

import numpy as np
import pytest

from python_rotkit import metrics, projections, so3
from python_rotkit.exceptions import DataError, SingularInputError
from python_rotkit.model import SixD


def _well_conditioned(rng, n, min_det=0.1):
    m = rng.normal(size=(4 * n, 3, 3))
    return m[np.abs(np.linalg.det(m)) > min_det][:n]


def test_svd3_reconstructs(rng):
    m = rng.normal(size=(500, 3, 3))
    factors = projections.svd3(m)
    assert np.allclose(factors.reconstruct(), m, atol=1e-12)
    assert np.allclose(np.swapaxes(factors.u, -1, -2) @ factors.u, np.eye(3), atol=1e-12)
    assert np.allclose(np.swapaxes(factors.v, -1, -2) @ factors.v, np.eye(3), atol=1e-12)
    assert np.all(np.diff(factors.sigma, axis=-1) <= 0.0)
    assert np.all(factors.sigma >= 0.0)
    assert np.allclose(factors.sigma, np.linalg.svd(m, compute_uv=False), atol=1e-12)


@pytest.mark.parametrize(
    "m",
    [
        np.zeros((3, 3)),
        np.outer([1.0, 2.0, 3.0], [0.5, -1.0, 2.0]),
        np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 0.0]]),
    ],
    ids=["rank 0", "rank 1", "rank 2"],
)
def test_svd3_rank_deficient(m):
    factors = projections.svd3(m)
    assert np.allclose(factors.reconstruct(), m, atol=1e-12)
    assert np.allclose(factors.u.T @ factors.u, np.eye(3), atol=1e-12)


def test_svd3_rejects_bad_input():
    with pytest.raises(DataError, match="3, 3"):
        projections.svd3(np.zeros((2, 3)))
    with pytest.raises(DataError, match="non-finite"):
        projections.svd3(np.full((3, 3), np.nan))


def test_svd_plus_gives_rotations(rng):
    r = projections.svd_plus(rng.normal(size=(500, 3, 3)))
    assert np.all(so3.is_valid(r))


def test_svd_plus_fixes_rotations(rotations):
    assert np.allclose(projections.svd_plus(rotations), rotations, atol=1e-12)


def test_svd_plus_is_never_beaten(rng):
    m = _well_conditioned(rng, 1000)
    best = projections.svd_plus(m)
    candidates = so3.sample_uniform(np.random.default_rng(99), 10000)
    # ||R - M||^2 = 3 + ||M||^2 - 2 <vec R, vec M>
    sq_m = np.sum(m**2, axis=(-2, -1))
    inner = so3.vec(candidates) @ so3.vec(m).T
    random_best = np.sqrt(np.maximum(3.0 + sq_m - 2.0 * inner.max(axis=0), 0.0))
    ours = np.linalg.norm(best - m, axis=(-2, -1))
    assert np.all(ours <= random_best + 1e-9)


def test_svd_plus_warns_near_singular(caplog):
    with caplog.at_level(logging.WARNING):
        r = projections.svd_plus(np.diag([1.0, 1.0, 1e-8]))
    assert "near singular" in caplog.text
    assert so3.is_valid(r)


def test_gso_completes_columns(rotations):
    sixd = so3.vec(rotations)[..., :6]
    assert np.allclose(projections.gso(sixd), rotations, atol=1e-12)
    assert np.allclose(projections.gso(SixD(sixd)), rotations, atol=1e-12)


def test_gso_example():
    r = projections.gso([2.0, 0.0, 0.0, 1.0, 3.0, 0.0])
    assert np.allclose(r, np.eye(3))


@pytest.mark.parametrize(
    "values",
    [
        [0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [1.0, 2.0, 3.0, -2.0, -4.0, -6.0],
    ],
    ids=["zero first", "zero second", "parallel"],
)
def test_gso_degenerate_inputs(values):
    assert projections.gso_degenerate(values)
    with pytest.raises(SingularInputError):
        projections.gso(values)


def test_gso_degenerate_mask(rng):
    values = rng.normal(size=(10, 6))
    values[3, 3:] = 2.0 * values[3, :3]
    mask = projections.gso_degenerate(values)
    assert mask.tolist() == [i == 3 for i in range(10)]


def test_weighted_procrustes_uniform_weights_is_svd_plus(rng):
    m = _well_conditioned(rng, 200)
    assert np.allclose(projections.weighted_procrustes(m, (1.0, 1.0, 1.0)), projections.svd_plus(m), atol=1e-12)


def test_weighted_procrustes_limit_is_gso(rng):
    columns = rng.normal(size=(2000, 3, 2))
    nu1, nu2 = columns[..., 0], columns[..., 1]
    # keep the columns at least ~3 degrees apart
    sine = np.linalg.norm(np.cross(nu1, nu2), axis=-1) / np.linalg.norm(nu1, axis=-1)
    keep = np.nonzero(sine > 0.05 * np.linalg.norm(nu2, axis=-1))[0][:1000]
    assert len(keep) == 1000
    columns = columns[keep]
    sixd = np.concatenate([nu1[keep], nu2[keep]], axis=-1)
    limit = projections.weighted_procrustes(columns, (1.0, 1e-6, 0.0))
    assert np.max(metrics.chordal(projections.gso(sixd), limit)) < 1e-4


def test_weighted_procrustes_rejects_bad_weights():
    with pytest.raises(DataError, match="nonnegative"):
        projections.weighted_procrustes(np.eye(3), (1.0, -1.0, 0.0))
    with pytest.raises(DataError, match="nonnegative"):
        projections.weighted_procrustes(np.eye(3), (1.0, 1.0))


def test_finite_diff_grad():
    grad = projections.finite_diff_grad(lambda x: float(np.sum(x**2)), [1.0, -2.0, 0.5])
    assert np.allclose(grad, [2.0, -4.0, 1.0])


def test_gso_vjp_matches_finite_differences(rng):
    checked = 0
    while checked < 100:
        x = rng.normal(size=6)
        if np.linalg.norm(np.cross(x[:3], x[3:])) < 1e-2:
            continue
        cotangent = rng.normal(size=(3, 3))
        numeric = projections.finite_diff_grad(lambda v, c=cotangent: float(np.sum(c * projections.gso(v))), x)
        analytic = projections.gso_vjp(x, cotangent)
        assert np.linalg.norm(analytic - numeric) < 1e-4 * np.linalg.norm(numeric) + 1e-10
        checked += 1


def test_svd_plus_vjp_matches_finite_differences(rng):
    checked = 0
    while checked < 100:
        m = rng.normal(size=(3, 3))
        factors = projections.svd3(m)
        s = factors.sigma.copy()
        s[2] *= math.copysign(1.0, np.linalg.det(m))
        if min(s[0] + s[1], s[0] + s[2], s[1] + s[2]) < 5e-2:
            continue
        cotangent = rng.normal(size=(3, 3))
        numeric = projections.finite_diff_grad(
            lambda v, c=cotangent: float(np.sum(c * projections.svd_plus(v))), m
        )
        analytic = projections.svd_plus_vjp(m, cotangent)
        assert np.linalg.norm(analytic - numeric) < 1e-4 * np.linalg.norm(numeric) + 1e-10
        checked += 1
