import numpy as np
from scipy.stats import kstest

from python_rotkit import experiments, metrics, so3
from python_rotkit.const import ExperimentType, ProjectionType
from python_rotkit.model import GradPathsConfig, GradRatioConfig

from .conftest import SEED


async def test_svd_plus_paths_reach_the_optimum():
    records, meta = await experiments.run_experiment(
        ExperimentType.GRADPATHS, GradPathsConfig(projections=("svd_plus",)), SEED, workers=4
    )
    assert records
    assert meta["reached_svd_plus"] >= 0.9 * 50


def test_parallel_gso_start_is_flagged():
    init = np.array([0.5, -1.0, 1.5, -1.0, 2.0, -3.0])
    result = experiments.gradient_paths(ProjectionType.GSO, np.random.default_rng(SEED), init=init)
    assert result.unstable


async def test_gradient_ratio_density_full_size():
    records, meta = await experiments.run_experiment(ExperimentType.GRADRATIO, GradRatioConfig(), SEED)
    assert meta["median_abs_log_ratio_svd_plus"] < meta["median_abs_log_ratio_gso"]
    assert len(records) == meta["rows"]


def test_haar_angle_distribution_at_full_size():
    angles = metrics.geodesic(so3.sample_uniform(np.random.default_rng(SEED), 100000), np.eye(3))
    result = kstest(angles, lambda a: (a - np.sin(a)) / np.pi)
    assert result.statistic < 0.02
