import asyncio

import pytest

from python_rotkit.experiments import fourier_experiment, toy_rotation_estimation
from python_rotkit.model import FourierConfig, RunRecord, ToyEstimationConfig

SEED = 20240607


@pytest.fixture(scope="session")
def fourier_records() -> list[RunRecord]:
    config = FourierConfig(nb=(1, 2, 3), reps=("euler", "quat", "quat_aug", "sixd", "nined"), seeds=10)
    return asyncio.run(fourier_experiment(config, SEED, workers=4))


@pytest.fixture(scope="session")
def toy_records() -> list[RunRecord]:
    config = ToyEstimationConfig(
        variants=(
            "euler:mse",
            "quat:mse",
            "quat_nohs:mse",
            "quat_rf:mse",
            "quat_rf:mse_dp",
            "sixd_gso:chordal_sq",
            "nined_svd:chordal_sq",
        ),
        seeds=10,
    )
    return asyncio.run(toy_rotation_estimation(config, SEED, workers=4))
