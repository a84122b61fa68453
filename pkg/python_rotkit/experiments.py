"""Seeded experiments that produce RunRecord rows.

Each experiment is a pure function of its config and master seed. Independent
cells (one per seed, representation or projection) run through ``run_cells``
and own a generator derived from the master seed and the cell's indices.
"""

from __future__ import annotations

import asyncio
import logging
import math
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, fields
from functools import partial
from typing import Any, TypeVar

import numpy as np
import numpy.typing as npt

from python_rotkit import autodiff as ad
from python_rotkit import learn, metrics, projections, representations, so3
from python_rotkit.__version__ import __version__
from python_rotkit.autodiff import DiffValue
from python_rotkit.const import (
    ADAM_BETAS,
    AUGMENT_EPSILON,
    EXPERIMENT_NOTES,
    FIELD_METRICS,
    FIELD_TARGET,
    FLIP_PROBABILITY,
    FOURIER_PERIOD,
    FOURIER_REFERENCE_SIZE,
    LIPSCHITZ_PROBE_WIDTH,
    MATRIX_METRICS,
    NONZERO_NORM,
    SO3_REPRESENTATIONS,
    ExperimentType,
    MetricType,
    OptimizerType,
    PickingPolicy,
    ProjectionType,
    RepresentationType,
    TargetSpace,
)
from python_rotkit.exceptions import ConfigError, DataError, NumericalError
from python_rotkit.model import (
    MRP,
    REPRESENTATION_CLASSES,
    BenchConfig,
    Dataset,
    DistanceFieldConfig,
    EulerXYZ,
    FloatArray,
    FourierConfig,
    GradientPathResult,
    GradientRatioResult,
    GradPathsConfig,
    GradRatioConfig,
    LipschitzConfig,
    LossSpec,
    OutputHead,
    RotationMatrix,
    RunRecord,
    ToyEstimationConfig,
    TrainConfig,
    UnitQuaternion,
)

_LOGGER = logging.getLogger(__name__)

T = TypeVar("T")

_IDENTITY_VEC = so3.vec(np.eye(3))


def derive_rng(*keys: int) -> np.random.Generator:
    """Generator for one cell, keyed by the master seed and the cell's indices."""
    if any(k < 0 for k in keys):
        raise ConfigError(f"seeds and cell indices must be nonnegative, got {keys}")
    return np.random.default_rng(np.random.SeedSequence(list(keys)))


async def run_cells(cells: Sequence[Callable[[], T]], workers: int = 1) -> list[T]:
    """Run independent cells on worker threads; results keep the cell order."""
    if workers < 1:
        raise ConfigError(f"workers must be at least 1, got {workers}")
    semaphore = asyncio.Semaphore(workers)

    async def run_one(index: int, cell: Callable[[], T]) -> T:
        async with semaphore:
            _LOGGER.debug("cell %d/%d started", index + 1, len(cells))
            start = time.perf_counter()
            result = await asyncio.to_thread(cell)
            _LOGGER.debug("cell %d/%d done in %.3fs", index + 1, len(cells), time.perf_counter() - start)
            return result

    return list(await asyncio.gather(*(run_one(i, cell) for i, cell in enumerate(cells))))


def _tags(names: Sequence[str], enum: type[Any], what: str, allowed: Any = None) -> list[Any]:
    tags, errors = [], []
    for name in names:
        try:
            tag = enum(name)
        except ValueError:
            errors.append(f"unknown {what} {name!r}")
            continue
        if allowed is not None and tag not in allowed:
            errors.append(f"{what} {name!r} is not supported here")
            continue
        tags.append(tag)
    if errors:
        raise ConfigError(errors)
    return tags


# Lipschitz scan


def _directions(rng: np.random.Generator, n: int) -> FloatArray:
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _uniform_pairs(rng: np.random.Generator, n: int) -> tuple[RotationMatrix, RotationMatrix]:
    # independent draws, so the relative angle follows the Haar density
    return so3.sample_uniform(rng, n), so3.sample_uniform(rng, n)


def _boundary_pairs(
    tag: RepresentationType, rng: np.random.Generator, n: int
) -> tuple[RotationMatrix, RotationMatrix]:
    """Pairs straddling the discontinuity set of ``g`` for ``tag``."""
    width = LIPSCHITZ_PROBE_WIDTH

    def jitter(d: int) -> FloatArray:
        return rng.uniform(-width, width, (n, d))

    match tag:
        case RepresentationType.QUAT:
            q1 = np.concatenate([rng.uniform(-width, width, (n, 1)), _directions(rng, n)], axis=-1)
            q1 /= np.linalg.norm(q1, axis=-1, keepdims=True)
            q2 = q1 + jitter(4)
            q2 /= np.linalg.norm(q2, axis=-1, keepdims=True)
            return so3.quaternion_matrix(q1), so3.quaternion_matrix(q2)
        case RepresentationType.EULER:
            e1 = np.stack(
                [
                    math.pi - rng.uniform(0.0, width, n),
                    rng.uniform(-math.pi / 2.0, math.pi / 2.0, n),
                    math.pi - rng.uniform(0.0, width, n),
                ],
                axis=-1,
            )
            e2 = e1 + jitter(3)
            return (
                representations.euler_to_matrix(EulerXYZ(e1)),
                representations.euler_to_matrix(EulerXYZ(e2)),
            )
        case RepresentationType.EXP | RepresentationType.AXIS_ANGLE:
            omega = _directions(rng, n) * (math.pi - rng.uniform(0.0, width, n))[:, None]
            return so3.exp_so3(omega), so3.exp_so3(omega + jitter(3))
        case RepresentationType.MRP:
            p = _directions(rng, n) * (1.0 - rng.uniform(0.0, width, n))[:, None]
            return (
                representations.mrp_to_matrix(MRP(p)),
                representations.mrp_to_matrix(MRP(p + jitter(3))),
            )
    r1 = so3.sample_uniform(rng, n)
    return r1, r1 @ so3.exp_so3(jitter(3))


def lipschitz_scan(
    tag: RepresentationType, n_pairs: int, rng: np.random.Generator, boundary_fraction: float = 0.5
) -> list[RunRecord]:
    """Chordal distance against representation distance for rotation pairs.

    Part of the pairs are spread uniformly, the rest are probes built close
    to where ``g`` jumps.
    """
    if tag not in SO3_REPRESENTATIONS:
        raise ConfigError(f"lipschitz_scan needs an SO(3) representation, got {tag.value}")
    if not 0.0 <= boundary_fraction <= 1.0:
        raise ConfigError(f"boundary_fraction must be in [0, 1], got {boundary_fraction}")
    n_boundary = int(round(n_pairs * boundary_fraction))
    u1, u2 = _uniform_pairs(rng, n_pairs - n_boundary)
    b1, b2 = _boundary_pairs(tag, rng, n_boundary)
    r1 = np.concatenate([u1, b1])
    r2 = np.concatenate([u2, b2])

    d_so3 = metrics.chordal(r1, r2)
    d_repr = metrics.l2(representations.from_matrix(r1, tag), representations.from_matrix(r2, tag))
    _LOGGER.debug("lipschitz %s: %d pairs, max ratio %.6g", tag.value, n_pairs, _max_ratio(d_so3, d_repr))
    return [
        RunRecord(ExperimentType.LIPSCHITZ, rep=tag.value, values={"d_so3": float(c), "d_repr": float(d)})
        for c, d in zip(d_so3, d_repr, strict=True)
    ]


def _max_ratio(d_so3: FloatArray, d_repr: FloatArray) -> float:
    positive = d_so3 > 0.0
    return float(np.max(d_repr[positive] / d_so3[positive])) if np.any(positive) else 0.0


# Orientation loss shared by gradient paths and gradient ratios


_PATH_VECTORS = {
    ProjectionType.GSO: ("nu1", "nu2"),
    ProjectionType.SVD_PLUS: ("m1", "m2", "m3"),
}

_RATIO_PAIRS = {
    ProjectionType.GSO: ((0, 1),),
    ProjectionType.SVD_PLUS: ((0, 1), (0, 2), (1, 2)),
}


def orientation_loss(projection: ProjectionType, r: DiffValue) -> DiffValue:
    """Per-sample ||vec(I) - vec(f(r))|| for raw (..., 6) or (..., 9) inputs."""
    if projection not in _PATH_VECTORS:
        raise ConfigError(f"orientation loss needs gso or svd_plus, got {projection.value}")
    rotation = learn.head_rotation(projection, r)
    return ad.norm(ad.vec(rotation) - _IDENTITY_VEC)


def optimum_input(projection: ProjectionType) -> FloatArray:
    """The raw input g(I) at which the orientation loss is zero."""
    return _IDENTITY_VEC[: 3 * len(_PATH_VECTORS[projection])].copy()


def gradient_paths(
    projection: ProjectionType,
    rng: np.random.Generator,
    *,
    iters: int = 150,
    lr: float = 0.05,
    momentum: float = 0.9,
    box: float = 2.0,
    init: npt.ArrayLike | None = None,
    run: str = "",
) -> GradientPathResult:
    """Momentum descent on the orientation loss, recording each column every iteration."""
    names = _PATH_VECTORS.get(projection)
    if names is None:
        raise ConfigError(f"gradient_paths needs gso or svd_plus, got {projection.value}")
    dim = 3 * len(names)
    r = rng.uniform(-box, box, dim) if init is None else np.array(init, dtype=np.float64)
    if r.shape != (dim,):
        raise DataError(f"{projection.value} path needs a ({dim},) init, got shape {r.shape}")

    result = GradientPathResult(run=run or projection.value, records=[], loss_trace=[])
    velocity: list[FloatArray] | None = None
    for step in range(iters + 1):
        node = DiffValue(r)
        try:
            root = orientation_loss(projection, node)
        except NumericalError as ex:
            result.unstable, result.reason = True, f"iteration {step}: {ex}"
            break
        value = float(root.value)
        result.loss_trace.append(value)
        if not math.isfinite(value):
            result.unstable, result.reason = True, f"iteration {step}: non-finite loss"
            break
        for name, column in zip(names, r.reshape(-1, 3), strict=True):
            result.records.append(
                RunRecord(
                    ExperimentType.GRADPATHS,
                    values={
                        "run": result.run,
                        "iter": step,
                        "vector": name,
                        "comp_x": float(column[0]),
                        "comp_y": float(column[1]),
                        "comp_z": float(column[2]),
                        "loss": value,
                    },
                )
            )
        if step == iters:
            break
        ad.backward(root)
        (r,), velocity = learn.gd_momentum_step([r], [node.adjoint], velocity, lr, momentum)

    if result.unstable:
        _LOGGER.warning("gradient path %s flagged unstable: %s", result.run, result.reason)
    return result


def gradient_ratio_density(n: int, box: float, rng: np.random.Generator) -> GradientRatioResult:
    """Norm ratios between the orientation-loss gradients of the input columns.

    Inputs on which the projection is undefined, or where a column gradient
    vanishes, are skipped and counted per projection.
    """
    samples = {
        ProjectionType.GSO: rng.uniform(-box, box, (n, 6)),
        ProjectionType.SVD_PLUS: rng.uniform(-box, box, (n, 9)),
    }
    result = GradientRatioResult(records=[])
    for projection, inputs in samples.items():
        if projection is ProjectionType.GSO:
            inputs = inputs[~projections.gso_degenerate(inputs)]
        node = DiffValue(inputs)
        ad.backward(orientation_loss(projection, node).sum())
        names = _PATH_VECTORS[projection]
        norms = np.linalg.norm(node.adjoint.reshape(-1, len(names), 3), axis=-1)
        usable = np.all(norms > NONZERO_NORM, axis=-1)
        norms = norms[usable]
        result.skipped[projection.value] = n - int(usable.sum())
        for i, j in _RATIO_PAIRS[projection]:
            pair = f"{names[i]}/{names[j]}"
            result.records.extend(
                RunRecord(
                    ExperimentType.GRADRATIO,
                    values={"projection": projection.value, "ratio_pair": pair, "ratio": float(ratio)},
                )
                for ratio in norms[:, i] / norms[:, j]
            )
        _LOGGER.debug(
            "gradient ratios %s: %d samples, %d skipped", projection.value, n, result.skipped[projection.value]
        )
    return result


def median_abs_log_ratio(records: Sequence[RunRecord], projection: ProjectionType) -> float:
    ratios = np.array([r.values["ratio"] for r in records if r.values["projection"] == projection.value])
    return float(np.median(np.abs(np.log(ratios)))) if ratios.size else math.nan


# Fourier-series targets on SO(3)


@dataclass(frozen=True, eq=False)
class FourierTarget:
    """h(R) = sum_k A_k cos(k pi t(R) / L) + B_k sin(k pi t(R) / L).

    ``t`` is a fixed random two-layer ReLU network on vec(R), standardized
    over a reference set of uniform rotations.
    """

    n_b: int
    a: FloatArray
    b: FloatArray
    w1: FloatArray
    b1: FloatArray
    w2: FloatArray
    b2: float
    shift: float
    scale: float
    period: float = FOURIER_PERIOD

    @classmethod
    def sample(cls, n_b: int, rng: np.random.Generator, hidden: int = 64) -> FourierTarget:
        if n_b < 0 or hidden < 1:
            raise ConfigError(f"fourier target needs n_b >= 0 and hidden >= 1, got {n_b}, {hidden}")
        limit1 = math.sqrt(6.0 / (9 + hidden))
        limit2 = math.sqrt(6.0 / (hidden + 1))
        w1 = rng.uniform(-limit1, limit1, (9, hidden))
        b1 = rng.uniform(-limit1, limit1, hidden)
        w2 = rng.uniform(-limit2, limit2, hidden)
        b2 = float(rng.uniform(-limit2, limit2))
        raw = _two_layer(so3.sample_uniform(rng, FOURIER_REFERENCE_SIZE), w1, b1, w2, b2)
        std = float(np.std(raw))
        return cls(
            n_b=n_b,
            a=rng.uniform(-1.0, 1.0, n_b),
            b=rng.uniform(-1.0, 1.0, n_b),
            w1=w1,
            b1=b1,
            w2=w2,
            b2=b2,
            shift=float(np.mean(raw)),
            scale=std if std > NONZERO_NORM else 1.0,
        )

    def inner(self, r: npt.ArrayLike) -> FloatArray:
        return (_two_layer(r, self.w1, self.b1, self.w2, self.b2) - self.shift) / self.scale

    def __call__(self, r: npt.ArrayLike) -> FloatArray:
        k = np.arange(1, self.n_b + 1)
        phase = math.pi * self.inner(r)[..., None] * k / self.period
        return np.cos(phase) @ self.a + np.sin(phase) @ self.b


def _two_layer(r: npt.ArrayLike, w1: FloatArray, b1: FloatArray, w2: FloatArray, b2: float) -> FloatArray:
    return np.maximum(so3.vec(r) @ w1 + b1, 0.0) @ w2 + b2


_FOURIER_INPUTS = {
    "euler": RepresentationType.EULER,
    "exp": RepresentationType.EXP,
    "quat": RepresentationType.QUAT,
    "quat_aug": RepresentationType.QUAT,
    "sixd": RepresentationType.SIXD,
    "nined": RepresentationType.NINED,
}
_FOURIER_AUGMENT = ("batch", "dataset")
_RMSE = LossSpec(MetricType.MSE)


def _check_fourier(config: FourierConfig) -> None:
    errors = [f"unknown fourier representation {rep!r}" for rep in config.reps if rep not in _FOURIER_INPUTS]
    if config.augment not in _FOURIER_AUGMENT:
        errors.append(f"fourier.augment must be one of {_FOURIER_AUGMENT}, got {config.augment!r}")
    if len(config.sizes) != 3 or any(s < 1 for s in config.sizes):
        errors.append(f"fourier.sizes needs three positive split sizes, got {config.sizes}")
    if any(nb < 0 for nb in config.nb):
        errors.append(f"fourier.nb must be nonnegative, got {config.nb}")
    if errors:
        raise ConfigError(errors)


def _flip_small_scalar(epsilon: float, flip_prob: float) -> learn.BatchTransform:
    def transform(
        inputs: FloatArray, targets: FloatArray, rng: np.random.Generator
    ) -> tuple[FloatArray, FloatArray]:
        flipped = representations.batch_augment_quaternions(UnitQuaternion(inputs), rng, epsilon, flip_prob)
        return flipped.values, targets

    return transform


def fourier_cell(config: FourierConfig, seed: int, n_b: int, rep: str, seed_index: int) -> RunRecord:
    """Fit one representation to one random Fourier target and score its RMSE."""
    start = time.perf_counter()
    target_rng = derive_rng(seed, n_b, seed_index)
    target = FourierTarget.sample(n_b, target_rng, config.target_hidden)
    n_train, n_val, n_test = config.sizes
    rotations = so3.sample_uniform(target_rng, n_train + n_val + n_test)
    values = target(rotations)[:, None]
    features = representations.from_matrix(rotations, _FOURIER_INPUTS[rep]).values

    train_x, val_x, test_x = np.split(features, [n_train, n_train + n_val])
    train_y, val_y, test_y = np.split(values, [n_train, n_train + n_val])
    transform = None
    if rep == "quat_aug" and config.augment == "dataset":
        quats, train_y = representations.augment_quaternion_dataset(UnitQuaternion(train_x), train_y, config.epsilon)
        train_x = quats.values
    elif rep == "quat_aug":
        transform = _flip_small_scalar(config.epsilon, config.flip_prob)

    model_rng = derive_rng(seed, n_b, seed_index, list(_FOURIER_INPUTS).index(rep))
    model = learn.MLPModel([features.shape[-1], *config.hidden, 1], rng=model_rng)
    train_config = TrainConfig(
        optimizer=OptimizerType.ADAM,
        learning_rate=config.lr,
        batch_size=config.batch_size,
        max_epochs=config.epochs,
        patience=None,
        seed=int(model_rng.integers(2**31)),
    )
    train_set, val_set, test_set = Dataset(train_x, train_y), Dataset(val_x, val_y), Dataset(test_x, test_y)
    learn.train(model, train_set, _RMSE, train_config, val_set, batch_transform=transform)
    return RunRecord(
        ExperimentType.FOURIER,
        rep=rep,
        seed=seed_index,
        values={
            "n_b": n_b,
            "rmse_train": math.sqrt(learn.evaluate(model, train_set, _RMSE)),
            "rmse_val": math.sqrt(learn.evaluate(model, val_set, _RMSE)),
            "rmse_test": math.sqrt(learn.evaluate(model, test_set, _RMSE)),
        },
        wall_time=time.perf_counter() - start,
    )


async def fourier_experiment(config: FourierConfig, seed: int, workers: int = 1) -> list[RunRecord]:
    _check_fourier(config)
    cells = [
        partial(fourier_cell, config, seed, n_b, rep, seed_index)
        for n_b in config.nb
        for rep in config.reps
        for seed_index in range(config.seeds)
    ]
    return await run_cells(cells, workers)


# Rotation estimation from point pairs


@dataclass(frozen=True)
class ToyVariant:
    """One head/loss combination of the rotation estimation grid."""

    name: str
    loss_name: str
    head: OutputHead
    spec: LossSpec
    random_flip: bool = False


_TOY_HEADS = {
    "euler": (RepresentationType.EULER, ProjectionType.NONE),
    "exp": (RepresentationType.EXP, ProjectionType.NONE),
    "quat": (RepresentationType.QUAT, ProjectionType.NONE),
    "quat_nohs": (RepresentationType.QUAT, ProjectionType.NONE),
    "quat_aug": (RepresentationType.QUAT, ProjectionType.NONE),
    "quat_rf": (RepresentationType.QUAT, ProjectionType.NONE),
    "sixd": (RepresentationType.SIXD, ProjectionType.NONE),
    "sixd_gso": (RepresentationType.SIXD, ProjectionType.GSO),
    "nined": (RepresentationType.NINED, ProjectionType.NONE),
    "nined_svd": (RepresentationType.NINED, ProjectionType.SVD_PLUS),
}

_TOY_LOSSES = {
    "mse": (MetricType.MSE, PickingPolicy.PLAIN),
    "mae": (MetricType.MAE, PickingPolicy.PLAIN),
    "l2": (MetricType.L2, PickingPolicy.PLAIN),
    "mse_dp": (MetricType.MSE, PickingPolicy.QUAT_PICK_I),
    "cd": (MetricType.COSINE, PickingPolicy.PLAIN),
    "chordal": (MetricType.CHORDAL, PickingPolicy.PLAIN),
    "chordal_sq": (MetricType.CHORDAL_SQ, PickingPolicy.PLAIN),
    "geodesic": (MetricType.GEODESIC, PickingPolicy.PLAIN),
}


def parse_toy_variants(texts: Sequence[str]) -> list[ToyVariant]:
    """Parse ``head:loss`` entries, reporting every bad entry at once."""
    variants, errors = [], []
    for text in texts:
        name, sep, loss_name = text.partition(":")
        if not sep or name not in _TOY_HEADS or loss_name not in _TOY_LOSSES:
            errors.append(f"unknown toy variant {text!r}")
            continue
        rep, projection = _TOY_HEADS[name]
        metric, picking = _TOY_LOSSES[loss_name]
        target_space = TargetSpace.SO3 if metric in MATRIX_METRICS else TargetSpace.REPRESENTATION
        spec = LossSpec(metric, projection, picking, target_space, rep)
        try:
            learn.validate_loss_spec(spec)
        except ConfigError as ex:
            errors.extend(f"{text}: {problem}" for problem in ex.errors)
            continue
        halfspace = rep is RepresentationType.QUAT and name != "quat_nohs"
        head = OutputHead(rep, projection, halfspace=halfspace, augment=name == "quat_aug")
        variants.append(ToyVariant(name, loss_name, head, spec, random_flip=name == "quat_rf"))
    if errors:
        raise ConfigError(errors)
    return variants


def point_pair_inputs(points: FloatArray, rotations: RotationMatrix, noise: float, rng: np.random.Generator) -> FloatArray:
    """Flattened (P, R P + noise) per rotation; points are rows of ``points``."""
    moved = points @ np.swapaxes(rotations, -1, -2)
    if noise > 0.0:
        moved = moved + rng.normal(0.0, noise, moved.shape)
    fixed = np.broadcast_to(points.ravel(), (len(rotations), points.size))
    return np.concatenate([fixed, moved.reshape(len(rotations), -1)], axis=-1)


def toy_targets(variant: ToyVariant, rotations: RotationMatrix, rng: np.random.Generator) -> FloatArray:
    """Regression targets; quaternion heads without the half-space map keep Shepperd's sign."""
    if variant.spec.target_space is TargetSpace.SO3:
        return rotations
    if variant.head.representation is RepresentationType.QUAT:
        quats = representations.shepperd_quaternion(rotations)
        if variant.head.halfspace:
            quats = representations.halfspace_map(quats)  # type: ignore[assignment]
        if variant.random_flip:
            quats = representations.random_flip_quaternions(quats, rng, FLIP_PROBABILITY)
        return quats.values
    return representations.from_matrix(rotations, variant.head.representation).values


def _flip_small_scalar_targets(epsilon: float, flip_prob: float) -> learn.BatchTransform:
    def transform(
        inputs: FloatArray, targets: FloatArray, rng: np.random.Generator
    ) -> tuple[FloatArray, FloatArray]:
        flipped = representations.batch_augment_quaternions(UnitQuaternion(targets), rng, epsilon, flip_prob)
        return inputs, flipped.values

    return transform


def decode_prediction(head: OutputHead | None, prediction: FloatArray) -> RotationMatrix:
    if head is None:
        raise ConfigError("decoding a prediction needs a model with an output head")
    match head.projection:
        case ProjectionType.GSO:
            return projections.gso(prediction)
        case ProjectionType.SVD_PLUS:
            return projections.svd_plus(so3.unvec(prediction))
    return learn.prediction_to_matrix(head.representation, prediction)


def toy_cell(config: ToyEstimationConfig, seed: int, variant_index: int, variant: ToyVariant, seed_index: int) -> RunRecord:
    """Train one head/loss variant on point pairs and score it on held-out rotations."""
    start = time.perf_counter()
    data_rng = derive_rng(seed, seed_index)
    points = data_rng.standard_normal((config.n_points, 3))
    n_train, n_val, n_test = config.sizes
    rotations = so3.sample_uniform(data_rng, n_train + n_val + n_test)
    inputs = point_pair_inputs(points, rotations, config.noise, data_rng)

    model_rng = derive_rng(seed, seed_index, variant_index + 1)
    targets = toy_targets(variant, rotations, model_rng)
    train_x, val_x, test_x = np.split(inputs, [n_train, n_train + n_val])
    train_y, val_y, _ = np.split(targets, [n_train, n_train + n_val])
    test_r = rotations[n_train + n_val :]

    width = len(REPRESENTATION_CLASSES[variant.head.representation].fields)
    model = learn.MLPModel([inputs.shape[-1], *config.hidden, width], rng=model_rng, head=variant.head)
    train_config = TrainConfig(
        optimizer=OptimizerType.ADAM,
        learning_rate=config.lr,
        batch_size=config.batch_size,
        max_epochs=config.epochs,
        patience=config.patience,
        seed=int(model_rng.integers(2**31)),
    )
    transform = None
    # augmentation flips quaternion targets, so it only applies in representation space
    augment = model.head is not None and model.head.augment
    if augment and variant.spec.target_space is TargetSpace.REPRESENTATION:
        transform = _flip_small_scalar_targets(AUGMENT_EPSILON, FLIP_PROBABILITY)
    train_set, val_set = Dataset(train_x, train_y), Dataset(val_x, val_y)
    learn.train(model, train_set, variant.spec, train_config, val_set, batch_transform=transform)

    predicted = decode_prediction(model.head, model.predict(test_x))
    return RunRecord(
        ExperimentType.TOYEST,
        rep=variant.name,
        loss=variant.loss_name,
        seed=seed_index,
        values={
            "geodesic_med": float(np.median(metrics.geodesic(predicted, test_r))),
            "chordal_med": float(np.median(metrics.chordal(predicted, test_r))),
        },
        wall_time=time.perf_counter() - start,
    )


async def toy_rotation_estimation(config: ToyEstimationConfig, seed: int, workers: int = 1) -> list[RunRecord]:
    variants = parse_toy_variants(config.variants)
    if len(config.sizes) != 3 or any(s < 1 for s in config.sizes):
        raise ConfigError(f"toyest.sizes needs three positive split sizes, got {config.sizes}")
    cells = [
        partial(toy_cell, config, seed, index, variant, seed_index)
        for index, variant in enumerate(variants)
        for seed_index in range(config.seeds)
    ]
    return await run_cells(cells, workers)


# Timing and gradient fields


def bench_projections(config: BenchConfig, rng: np.random.Generator) -> list[RunRecord]:
    """Median forward time of gso and svd_plus per batch size, in milliseconds."""
    if config.repetitions < 1 or config.warmup < 0:
        raise ConfigError(f"bench needs repetitions >= 1 and warmup >= 0, got {config.repetitions}, {config.warmup}")
    ops: tuple[tuple[str, Callable[[FloatArray], FloatArray], tuple[int, ...]], ...] = (
        ("gso", projections.gso, (6,)),
        ("svd_plus", projections.svd_plus, (3, 3)),
    )
    records = []
    for name, fn, shape in ops:
        for batch in config.batches:
            inputs = rng.standard_normal((batch, *shape))
            for _ in range(config.warmup):
                fn(inputs)
            timings = []
            for _ in range(config.repetitions):
                start = time.perf_counter()
                fn(inputs)
                timings.append(time.perf_counter() - start)
            records.append(
                RunRecord(
                    ExperimentType.BENCH,
                    values={"op": name, "batch": batch, "median_ms": 1e3 * float(np.median(timings))},
                )
            )
    return records


def bench_ratios(records: Sequence[RunRecord]) -> dict[str, float]:
    """svd_plus over gso median time, per batch size."""
    times = {(r.values["op"], r.values["batch"]): float(r.values["median_ms"]) for r in records}
    return {
        f"svd_plus_over_gso_{batch}": times[("svd_plus", batch)] / times[("gso", batch)]
        for op, batch in times
        if op == "gso" and ("svd_plus", batch) in times and times[("gso", batch)] > 0.0
    }


def distance_field_export(metric: MetricType, config: DistanceFieldConfig) -> list[RunRecord]:
    """Negative gradient of d(y, z) on a square lattice, z = (1, 0)."""
    if config.grid < 2 or config.extent <= 0.0:
        raise ConfigError(f"distfield needs grid >= 2 and extent > 0, got {config.grid}, {config.extent}")
    axis = np.linspace(-config.extent, config.extent, config.grid)
    y1, y2 = np.meshgrid(axis, axis, indexing="xy")
    lattice = np.stack([y1.ravel(), y2.ravel()], axis=-1)
    points, field, defined = metrics.gradient_field(metric, FIELD_TARGET, lattice)
    return [
        RunRecord(
            ExperimentType.DISTFIELD,
            loss=metric.value,
            values={
                "y1": float(p[0]),
                "y2": float(p[1]),
                "gx": float(g[0]),
                "gy": float(g[1]),
                "defined": bool(ok),
            },
        )
        for p, g, ok in zip(points, field, defined, strict=True)
    ]


# Dispatch


def build_meta(experiment: ExperimentType, config: Any, seed: int, **extra: Any) -> dict[str, object]:
    """Resolved config, seed and version, keyed the way config files spell them."""
    meta: dict[str, object] = {"experiment": experiment.value, "seed": seed, "version": __version__}
    for f in fields(config):
        meta[f"{experiment.value}.{f.name}"] = getattr(config, f.name)
    if experiment in (ExperimentType.FOURIER, ExperimentType.TOYEST):
        meta["adam_betas"] = ADAM_BETAS
    if experiment in EXPERIMENT_NOTES:
        meta["note"] = EXPERIMENT_NOTES[experiment]
    meta.update(extra)
    return meta


async def _run_lipschitz(config: LipschitzConfig, seed: int, workers: int) -> tuple[list[RunRecord], dict[str, Any]]:
    tags = _tags(config.reps, RepresentationType, "representation", SO3_REPRESENTATIONS)
    cells = [
        partial(lipschitz_scan, tag, config.pairs, derive_rng(seed, index), config.boundary_fraction)
        for index, tag in enumerate(tags)
    ]
    results = await run_cells(cells, workers)
    return [record for rows in results for record in rows], {}


async def _run_gradpaths(config: GradPathsConfig, seed: int, workers: int) -> tuple[list[RunRecord], dict[str, Any]]:
    tags = _tags(config.projections, ProjectionType, "projection", tuple(_PATH_VECTORS))
    cells = [
        partial(
            gradient_paths,
            tag,
            derive_rng(seed, index, run),
            iters=config.iters,
            lr=config.lr,
            momentum=config.momentum,
            box=config.box,
            run=f"{tag.value}-{run}",
        )
        for index, tag in enumerate(tags)
        for run in range(config.seeds)
    ]
    results = await run_cells(cells, workers)
    extra: dict[str, Any] = {}
    for tag in tags:
        mine = [r for r in results if r.run.startswith(f"{tag.value}-")]
        extra[f"reached_{tag.value}"] = sum(r.min_loss < config.threshold for r in mine)
        extra[f"unstable_{tag.value}"] = sum(r.unstable for r in mine)
    return [record for result in results for record in result.records], extra


async def _run_gradratio(config: GradRatioConfig, seed: int, workers: int) -> tuple[list[RunRecord], dict[str, Any]]:
    if config.n < 0 or config.box <= 0.0:
        raise ConfigError(f"gradratio needs n >= 0 and box > 0, got {config.n}, {config.box}")
    (result,) = await run_cells([partial(gradient_ratio_density, config.n, config.box, derive_rng(seed))], workers)
    extra: dict[str, Any] = {f"skipped_{name}": count for name, count in result.skipped.items()}
    for tag in _RATIO_PAIRS:
        extra[f"median_abs_log_ratio_{tag.value}"] = median_abs_log_ratio(result.records, tag)
    return result.records, extra


async def _run_fourier(config: FourierConfig, seed: int, workers: int) -> tuple[list[RunRecord], dict[str, Any]]:
    return await fourier_experiment(config, seed, workers), {}


async def _run_toyest(config: ToyEstimationConfig, seed: int, workers: int) -> tuple[list[RunRecord], dict[str, Any]]:
    return await toy_rotation_estimation(config, seed, workers), {}


async def _run_bench(config: BenchConfig, seed: int, workers: int) -> tuple[list[RunRecord], dict[str, Any]]:
    records = bench_projections(config, derive_rng(seed))
    return records, bench_ratios(records)


async def _run_distfield(
    config: DistanceFieldConfig, seed: int, workers: int
) -> tuple[list[RunRecord], dict[str, Any]]:
    tags = _tags(config.metrics, MetricType, "field metric", FIELD_METRICS)
    results = await run_cells([partial(distance_field_export, tag, config) for tag in tags], workers)
    return [record for rows in results for record in rows], {}


_RUNNERS: dict[ExperimentType, Callable[..., Any]] = {
    ExperimentType.LIPSCHITZ: _run_lipschitz,
    ExperimentType.GRADPATHS: _run_gradpaths,
    ExperimentType.GRADRATIO: _run_gradratio,
    ExperimentType.FOURIER: _run_fourier,
    ExperimentType.TOYEST: _run_toyest,
    ExperimentType.BENCH: _run_bench,
    ExperimentType.DISTFIELD: _run_distfield,
}


async def run_experiment(
    experiment: ExperimentType, config: Any, seed: int, workers: int = 1
) -> tuple[list[RunRecord], dict[str, object]]:
    """Run one experiment; returns its rows and the meta sidecar contents."""
    _LOGGER.info("running %s (seed %d, %d workers)", experiment.value, seed, workers)
    start = time.perf_counter()
    records, extra = await _RUNNERS[experiment](config, seed, workers)
    elapsed = time.perf_counter() - start
    _LOGGER.info("%s finished: %d rows in %.2fs", experiment.value, len(records), elapsed)
    return records, build_meta(experiment, config, seed, rows=len(records), **extra)
