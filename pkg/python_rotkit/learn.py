"""Dense networks, rotation-aware losses, optimizers and the training loop."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
import numpy.typing as npt

from python_rotkit import autodiff as ad
from python_rotkit import helpers, representations, so3
from python_rotkit.autodiff import DiffValue
from python_rotkit.const import (
    ADAM_EPS,
    MATRIX_METRICS,
    VECTOR_METRICS,
    MetricType,
    OptimizerType,
    PickingPolicy,
    ProjectionType,
    RepresentationType,
    TargetSpace,
)
from python_rotkit.exceptions import ConfigError, DataError, NumericalError
from python_rotkit.model import (
    REPRESENTATION_CLASSES,
    Dataset,
    EpochRecord,
    FloatArray,
    LossSpec,
    OutputHead,
    Representation,
    RotationMatrix,
    TrainConfig,
)

if TYPE_CHECKING:
    from pathlib import Path

_LOGGER = logging.getLogger(__name__)

BatchTransform = Callable[[FloatArray, FloatArray, np.random.Generator], tuple[FloatArray, FloatArray]]

_CHECKPOINT_MAGIC = "rotkit-mlp"


class MLPModel:
    """Fully connected ReLU network, linear output layer.

    Weights are stored (fan_in, fan_out) so a batch ``x`` maps to ``x @ W + b``.
    """

    def __init__(
        self,
        widths: Sequence[int],
        rng: np.random.Generator | None = None,
        head: OutputHead | None = None,
    ) -> None:
        if len(widths) < 2 or any(w < 0 for w in widths) or widths[0] == 0 or widths[-1] == 0:
            raise ConfigError(f"invalid layer widths {list(widths)}")
        if head is not None:
            dim = len(REPRESENTATION_CLASSES[head.representation].fields)
            if widths[-1] != dim:
                raise ConfigError(
                    f"{head.representation.value} head needs output width {dim}, got {widths[-1]}"
                )
        self.widths = tuple(int(w) for w in widths)
        self.head = head
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights: list[DiffValue] = []
        self.biases: list[DiffValue] = []
        for fan_in, fan_out in zip(self.widths[:-1], self.widths[1:], strict=True):
            total = fan_in + fan_out
            limit = math.sqrt(6.0 / total) if total else 0.0
            self.weights.append(DiffValue(rng.uniform(-limit, limit, size=(fan_in, fan_out))))
            self.biases.append(DiffValue(np.zeros(fan_out)))

    def __repr__(self) -> str:
        return f"MLPModel(widths={list(self.widths)}, head={self.head})"

    def parameters(self) -> list[DiffValue]:
        return [p for pair in zip(self.weights, self.biases, strict=True) for p in pair]

    def get_state(self) -> list[FloatArray]:
        return [p.value.copy() for p in self.parameters()]

    def set_state(self, state: Sequence[FloatArray]) -> None:
        for param, value in zip(self.parameters(), state, strict=True):
            param.value = np.array(value, dtype=np.float64)
            param.adjoint = np.zeros_like(param.value)

    def forward(self, x: npt.ArrayLike | DiffValue) -> DiffValue:
        h = ad.lift(x if isinstance(x, DiffValue) else np.asarray(x, dtype=np.float64))
        if h.shape[-1] != self.widths[0]:
            raise DataError(f"model expects {self.widths[0]} input features, got {h.shape[-1]}")
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases, strict=True)):
            h = h @ w + b
            if i < last:
                h = ad.relu(h)
        return h

    def predict(self, x: npt.ArrayLike) -> FloatArray:
        return self.forward(x).value


def forward(model: MLPModel, x: npt.ArrayLike | DiffValue) -> DiffValue:
    return model.forward(x)


# losses


def validate_loss_spec(spec: LossSpec) -> None:
    """Collect every problem with a loss policy combination and raise them together."""
    errors: list[str] = []
    rep = spec.representation
    if spec.target_space is TargetSpace.SO3:
        if spec.metric not in MATRIX_METRICS:
            errors.append(f"SO(3) losses need a matrix metric, got {spec.metric.value}")
        if spec.picking is not PickingPolicy.PLAIN:
            errors.append("distance picking applies to representation-space losses only")
        expected = {
            ProjectionType.GSO: RepresentationType.SIXD,
            ProjectionType.SVD_PLUS: RepresentationType.NINED,
            ProjectionType.NONE: RepresentationType.QUAT,
        }[spec.projection]
        if rep is not expected:
            errors.append(
                f"projection {spec.projection.value} in SO(3) needs a {expected.value} head, "
                f"got {rep.value if rep else 'none'}"
            )
    else:
        if spec.metric not in (*VECTOR_METRICS, MetricType.QUAT_PICK_I, MetricType.QUAT_PICK_II, MetricType.EULER_PICK):
            errors.append(f"{spec.metric.value} is not a representation-space metric")
        if spec.projection is not ProjectionType.NONE:
            errors.append("projections route the loss through SO(3); set target_space=so3")
        quat_only = spec.picking is not PickingPolicy.PLAIN or spec.metric in (
            MetricType.QUAT_PICK_I,
            MetricType.QUAT_PICK_II,
        )
        if quat_only and rep is not RepresentationType.QUAT:
            errors.append("quaternion distance picking needs a quat head")
        if spec.metric is MetricType.EULER_PICK and rep is not RepresentationType.EULER:
            errors.append("euler_pick needs an euler head")
    if errors:
        raise ConfigError(errors)


def _vector_metric(metric: MetricType, p: DiffValue, t: FloatArray) -> DiffValue:
    diff = p - t
    match metric:
        case MetricType.L2:
            return ad.norm(diff)
        case MetricType.L1:
            return ad.absolute(diff).sum(axis=-1)
        case MetricType.MSE:
            return (diff * diff).mean(axis=-1)
        case MetricType.MAE:
            return ad.absolute(diff).mean(axis=-1)
        case MetricType.COSINE | MetricType.ANGULAR:
            t_hat = t / np.linalg.norm(t, axis=-1, keepdims=True)
            cos = (p * t_hat).sum(axis=-1) / ad.norm(p)
            return 1.0 - cos if metric is MetricType.COSINE else ad.arccos(cos)
        case MetricType.L2_NORMALIZED:
            return ad.norm(p / ad.norm(p).reshape(*p.shape[:-1], 1) - t)
        case MetricType.QUAT_PICK_I:
            return ad.minimum(ad.norm(diff), ad.norm(p + t))
        case MetricType.QUAT_PICK_II:
            unit = p / ad.norm(p).reshape(*p.shape[:-1], 1)
            return 1.0 - ad.absolute((unit * t).sum(axis=-1))
        case MetricType.EULER_PICK:
            gap = ad.absolute(diff)
            return ad.norm(ad.minimum(gap, 2.0 * math.pi - gap))
    raise ConfigError(f"{metric.value} is not a representation-space metric")


def _matrix_metric(metric: MetricType, r: DiffValue, t: FloatArray) -> DiffValue:
    match metric:
        case MetricType.CHORDAL:
            return ad.norm(ad.vec(r) - so3.vec(t))
        case MetricType.CHORDAL_SQ:
            diff = ad.vec(r) - so3.vec(t)
            return (diff * diff).sum(axis=-1)
        case MetricType.GEODESIC:
            trace = (r * t).sum(axis=(-2, -1))
            return ad.arccos((trace - 1.0) * 0.5)
    raise ConfigError(f"{metric.value} is not a matrix metric")


def head_rotation(projection: ProjectionType, prediction: DiffValue) -> DiffValue:
    """Differentiable map from a raw head output to rotation matrices."""
    match projection:
        case ProjectionType.GSO:
            return ad.gso(prediction)
        case ProjectionType.SVD_PLUS:
            return ad.svd_plus(prediction)
    return ad.quat_to_matrix(prediction)


def loss(
    spec: LossSpec,
    prediction: DiffValue,
    target: Representation | RotationMatrix | npt.ArrayLike,
) -> DiffValue:
    """Mean over the batch of the per-sample loss described by ``spec``."""
    validate_loss_spec(spec)
    if spec.target_space is TargetSpace.SO3:
        t = representations.to_matrix(target) if isinstance(target, Representation) else np.asarray(target, float)
        per_sample = _matrix_metric(spec.metric, head_rotation(spec.projection, prediction), t)
        return per_sample.mean()

    t = target.values if isinstance(target, Representation) else np.asarray(target, dtype=np.float64)
    match spec.picking:
        case PickingPolicy.QUAT_PICK_I:
            per_sample = ad.minimum(
                _vector_metric(spec.metric, prediction, t), _vector_metric(spec.metric, prediction, -t)
            )
        case PickingPolicy.QUAT_PICK_II:
            dots = np.sum(prediction.value * t, axis=-1, keepdims=True)
            per_sample = _vector_metric(spec.metric, prediction, np.where(dots >= 0.0, t, -t))
        case _:
            per_sample = _vector_metric(spec.metric, prediction, t)
    return per_sample.mean()


def prediction_to_matrix(tag: RepresentationType, values: npt.ArrayLike) -> RotationMatrix:
    """Decode raw head outputs to rotations; quaternions are normalized first."""
    values = np.asarray(values, dtype=np.float64)
    if tag is RepresentationType.QUAT:
        values = values / np.linalg.norm(values, axis=-1, keepdims=True)
    if tag is RepresentationType.AXIS_ANGLE:
        axis = values[..., :3] / np.linalg.norm(values[..., :3], axis=-1, keepdims=True)
        values = np.concatenate([axis, values[..., 3:]], axis=-1)
    return representations.to_matrix(representations.make(tag, values))


# optimizers


def gd_momentum_step(
    params: Sequence[FloatArray],
    grads: Sequence[FloatArray],
    state: Sequence[FloatArray] | None,
    lr: float,
    momentum: float,
) -> tuple[list[FloatArray], list[FloatArray]]:
    """v <- momentum * v + g; p <- p - lr * v."""
    velocity = state if state is not None else [np.zeros_like(p) for p in params]
    new_velocity = [momentum * v + g for v, g in zip(velocity, grads, strict=True)]
    new_params = [p - lr * v for p, v in zip(params, new_velocity, strict=True)]
    return new_params, new_velocity


@dataclass
class AdamState:
    m: list[FloatArray]
    v: list[FloatArray]
    t: int = 0


def adam_step(
    params: Sequence[FloatArray],
    grads: Sequence[FloatArray],
    state: AdamState | None,
    lr: float,
    betas: tuple[float, float],
    eps: float = ADAM_EPS,
) -> tuple[list[FloatArray], AdamState]:
    if state is None:
        state = AdamState([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])
    beta1, beta2 = betas
    t = state.t + 1
    m = [beta1 * m_ + (1.0 - beta1) * g for m_, g in zip(state.m, grads, strict=True)]
    v = [beta2 * v_ + (1.0 - beta2) * g * g for v_, g in zip(state.v, grads, strict=True)]
    correction1 = 1.0 - beta1**t
    correction2 = 1.0 - beta2**t
    new_params = [
        p - lr * (m_ / correction1) / (np.sqrt(v_ / correction2) + eps)
        for p, m_, v_ in zip(params, m, v, strict=True)
    ]
    return new_params, AdamState(m, v, t)


class _Optimizer:
    def step(self, params: Sequence[DiffValue]) -> None:
        raise NotImplementedError()


class SGDMomentum(_Optimizer):
    def __init__(self, lr: float, momentum: float) -> None:
        self.lr = lr
        self.momentum = momentum
        self.state: list[FloatArray] | None = None

    def step(self, params: Sequence[DiffValue]) -> None:
        values, self.state = gd_momentum_step(
            [p.value for p in params], [p.adjoint for p in params], self.state, self.lr, self.momentum
        )
        for param, value in zip(params, values, strict=True):
            param.value = value


class Adam(_Optimizer):
    def __init__(self, lr: float, betas: tuple[float, float]) -> None:
        self.lr = lr
        self.betas = betas
        self.state: AdamState | None = None

    def step(self, params: Sequence[DiffValue]) -> None:
        values, self.state = adam_step(
            [p.value for p in params], [p.adjoint for p in params], self.state, self.lr, self.betas
        )
        for param, value in zip(params, values, strict=True):
            param.value = value


def make_optimizer(config: TrainConfig) -> _Optimizer:
    if config.optimizer is OptimizerType.ADAM:
        return Adam(config.learning_rate, config.betas)
    return SGDMomentum(config.learning_rate, config.momentum)


# training


@dataclass
class TrainResult:
    model: MLPModel
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = math.inf
    stopped_early: bool = False


def evaluate(model: MLPModel, dataset: Dataset, spec: LossSpec) -> float:
    return float(loss(spec, model.forward(dataset.inputs), dataset.targets).value)


def _check_finite(value: float, what: str, epoch: int) -> None:
    if not math.isfinite(value):
        raise NumericalError(f"non-finite {what} loss {value} in epoch {epoch}")


def train(
    model: MLPModel,
    dataset: Dataset,
    loss_spec: LossSpec,
    config: TrainConfig,
    validation: Dataset,
    *,
    batch_transform: BatchTransform | None = None,
) -> TrainResult:
    """Minibatch training that keeps the parameters of the best validation epoch.

    Shuffling and any batch transform draw from one generator seeded by
    ``config.seed``, so identical seeds give identical histories.
    """
    validate_loss_spec(loss_spec)
    rng = np.random.default_rng(config.seed)
    optimizer = make_optimizer(config)
    params = model.parameters()
    result = TrainResult(model=model)
    best_state = model.get_state()
    stale = 0

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(dataset))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            index = order[start : start + config.batch_size]
            inputs, targets = dataset.inputs[index], dataset.targets[index]
            if batch_transform is not None:
                inputs, targets = batch_transform(inputs, targets, rng)
            root = loss(loss_spec, model.forward(inputs), targets)
            value = float(root.value)
            _check_finite(value, "training", epoch)
            ad.backward(root)
            optimizer.step(params)
            total += value * len(index)

        train_loss = total / len(dataset)
        val_loss = evaluate(model, validation, loss_spec)
        _check_finite(val_loss, "validation", epoch)
        result.history.append(EpochRecord(epoch, train_loss, val_loss))
        _LOGGER.debug("epoch %d train %.6g val %.6g", epoch, train_loss, val_loss)

        if val_loss < result.best_val_loss:
            result.best_val_loss = val_loss
            result.best_epoch = epoch
            best_state = model.get_state()
            stale = 0
        else:
            stale += 1
            if config.patience is not None and stale > config.patience:
                result.stopped_early = True
                _LOGGER.info(
                    "early stop after epoch %d, best epoch %d (val %.6g)",
                    epoch,
                    result.best_epoch,
                    result.best_val_loss,
                )
                break

    model.set_state(best_state)
    return result


# checkpoints


def _head_tag(head: OutputHead | None) -> str:
    if head is None:
        return "none"
    return ":".join(
        [head.representation.value, head.projection.value, str(int(head.halfspace)), str(int(head.augment))]
    )


def _parse_head(tag: str) -> OutputHead | None:
    if tag == "none":
        return None
    try:
        rep, projection, halfspace, augment = tag.split(":")
        return OutputHead(RepresentationType(rep), ProjectionType(projection), halfspace == "1", augment == "1")
    except ValueError as ex:
        raise DataError(f"line 1: malformed head tag {tag!r}") from ex


def checkpoint_to_text(model: MLPModel) -> str:
    lines = [f"# {_CHECKPOINT_MAGIC} widths={','.join(map(str, model.widths))} head={_head_tag(model.head)}"]
    for layer, (w, b) in enumerate(zip(model.weights, model.biases, strict=True)):
        lines.append(f"# layer {layer} weight {w.shape[0]}x{w.shape[1]}")
        lines.append(helpers.array_to_line(w.value))
        lines.append(f"# layer {layer} bias {b.shape[0]}")
        lines.append(helpers.array_to_line(b.value))
    return "\n".join(lines) + "\n"


def checkpoint_from_text(text: str) -> MLPModel:
    lines = text.split("\n")
    header = lines[0].split()
    if len(header) != 4 or header[1] != _CHECKPOINT_MAGIC:
        raise DataError("line 1: not a model checkpoint")
    try:
        widths = [int(w) for w in header[2].removeprefix("widths=").split(",")]
    except ValueError as ex:
        raise DataError(f"line 1: malformed widths {header[2]!r}") from ex
    model = MLPModel(widths, head=_parse_head(header[3].removeprefix("head=")))
    state = []
    lineno = 2
    for fan_in, fan_out in zip(widths[:-1], widths[1:], strict=True):
        for shape in ((fan_in, fan_out), (fan_out,)):
            if lineno >= len(lines):
                raise DataError(f"line {lineno}: checkpoint ends early")
            state.append(helpers.line_to_array(lines[lineno], shape, lineno + 1))
            lineno += 2
    model.set_state(state)
    return model


def save_checkpoint(model: MLPModel, path: Path) -> Path:
    return helpers.write_text(path, checkpoint_to_text(model))


def load_checkpoint(path: Path) -> MLPModel:
    return checkpoint_from_text(helpers.read_text(path))

