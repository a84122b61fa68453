from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar, Self

import numpy as np
import numpy.typing as npt

from python_rotkit.const import (
    ADAM_BETAS,
    AUGMENT_EPSILON,
    FLIP_PROBABILITY,
    ExperimentType,
    MetricType,
    OptimizerType,
    PickingPolicy,
    ProjectionType,
    RepresentationType,
    TargetSpace,
)
from python_rotkit.exceptions import ConfigError, DataError

FloatArray = npt.NDArray[np.float64]
# (..., 3, 3) proper orthonormal matrices
RotationMatrix = FloatArray
# (..., 3)
Vec3 = FloatArray


@dataclass(frozen=True, eq=False)
class Representation:
    """A batch of representation vectors stored along the last axis."""

    values: FloatArray
    tag: ClassVar[RepresentationType]
    fields: ClassVar[tuple[str, ...]]

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.ndim == 0 or values.shape[-1] != len(self.fields):
            raise DataError(
                f"{type(self).__name__} expects trailing dimension {len(self.fields)}, "
                f"got shape {values.shape}"
            )
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return len(self.fields)

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return tuple(self.values.shape[:-1])

    def __getitem__(self, index: int | slice | npt.NDArray[np.integer]) -> Self:
        return type(self)(self.values[index])

    def __len__(self) -> int:
        return int(self.values.shape[0]) if self.values.ndim > 1 else 1

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.values.tolist()!r})"


@dataclass(frozen=True, eq=False, repr=False)
class EulerXYZ(Representation):
    tag = RepresentationType.EULER
    fields = ("alpha", "beta", "gamma")

    @classmethod
    def from_angles(cls, alpha: float, beta: float, gamma: float) -> EulerXYZ:
        return cls(np.array([alpha, beta, gamma]))

    @property
    def alpha(self) -> FloatArray:
        return self.values[..., 0]

    @property
    def beta(self) -> FloatArray:
        return self.values[..., 1]

    @property
    def gamma(self) -> FloatArray:
        return self.values[..., 2]


@dataclass(frozen=True, eq=False, repr=False)
class ExpCoord(Representation):
    tag = RepresentationType.EXP
    fields = ("wx", "wy", "wz")

    @property
    def omega(self) -> Vec3:
        return self.values


@dataclass(frozen=True, eq=False, repr=False)
class AxisAngle(Representation):
    tag = RepresentationType.AXIS_ANGLE
    fields = ("ax", "ay", "az", "angle")

    @classmethod
    def from_axis_angle(cls, axis: npt.ArrayLike, angle: npt.ArrayLike) -> AxisAngle:
        axis_arr = np.asarray(axis, dtype=np.float64)
        angle_arr = np.asarray(angle, dtype=np.float64)
        return cls(np.concatenate([axis_arr, angle_arr[..., None]], axis=-1))

    @property
    def axis(self) -> Vec3:
        return self.values[..., :3]

    @property
    def angle(self) -> FloatArray:
        return self.values[..., 3]


@dataclass(frozen=True, eq=False, repr=False)
class UnitQuaternion(Representation):
    """Scalar-first (w, x, y, z) unit quaternion."""

    tag = RepresentationType.QUAT
    fields = ("w", "x", "y", "z")

    @classmethod
    def from_components(cls, w: float, x: float, y: float, z: float) -> UnitQuaternion:
        return cls(np.array([w, x, y, z]))

    @property
    def w(self) -> FloatArray:
        return self.values[..., 0]

    @property
    def xyz(self) -> Vec3:
        return self.values[..., 1:]


@dataclass(frozen=True, eq=False, repr=False)
class MRP(Representation):
    """Modified Rodrigues parameters p = tan(angle / 4) * axis."""

    tag = RepresentationType.MRP
    fields = ("p1", "p2", "p3")

    @property
    def p(self) -> Vec3:
        return self.values


@dataclass(frozen=True, eq=False, repr=False)
class SixD(Representation):
    tag = RepresentationType.SIXD
    fields = ("nu1_x", "nu1_y", "nu1_z", "nu2_x", "nu2_y", "nu2_z")

    @classmethod
    def from_columns(cls, nu1: npt.ArrayLike, nu2: npt.ArrayLike) -> SixD:
        return cls(np.concatenate([np.asarray(nu1, float), np.asarray(nu2, float)], axis=-1))

    @property
    def nu1(self) -> Vec3:
        return self.values[..., :3]

    @property
    def nu2(self) -> Vec3:
        return self.values[..., 3:]


@dataclass(frozen=True, eq=False, repr=False)
class NineD(Representation):
    """Unconstrained 3x3 matrix, stored column-major like vec(M)."""

    tag = RepresentationType.NINED
    fields = ("m11", "m21", "m31", "m12", "m22", "m32", "m13", "m23", "m33")

    @classmethod
    def from_matrix(cls, m: npt.ArrayLike) -> NineD:
        m_arr = np.asarray(m, dtype=np.float64)
        return cls(np.swapaxes(m_arr, -1, -2).reshape(*m_arr.shape[:-2], 9))

    @property
    def m(self) -> FloatArray:
        return np.swapaxes(self.values.reshape(*self.values.shape[:-1], 3, 3), -1, -2)


@dataclass(frozen=True, eq=False, repr=False)
class Angle2D(Representation):
    tag = RepresentationType.ANGLE2D
    fields = ("alpha",)

    @property
    def alpha(self) -> FloatArray:
        return self.values[..., 0]


@dataclass(frozen=True, eq=False, repr=False)
class SinCos2D(Representation):
    tag = RepresentationType.SINCOS2D
    fields = ("c", "s")

    @property
    def c(self) -> FloatArray:
        return self.values[..., 0]

    @property
    def s(self) -> FloatArray:
        return self.values[..., 1]


REPRESENTATION_CLASSES: dict[RepresentationType, type[Representation]] = {
    cls.tag: cls
    for cls in (
        EulerXYZ,
        ExpCoord,
        AxisAngle,
        UnitQuaternion,
        MRP,
        SixD,
        NineD,
        Angle2D,
        SinCos2D,
    )
}


@dataclass(frozen=True, eq=False)
class SVDFactors:
    u: FloatArray
    sigma: FloatArray
    v: FloatArray

    def reconstruct(self) -> FloatArray:
        return (self.u * self.sigma[..., None, :]) @ np.swapaxes(self.v, -1, -2)


@dataclass(frozen=True)
class LossSpec:
    metric: MetricType
    projection: ProjectionType = ProjectionType.NONE
    picking: PickingPolicy = PickingPolicy.PLAIN
    target_space: TargetSpace = TargetSpace.REPRESENTATION
    representation: RepresentationType | None = None

    @property
    def label(self) -> str:
        parts = [self.metric.value]
        if self.picking is not PickingPolicy.PLAIN:
            parts.append(self.picking.value)
        if self.projection is not ProjectionType.NONE:
            parts.append(self.projection.value)
        return "-".join(parts)


@dataclass(frozen=True)
class OutputHead:
    representation: RepresentationType
    projection: ProjectionType = ProjectionType.NONE
    halfspace: bool = False
    augment: bool = False


@dataclass(frozen=True)
class TrainConfig:
    optimizer: OptimizerType = OptimizerType.ADAM
    learning_rate: float = 1e-3
    momentum: float = 0.9
    betas: tuple[float, float] = ADAM_BETAS
    batch_size: int = 64
    max_epochs: int = 100
    patience: int | None = 10
    seed: int = 0

    def __post_init__(self) -> None:
        errors = []
        if self.learning_rate <= 0:
            errors.append(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            errors.append(f"momentum must be in [0, 1), got {self.momentum}")
        if not all(0 <= b < 1 for b in self.betas):
            errors.append(f"betas must be in [0, 1), got {self.betas}")
        if self.batch_size <= 0:
            errors.append(f"batch_size must be positive, got {self.batch_size}")
        if self.max_epochs <= 0:
            errors.append(f"max_epochs must be positive, got {self.max_epochs}")
        if self.patience is not None and not 0 <= self.patience <= self.max_epochs:
            errors.append(f"patience must be in [0, max_epochs], got {self.patience}")
        if errors:
            raise ConfigError(errors)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float


@dataclass
class RunRecord:
    """One row of experiment output."""

    experiment: ExperimentType
    rep: str = ""
    loss: str = ""
    seed: int = 0
    values: dict[str, float | int | str] = field(default_factory=dict)
    wall_time: float = 0.0

    def get(self, column: str) -> float | int | str:
        if column in self.values:
            return self.values[column]
        if column in ("rep", "loss", "seed"):
            return getattr(self, column)  # type: ignore[no-any-return]
        raise KeyError(column)


@dataclass(frozen=True)
class LipschitzConfig:
    reps: tuple[str, ...] = ("quat",)
    pairs: int = 10000
    boundary_fraction: float = 0.5


@dataclass(frozen=True)
class GradPathsConfig:
    projections: tuple[str, ...] = ("gso", "svd_plus")
    seeds: int = 50
    iters: int = 150
    lr: float = 0.05
    momentum: float = 0.9
    threshold: float = 1e-2
    box: float = 2.0


@dataclass(frozen=True)
class GradRatioConfig:
    n: int = 20000
    box: float = 2.0


@dataclass(frozen=True)
class FourierConfig:
    nb: tuple[int, ...] = (1, 2, 3, 4, 5)
    reps: tuple[str, ...] = ("euler", "exp", "quat", "quat_aug", "sixd", "nined")
    seeds: int = 10
    sizes: tuple[int, ...] = (800, 200, 1000)
    epochs: int = 400
    lr: float = 1e-3
    batch_size: int = 64
    hidden: tuple[int, ...] = (256, 256)
    target_hidden: int = 64
    augment: str = "batch"
    epsilon: float = AUGMENT_EPSILON
    flip_prob: float = FLIP_PROBABILITY


@dataclass(frozen=True)
class ToyEstimationConfig:
    variants: tuple[str, ...] = (
        "euler:mse",
        "euler:mae",
        "exp:mse",
        "quat:mse",
        "quat:mse_dp",
        "quat:cd",
        "quat_nohs:mse",
        "quat_aug:mse",
        "quat_rf:mse",
        "quat_rf:mse_dp",
        "sixd:mse",
        "sixd_gso:chordal_sq",
        "nined:mse",
        "nined_svd:chordal_sq",
        "nined_svd:geodesic",
    )
    seeds: int = 10
    n_points: int = 32
    noise: float = 0.0
    sizes: tuple[int, ...] = (1024, 256, 512)
    hidden: tuple[int, ...] = (128, 128)
    epochs: int = 100
    patience: int = 10
    lr: float = 1e-3
    batch_size: int = 64


@dataclass(frozen=True)
class BenchConfig:
    batches: tuple[int, ...] = (1, 32, 256, 1024)
    repetitions: int = 100
    warmup: int = 10


@dataclass(frozen=True)
class DistanceFieldConfig:
    metrics: tuple[str, ...] = ("l2", "l2_normalized", "cosine", "angular")
    grid: int = 21
    extent: float = 2.0


EXPERIMENT_CONFIGS: dict[ExperimentType, type] = {
    ExperimentType.LIPSCHITZ: LipschitzConfig,
    ExperimentType.GRADPATHS: GradPathsConfig,
    ExperimentType.GRADRATIO: GradRatioConfig,
    ExperimentType.FOURIER: FourierConfig,
    ExperimentType.TOYEST: ToyEstimationConfig,
    ExperimentType.BENCH: BenchConfig,
    ExperimentType.DISTFIELD: DistanceFieldConfig,
}


@dataclass
class GradientPathResult:
    run: str
    records: list[RunRecord]
    loss_trace: list[float]
    unstable: bool = False
    reason: str = ""

    @property
    def min_loss(self) -> float:
        finite = [v for v in self.loss_trace if np.isfinite(v)]
        return min(finite) if finite else float("inf")


@dataclass
class GradientRatioResult:
    records: list[RunRecord]
    skipped: dict[str, int] = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Inputs (n, features) with targets (n, d) or rotation matrices (n, 3, 3)."""

    inputs: FloatArray
    targets: FloatArray

    def __post_init__(self) -> None:
        if len(self.inputs) != len(self.targets):
            raise DataError(f"inputs and targets differ in length: {len(self.inputs)} != {len(self.targets)}")
        if len(self.inputs) == 0:
            raise DataError("dataset is empty")

    def __len__(self) -> int:
        return len(self.inputs)

    def subset(self, index: npt.NDArray[np.integer]) -> Dataset:
        return Dataset(self.inputs[index], self.targets[index])


@dataclass(frozen=True)
class RunSettings:
    """Everything `run` needs: the experiment, its config and the global keys."""

    experiment: ExperimentType
    config: object
    seed: int = 0
    out_dir: str | None = None
    workers: int = 1
    svg: bool = False
