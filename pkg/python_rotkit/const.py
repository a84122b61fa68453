import math
from enum import Enum, IntEnum

ROTKIT_OUT_ENV = "ROTKIT_OUT"
DEFAULT_OUT_DIR = "out"
FLOAT_FORMAT = ".17g"


class ExitCode(IntEnum):
    SUCCESS = 0
    CONFIG_ERROR = 2
    DATA_ERROR = 3
    NUMERICAL_FAILURE = 4


class RepresentationType(Enum):
    EULER = "euler"
    EXP = "exp"
    AXIS_ANGLE = "axis_angle"
    QUAT = "quat"
    MRP = "mrp"
    SIXD = "sixd"
    NINED = "nined"
    ANGLE2D = "angle2d"
    SINCOS2D = "sincos2d"


SO3_REPRESENTATIONS = (
    RepresentationType.EULER,
    RepresentationType.EXP,
    RepresentationType.AXIS_ANGLE,
    RepresentationType.QUAT,
    RepresentationType.MRP,
    RepresentationType.SIXD,
    RepresentationType.NINED,
)


class MetricType(Enum):
    L2 = "l2"
    L1 = "l1"
    MSE = "mse"
    MAE = "mae"
    COSINE = "cosine"
    ANGULAR = "angular"
    L2_NORMALIZED = "l2_normalized"
    QUAT_PICK_I = "quat_pick_i"
    QUAT_PICK_II = "quat_pick_ii"
    EULER_PICK = "euler_pick"
    CHORDAL = "chordal"
    CHORDAL_SQ = "chordal_sq"
    GEODESIC = "geodesic"


MATRIX_METRICS = (MetricType.CHORDAL, MetricType.CHORDAL_SQ, MetricType.GEODESIC)
VECTOR_METRICS = (
    MetricType.L2,
    MetricType.L1,
    MetricType.MSE,
    MetricType.MAE,
    MetricType.COSINE,
    MetricType.ANGULAR,
    MetricType.L2_NORMALIZED,
)
FIELD_METRICS = (MetricType.L2, MetricType.L2_NORMALIZED, MetricType.COSINE, MetricType.ANGULAR)


class ProjectionType(Enum):
    NONE = "none"
    GSO = "gso"
    SVD_PLUS = "svd_plus"


class PickingPolicy(Enum):
    PLAIN = "plain"
    QUAT_PICK_I = "quat_pick_i"
    QUAT_PICK_II = "quat_pick_ii"


class TargetSpace(Enum):
    REPRESENTATION = "representation"
    SO3 = "so3"


class OptimizerType(Enum):
    SGD_MOMENTUM = "sgd_momentum"
    ADAM = "adam"


class ExperimentType(Enum):
    LIPSCHITZ = "lipschitz"
    GRADPATHS = "gradpaths"
    GRADRATIO = "gradratio"
    FOURIER = "fourier"
    TOYEST = "toyest"
    BENCH = "bench"
    DISTFIELD = "distfield"


class PlotKind(Enum):
    SCATTER = "scatter"
    DENSITY = "density"
    VECFIELD = "vecfield"
    PATHS = "paths"


CSV_SCHEMAS: dict[ExperimentType, tuple[str, ...]] = {
    ExperimentType.LIPSCHITZ: ("rep", "d_so3", "d_repr"),
    ExperimentType.GRADPATHS: ("run", "iter", "vector", "comp_x", "comp_y", "comp_z", "loss"),
    ExperimentType.GRADRATIO: ("projection", "ratio_pair", "ratio"),
    ExperimentType.FOURIER: ("rep", "n_b", "seed", "rmse_train", "rmse_val", "rmse_test"),
    ExperimentType.TOYEST: ("rep", "loss", "seed", "geodesic_med", "chordal_med"),
    ExperimentType.BENCH: ("op", "batch", "median_ms"),
    ExperimentType.DISTFIELD: ("y1", "y2", "gx", "gy", "defined"),
}

PLOT_SCHEMAS: dict[PlotKind, ExperimentType] = {
    PlotKind.SCATTER: ExperimentType.LIPSCHITZ,
    PlotKind.DENSITY: ExperimentType.GRADRATIO,
    PlotKind.VECFIELD: ExperimentType.DISTFIELD,
    PlotKind.PATHS: ExperimentType.GRADPATHS,
}

# tolerances
VALID_TOL = 1e-9
IDENTITY_TOL = 1e-12
SKEW_TOL = 1e-6
QUAT_NORM_TOL = 1e-6
SMALL_ANGLE = 1e-8
GIMBAL_TOL = 1e-9
ARCCOS_EPS = 1e-7
NONZERO_NORM = 1e-12

# svd / projections
SVD_MAX_SWEEPS = 30
SVD_OFF_DIAGONAL_TOL = 1e-14
SVD_RANK_TOL = 1e-13
SVD_GAP_FLOOR = 1e-8
NEAR_SINGULAR_DET = 1e-6
SIXD_MIN_NORM = 1e-12
SIXD_MIN_SINE = 1e-7

# canonicalization and augmentation
SMALL_ROTATION_BOUND = math.sqrt(2.0)
AUGMENT_EPSILON = 0.1
FLIP_PROBABILITY = 0.5

# optimizers
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8

# largest distance between two canonical images of g, per representation
REPRESENTATION_WIDTH: dict[RepresentationType, float] = {
    RepresentationType.EULER: 3.0 * math.pi,
    RepresentationType.EXP: 2.0 * math.pi,
    RepresentationType.AXIS_ANGLE: math.sqrt(4.0 + math.pi**2),
    RepresentationType.QUAT: 2.0,
    RepresentationType.MRP: 2.0,
    RepresentationType.SIXD: 2.0 * math.sqrt(2.0),
    RepresentationType.NINED: 2.0 * math.sqrt(2.0),
}
CHORDAL_MAX = 2.0 * math.sqrt(2.0)

# experiments
FOURIER_PERIOD = 2.0
FOURIER_REFERENCE_SIZE = 1000
LIPSCHITZ_PROBE_WIDTH = 1e-2
FIELD_TARGET = (1.0, 0.0)

EXPERIMENT_NOTES = {
    ExperimentType.TOYEST: "point-pair MLP replaces PointNet; representation/loss comparison only",
    ExperimentType.GRADPATHS: "orientation loss read as ||vec(R) - vec(f(r))||",
}
