from __future__ import annotations

from python_rotkit.__version__ import __version__  # noqa
from python_rotkit.const import (  # noqa
    ExperimentType,
    MetricType,
    PickingPolicy,
    ProjectionType,
    RepresentationType,
    TargetSpace,
)
from python_rotkit.exceptions import (  # noqa
    ConfigError,
    DataError,
    NumericalError,
    RotkitError,
    SingularInputError,
)
from python_rotkit.model import (  # noqa
    MRP,
    AxisAngle,
    EulerXYZ,
    ExpCoord,
    LossSpec,
    NineD,
    OutputHead,
    RunRecord,
    SixD,
    TrainConfig,
    UnitQuaternion,
)
