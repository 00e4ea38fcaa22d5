"""Equivariant IMU preintegration on the Galilean group, with a right-invariant baseline."""

from .errors import MethodDiverged, NearPiRotation, NonMonotonicTimestamp, ParseError, SegmentSkipped
from .estimators import EquivariantPreintegrator, RightInvariantPreintegrator
from .gal3 import Gal3Element, exp_gal3, log_gal3
from .preintegration import (
    MEDIUM_NOISE,
    GravityModel,
    ImuInput,
    ManifoldState,
    NoiseParams,
    PreintState,
    apply_bias_update,
    compose_pose,
    imu_input,
    initial_state,
    integrate,
    step,
)
from .se23 import ExtendedPose, exp_se23, log_se23
from .tangent import TangentGroupElement

__version__ = "0.1.0"
