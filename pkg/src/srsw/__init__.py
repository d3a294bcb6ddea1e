"""Pseudo-spectral simulator for viscous rotating shallow water with transport noise."""

from .dynamics import (
    INF,
    NonFiniteTendencyError,
    Tendency,
    drift_deterministic,
    drift_truncated,
    ito_rhs,
    nonlinear_l2_bound_check,
    truncation_value,
)
from .grid import GridMismatchError, NonFiniteFieldError, TorusGrid
from .noise import NoiseBasis, NoiseMode, NoisePath, default_basis, g_op, ito_correction, sample_path
from .state import PhysicalParams, State, coriolis, mass, pressure, velocity
from .stepper import IntegrationConfig, StabilityError, TrajectoryRecord, integrate, step_em_ito, step_heun_strat

__version__ = "0.1.0"
