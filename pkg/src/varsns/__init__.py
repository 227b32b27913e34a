"""Observability-driven sensor selection for nonlinear dynamical networks.

Typical flow: simulate a model, accumulate per-sensor Gramian contributions
along the trajectory, then pick sensors greedily or by continuous greedy
with pipage rounding.
"""

from .continuous import SamplerConfig, continuous_select, exact_F
from .errors import (
    ConfigError,
    InfeasibleTrajectoryError,
    ModelValidationError,
    NewtonConvergenceError,
    NumericalError,
    SingularMatrixError,
)
from .estimation import estimate_initial_state, validation_run
from .greedy import SelectionResult, brute_force_optimum, greedy_select
from .integrator import IrkConfig, irk_step, propagate, simulate, step_jacobian
from .metrics import Metric, check_properties, evaluate
from .model import LinearModel, LogisticModel, ReactionNetwork, builtin_model, load_model
from .variational import GramianContributions, TransitionStack, sensor_contributions, transition_matrices

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "GramianContributions",
    "InfeasibleTrajectoryError",
    "IrkConfig",
    "LinearModel",
    "LogisticModel",
    "Metric",
    "ModelValidationError",
    "NewtonConvergenceError",
    "NumericalError",
    "ReactionNetwork",
    "SamplerConfig",
    "SelectionResult",
    "SingularMatrixError",
    "TransitionStack",
    "brute_force_optimum",
    "builtin_model",
    "check_properties",
    "continuous_select",
    "estimate_initial_state",
    "evaluate",
    "exact_F",
    "greedy_select",
    "irk_step",
    "load_model",
    "propagate",
    "sensor_contributions",
    "simulate",
    "step_jacobian",
    "transition_matrices",
    "validation_run",
]
