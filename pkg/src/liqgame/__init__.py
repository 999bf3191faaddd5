"""Optimal liquidation with many traders: finite-player Nash and mean-field equilibria under a common OU signal."""

from .model import ILLUSTRATION_PARAMS, STUDY_PARAMS, ModelParams, TimeGrid, build_time_grid
from .signal import BASE_SIGNAL, ZERO_SIGNAL, OUParams, SignalPath, simulate_ou
from .spectral import AssumptionError, CoefficientKind, check_assumptions, coefficients
from .mfg import mfg_agent_direct, mfg_agent_path, simulate_mfg_aggregate
from .finite import finite_agent_path, simulate_finite_aggregate

__version__ = "0.1.0"

__all__ = [
    "AssumptionError",
    "CoefficientKind",
    "ModelParams",
    "OUParams",
    "ILLUSTRATION_PARAMS",
    "BASE_SIGNAL",
    "STUDY_PARAMS",
    "SignalPath",
    "TimeGrid",
    "ZERO_SIGNAL",
    "build_time_grid",
    "check_assumptions",
    "coefficients",
    "finite_agent_path",
    "mfg_agent_direct",
    "mfg_agent_path",
    "simulate_finite_aggregate",
    "simulate_mfg_aggregate",
    "simulate_ou",
    "__version__",
]
