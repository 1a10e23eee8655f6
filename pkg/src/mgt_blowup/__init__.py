"""Numerical lab for finite-time blow-up of the semilinear MGT equation

    beta u_ttt + u_tt - Lap u - beta Lap u_t = |u_t|^p

with radial data, an eigenfunction test-function toolkit and a log-space
evaluator for the lifespan upper-bound constants.
"""

from .config import (
    CRITICAL,
    SUBCRITICAL,
    SUPERCRITICAL,
    ConfigError,
    DataShape,
    ProblemParams,
    RunConfig,
    SolverConfig,
    SweepSettings,
    classify_regime,
    load_config,
)

__version__ = "0.1.0"

__all__ = [
    "CRITICAL",
    "SUBCRITICAL",
    "SUPERCRITICAL",
    "ConfigError",
    "DataShape",
    "ProblemParams",
    "RunConfig",
    "SolverConfig",
    "SweepSettings",
    "classify_regime",
    "load_config",
]
