"""Problem description and run configuration shared by every module.

A configuration file is a JSON object with the sections ``problem``,
``data``, ``solver`` and ``sweep``.  Each key maps one-to-one to a field of
the matching dataclass below; unknown keys are rejected.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

SUBCRITICAL = "subcritical"
CRITICAL = "critical"
SUPERCRITICAL = "supercritical"

REGIMES = (SUBCRITICAL, CRITICAL, SUPERCRITICAL)

_CRITICAL_RTOL = 1e-12


class ConfigError(ValueError):
    """Raised for invalid parameters or malformed configuration files."""


def glassey_exponent(n: int) -> float:
    """Critical exponent (n+1)/(n-1); infinite for n = 1."""
    if n < 1:
        raise ConfigError(f"dimension must be >= 1, got {n}")
    if n == 1:
        return math.inf
    return (n + 1) / (n - 1)


@dataclass(frozen=True)
class ProblemParams:
    n: int = 1
    p: float = 2.0
    beta: float = 1.0
    R: float = 1.0
    epsilon: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError(f"n must be an integer >= 1, got {self.n}")
        if not self.p > 1:
            raise ConfigError(f"p must exceed 1, got {self.p}")
        if not self.beta > 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")
        if not self.R > 0:
            raise ConfigError(f"R must be positive, got {self.R}")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def p_glassey(self) -> float:
        return glassey_exponent(self.n)

    @property
    def regime(self) -> str:
        return classify_regime(self)

    def with_epsilon(self, epsilon: float) -> "ProblemParams":
        return ProblemParams(self.n, self.p, self.beta, self.R, epsilon)


def classify_regime(params: ProblemParams) -> str:
    """Return ``subcritical``, ``critical`` or ``supercritical`` from (n, p) alone."""
    n, p = params.n, params.p
    if n == 1:
        return SUBCRITICAL
    p_gla = glassey_exponent(n)
    if abs(p - p_gla) <= _CRITICAL_RTOL * p_gla:
        return CRITICAL
    if p < p_gla:
        return SUBCRITICAL
    return SUPERCRITICAL


@dataclass(frozen=True)
class DataShape:
    """Bump amplitudes for (u0, u1, u2); each profile is (1 - r^2/R^2)_+^m."""

    amplitude_u0: float = 0.0
    amplitude_u1: float = 1.0
    amplitude_u2: float = 0.0
    m: int = 3

    def __post_init__(self):
        amps = (self.amplitude_u0, self.amplitude_u1, self.amplitude_u2)
        if any(a < 0 for a in amps):
            raise ConfigError(f"amplitudes must be nonnegative, got {amps}")
        if int(self.m) != self.m or self.m < 3:
            raise ConfigError(f"bump exponent m must be an integer >= 3, got {self.m}")

    @property
    def admissible(self) -> bool:
        # blow-up hypothesis: u1 or u2 not identically zero
        return self.amplitude_u1 + self.amplitude_u2 > 0


@dataclass(frozen=True)
class SolverConfig:
    r_max: float = 12.0
    num_cells: int = 1024
    cfl: float = 0.4
    t_max: float = 10.0
    blowup_threshold: float = 1e8
    dt_min: float = 1e-10

    def __post_init__(self):
        if not self.r_max > 0:
            raise ConfigError(f"r_max must be positive, got {self.r_max}")
        if int(self.num_cells) != self.num_cells or self.num_cells < 2:
            raise ConfigError(f"num_cells must be an integer >= 2, got {self.num_cells}")
        if not 0 < self.cfl <= 1:
            raise ConfigError(f"cfl must lie in (0, 1], got {self.cfl}")
        if not self.t_max > 0:
            raise ConfigError(f"t_max must be positive, got {self.t_max}")
        if not self.blowup_threshold > 0:
            raise ConfigError("blowup_threshold must be positive")
        if not self.dt_min > 0:
            raise ConfigError("dt_min must be positive")

    @property
    def dr(self) -> float:
        return self.r_max / self.num_cells

    def required_r_max(self, R: float) -> float:
        """Smallest r_max keeping the support cone off the outer boundary."""
        # r_max >= t_max + R + 2 r_max / N  <=>  r_max (1 - 2/N) >= t_max + R
        return (self.t_max + R) / (1.0 - 2.0 / self.num_cells)

    def check_cone(self, R: float) -> None:
        needed = self.required_r_max(R)
        if self.r_max < needed * (1 - 1e-14):
            raise ConfigError(
                f"r_max={self.r_max} lets the support cone reach the boundary; "
                f"need r_max >= {needed:.12g} for t_max={self.t_max}, R={R}"
            )


@dataclass(frozen=True)
class SweepSettings:
    epsilons: tuple[float, ...] = ()
    resolutions: tuple[int, ...] = ()
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "epsilons", tuple(float(e) for e in self.epsilons))
        object.__setattr__(self, "resolutions", tuple(int(r) for r in self.resolutions))
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemParams = field(default_factory=ProblemParams)
    data: DataShape = field(default_factory=DataShape)
    solver: SolverConfig = field(default_factory=SolverConfig)
    sweep: SweepSettings = field(default_factory=SweepSettings)

    def to_dict(self) -> dict[str, dict[str, Any]]:
        out = {}
        for section, cls in _SECTIONS.items():
            obj = getattr(self, section)
            values = {}
            for f in fields(cls):
                val = getattr(obj, f.name)
                values[f.name] = list(val) if isinstance(val, tuple) else val
            out[section] = values
        return out


_SECTIONS = {
    "problem": ProblemParams,
    "data": DataShape,
    "solver": SolverConfig,
    "sweep": SweepSettings,
}


def _build(cls, section: str, raw: Any):
    if not isinstance(raw, dict):
        raise ConfigError(f"section '{section}' must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in section '{section}': {', '.join(unknown)}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"section '{section}': {exc}") from exc


def config_from_dict(tree: dict[str, Any]) -> RunConfig:
    if not isinstance(tree, dict):
        raise ConfigError("configuration root must be an object")
    unknown = sorted(set(tree) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    parts = {name: _build(cls, name, tree.get(name, {})) for name, cls in _SECTIONS.items()}
    return RunConfig(**parts)


def load_config(path: str | Path) -> RunConfig:
    with open(path) as fh:
        try:
            tree = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(tree)


def dump_config(config: RunConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2)
        fh.write("\n")
