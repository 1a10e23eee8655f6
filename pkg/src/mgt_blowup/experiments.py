"""Amplitude sweeps, lifespan scaling fits and bound comparison.

A sweep runs one simulation per (epsilon, resolution) pair.  Runs are
independent and deterministic; results are merged by plan index so the
output never depends on worker scheduling.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from . import bounds as be
from .config import CRITICAL, SUBCRITICAL, ConfigError, RunConfig, classify_regime
from .functionals import data_integrals_exact, run_with_trace
from .mgt_system import BLEW_UP, SURVIVED, LifespanRecord
from .special_functions import estimate_C1

FAILED = "failed"

RECORD_COLUMNS = ("epsilon", "num_cells", "status", "t_detect", "t_detect_coarse",
                  "t_bound_theory", "F1_at_half", "margin", "t_detect_richardson")


class FitRefusal(ValueError):
    """Not enough usable records, or the wrong regime, for a scaling fit."""


@dataclass(frozen=True)
class SweepPlan:
    epsilons: tuple[float, ...]
    resolutions: tuple[int, ...]
    regime: str
    deterministic: bool = True

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilons)
        object.__setattr__(self, "epsilons", eps)
        object.__setattr__(self, "resolutions", tuple(int(r) for r in self.resolutions))
        if any(e <= 0 for e in eps):
            raise ConfigError("sweep amplitudes must be positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError("sweep amplitudes must be strictly decreasing")
        if eps and not self.resolutions:
            raise ConfigError("sweep needs at least one resolution")

    def check_eps0(self, eps0: float) -> None:
        if any(e > eps0 for e in self.epsilons):
            raise ConfigError(f"sweep amplitudes exceed eps0={eps0}")

    def tasks(self) -> list[tuple[float, int]]:
        return [(e, r) for e in self.epsilons for r in self.resolutions]

    @classmethod
    def from_config(cls, config: RunConfig) -> "SweepPlan":
        return cls(config.sweep.epsilons, config.sweep.resolutions,
                   classify_regime(config.problem))


@dataclass(frozen=True)
class RunFailure:
    epsilon: float
    resolution: int
    error: str
    status: str = FAILED


@dataclass(frozen=True)
class SweepEntry:
    record: Union[LifespanRecord, RunFailure]
    F1_at_half: float


def _run_one(task: tuple[float, int, RunConfig]) -> SweepEntry:
    eps, cells, config = task
    params = config.problem.with_epsilon(eps)
    solver = replace(config.solver, num_cells=cells)
    try:
        record, trace = run_with_trace(params, config.data, solver)
    except Exception as exc:  # recorded, never aborts the sweep
        return SweepEntry(RunFailure(eps, cells, f"{type(exc).__name__}: {exc}"), math.nan)
    f_half = trace.value_at("F1", 0.5) if trace.times[-1] >= 0.5 else math.nan
    return SweepEntry(record, f_half)


def run_sweep(plan: SweepPlan, config: RunConfig, workers: Optional[int] = None,
              bound=None) -> list[SweepEntry]:
    """One evolve per (epsilon, resolution) in plan order.

    ``bound`` (a bundle) fills each record's theoretical lifespan bound.
    """
    tasks = [(e, r, config) for e, r in plan.tasks()]
    workers = workers or config.sweep.workers
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(_run_one, tasks))
    else:
        entries = [_run_one(t) for t in tasks]
    if bound is not None:
        entries = [_with_bound(e, bound) for e in entries]
    return entries


def _with_bound(entry: SweepEntry, bundle) -> SweepEntry:
    rec = entry.record
    if isinstance(rec, RunFailure):
        return entry
    value = be.lifespan_bound(bundle, rec.epsilon).value
    return SweepEntry(replace(rec, t_bound_theory=value), entry.F1_at_half)


@dataclass(frozen=True)
class RecordRow:
    epsilon: float
    num_cells: int
    status: str
    t_detect: float
    t_detect_coarse: float
    t_bound_theory: float
    F1_at_half: float
    margin: float
    t_detect_richardson: float = math.nan

    @property
    def blew_up(self) -> bool:
        return self.status == BLEW_UP and math.isfinite(self.t_detect)


def _t(rec) -> float:
    if isinstance(rec, RunFailure) or rec.t_detect is None:
        return math.nan
    return float(rec.t_detect)


def collate(entries: Sequence[SweepEntry], plan: SweepPlan) -> list[RecordRow]:
    """One row per amplitude at the finest resolution, coarse time alongside."""
    by_key = {}
    for (eps, cells), entry in zip(plan.tasks(), entries):
        by_key[(eps, cells)] = entry
    res = sorted(plan.resolutions)
    fine = res[-1]
    coarse = res[-2] if len(res) > 1 else None
    rows = []
    for eps in plan.epsilons:
        ef = by_key[(eps, fine)]
        rec = ef.record
        t_f = _t(rec)
        t_c = _t(by_key[(eps, coarse)].record) if coarse is not None else math.nan
        t_rich = math.nan
        if math.isfinite(t_f) and math.isfinite(t_c):
            ratio = fine / coarse
            t_rich = t_f + (t_f - t_c) / (ratio**2 - 1.0)
        bound = math.nan if isinstance(rec, RunFailure) else rec.t_bound_theory
        rows.append(RecordRow(
            epsilon=eps, num_cells=fine, status=rec.status, t_detect=t_f,
            t_detect_coarse=t_c, t_bound_theory=bound, F1_at_half=ef.F1_at_half,
            margin=bound - t_f if math.isfinite(t_f) else math.nan,
            t_detect_richardson=t_rich,
        ))
    return rows


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return ""
    return repr(x)


def write_records_csv(path, rows: Iterable[RecordRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RECORD_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(getattr(row, c)) for c in RECORD_COLUMNS])


def read_records_csv(path) -> list[RecordRow]:
    def num(s):
        return math.nan if s in ("", None) else float(s)

    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(RECORD_COLUMNS[:-1]) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        return [RecordRow(
            epsilon=float(r["epsilon"]), num_cells=int(r["num_cells"]), status=r["status"],
            t_detect=num(r["t_detect"]), t_detect_coarse=num(r["t_detect_coarse"]),
            t_bound_theory=num(r["t_bound_theory"]), F1_at_half=num(r["F1_at_half"]),
            margin=num(r["margin"]), t_detect_richardson=num(r.get("t_detect_richardson")),
        ) for r in reader]


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r_squared: float
    theory_slope: float
    relative_gap: float
    count: int


def _linear_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    r2 = 1.0 if ss_tot == 0 else max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    return float(slope), float(intercept), r2


def _usable(records) -> tuple[np.ndarray, np.ndarray]:
    eps, t = [], []
    for r in records:
        t_det = r.t_detect if isinstance(r, RecordRow) else _t(r)
        if getattr(r, "status", None) == BLEW_UP and math.isfinite(t_det):
            eps.append(r.epsilon)
            t.append(t_det)
    if len(eps) < 4:
        raise FitRefusal(f"need at least 4 blow-up records, got {len(eps)}")
    eps = np.array(eps)
    if eps.max() / eps.min() < 10.0 * (1 - 1e-12):
        raise FitRefusal("blow-up records must span at least one decade of epsilon")
    return eps, np.array(t)


def fit_subcritical(records, n: int, p: float) -> ScalingFit:
    """Least-squares slope of log T against log eps."""
    eps, t = _usable(records)
    slope, intercept, r2 = _linear_fit(np.log(eps), np.log(t))
    theory = -be.lifespan_exponent_alt(n, p)
    return ScalingFit(slope, intercept, r2, theory, abs(slope - theory) / abs(theory), len(eps))


def fit_critical(records, n: int, p: float, regime: Optional[str] = None,
                 theory_slope: float = math.nan) -> ScalingFit:
    """Least-squares slope of log T against eps^(-(p-1))."""
    from .config import ProblemParams

    tag = regime or classify_regime(ProblemParams(n=n, p=p))
    if tag != CRITICAL:
        raise FitRefusal(f"critical fit requested for a {tag} configuration")
    eps, t = _usable(records)
    slope, intercept, r2 = _linear_fit(eps ** (-(p - 1.0)), np.log(t))
    gap = abs(slope - theory_slope) / abs(theory_slope) if math.isfinite(theory_slope) else math.nan
    return ScalingFit(slope, intercept, r2, theory_slope, gap, len(eps))


@dataclass(frozen=True)
class ComparisonEntry:
    epsilon: float
    t_detect: float
    t_bound: float
    margin: float
    verdict: str  # ok | violation | excluded | no_blowup


@dataclass(frozen=True)
class ComparisonReport:
    entries: tuple[ComparisonEntry, ...]
    eps0: float
    regime: str

    @property
    def violations(self) -> list[ComparisonEntry]:
        return [e for e in self.entries if e.verdict == "violation"]

    @property
    def passed(self) -> bool:
        return not self.violations

    def lines(self) -> list[str]:
        out = [f"regime={self.regime} eps0={self.eps0:.6g}"]
        for e in self.entries:
            flag = "  <-- VIOLATION" if e.verdict == "violation" else ""
            out.append(f"eps={e.epsilon:.6g} t_detect={e.t_detect:.6g} bound={e.t_bound:.6g} "
                       f"margin={e.margin:.6g} {e.verdict}{flag}")
        out.append("PASS" if self.passed else f"FAIL: {len(self.violations)} violation(s)")
        return out


def bound_value(report: dict, epsilon: float) -> float:
    """Theoretical lifespan bound at epsilon from a bundle report."""
    if report["regime"] == SUBCRITICAL:
        a = be.lifespan_exponent(report["n"], report["p"])
        return float(math.exp(math.log(report["E2"]) - a * math.log(epsilon)))
    log_val = math.log(report["L_limit"]) + (report["Etilde"] * epsilon) ** (-(report["p"] - 1.0))
    return math.exp(log_val) if log_val < 709.0 else math.inf


def compare_bounds(records, bundle) -> ComparisonReport:
    """Check t_detect <= lifespan bound for every record with eps <= eps0."""
    report = bundle if isinstance(bundle, dict) else be.bundle_report(bundle)
    eps0 = report["eps0"] if report["eps0"] is not None else math.inf
    entries = []
    for r in records:
        t_det = r.t_detect if isinstance(r, RecordRow) else _t(r)
        bound = bound_value(report, r.epsilon)
        if getattr(r, "status", None) != BLEW_UP or not math.isfinite(t_det):
            verdict = "no_blowup"
        elif r.epsilon > eps0:
            verdict = "excluded"
        elif t_det <= bound:
            verdict = "ok"
        else:
            verdict = "violation"
        entries.append(ComparisonEntry(r.epsilon, t_det, bound, bound - t_det, verdict))
    return ComparisonReport(tuple(entries), eps0, report["regime"])


def theory_bundle(config: RunConfig, J_max: int = 40, C1_horizon: float = 200.0):
    """Bound-engine bundle for the configured problem and data shape."""
    params = config.problem
    ints = data_integrals_exact(params, config.data)
    C1 = estimate_C1(params.n, params.R, C1_horizon)
    C3 = C1 ** (1.0 - params.p) / (1.0 + params.beta)
    C2, _ = be.first_lower_bound_constants(params, ints.u1_phi, ints.u2_phi, C3)
    return be.bundle_for(params, C1, C2, J_max)


# Desk-scale default sweeps, calibrated so the smallest amplitude blows up
# well inside t_max: (n, p) -> (eps_max, eps_min, count, t_max)
DEFAULT_SWEEPS = {
    (1, 2.0): (2.0, 0.1, 6, 125.0),
    (1, 3.0): (4.0, 0.4, 5, 115.0),
    (2, 2.0): (20.0, 1.5, 6, 120.0),
    (2, 3.0): (35.0, 3.5, 6, 25.0),
    (3, 1.5): (30.0, 3.0, 5, 110.0),
    (3, 2.0): (100.0, 10.0, 6, 160.0),
}


def default_sweep_config(n: int, p: float, workers: int = 1) -> RunConfig:
    """Run configuration for one of the default desk-scale sweeps."""
    from .config import DataShape, ProblemParams, SolverConfig, SweepSettings

    try:
        eps_max, eps_min, count, t_max = DEFAULT_SWEEPS[(n, float(p))]
    except KeyError:
        raise ConfigError(f"no default sweep for n={n}, p={p}") from None
    R = 1.0
    # coarse grid must keep 16 cells across the support
    r_max = float(math.ceil(t_max + R + 1.0))
    fine = 4096 if r_max <= 128 else 8192
    eps = tuple(float(f"{e:.6g}") for e in np.geomspace(eps_max, eps_min, count))
    return RunConfig(
        problem=ProblemParams(n=n, p=p, R=R),
        data=DataShape(),
        solver=SolverConfig(r_max=r_max, num_cells=fine, t_max=t_max),
        sweep=SweepSettings(epsilons=eps, resolutions=(fine // 2, fine), workers=workers),
    )
