"""Blow-up functional F1 and the integral identities it satisfies.

With the test function Psi(t, x) = exp(-t) Phi(x):

    F1(t) = int u_t Psi dx,
    NL(t) = int_0^t int |u_t|^p Psi dx ds,
    NL(t) = int (beta u_tt + (beta+1) u_t + u) Psi dx - eps I_beta,
    G(t)  = F1' + 2 F1 - NL/(beta+1) - eps J_beta/(beta+1)  >= 0,
    H(t)  = NL/(beta+1) + eps J_beta/(beta+1).

Spatial integrals use composite Simpson weights on the radial mesh; NL is
accumulated by the trapezoidal rule over accepted solver steps.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import DataShape, ProblemParams, SolverConfig
from .mgt_system import (
    FieldState,
    LifespanRecord,
    RadialMesh,
    bump,
    evolve,
    laplacian_radial,
    make_initial_data,
)
from .special_functions import EigenfunctionEvaluator, adaptive_simpson, phi, sphere_measure

_FLOOR = 1e-12


def simpson_weights(num_cells: int, h: float) -> np.ndarray:
    """Composite Simpson weights on num_cells + 1 equispaced nodes.

    An odd cell count closes with the 3/8 rule on the last three cells.
    """
    if num_cells < 2:
        raise ValueError("need at least two cells")
    w = np.zeros(num_cells + 1)
    even = num_cells if num_cells % 2 == 0 else num_cells - 3
    if even > 0:
        w[0:even + 1:2] += 2.0
        w[1:even:2] += 4.0
        w[0] -= 1.0
        w[even] -= 1.0
        w[: even + 1] *= h / 3.0
    if even != num_cells:
        w[even:] += 3.0 * h / 8.0 * np.array([1.0, 3.0, 3.0, 1.0])
    return w


class RadialQuadrature:
    """Weights for  int_{R^n} f(|x|) Phi(|x|) dx  on a radial mesh."""

    def __init__(self, mesh: RadialMesh, evaluator: Optional[EigenfunctionEvaluator] = None):
        self.mesh = mesh
        self.evaluator = evaluator or EigenfunctionEvaluator(mesh.n)
        r = mesh.r
        self.volume = sphere_measure(mesh.n) * simpson_weights(mesh.num_cells, mesh.dr) \
            * r ** (mesh.n - 1)
        self.phi_nodes = self.evaluator.phi(r)
        self.phi_weights = self.volume * self.phi_nodes

    def integrate(self, values: np.ndarray) -> float:
        """int values dx (radial profile)."""
        return float(self.volume @ values)

    def against_phi(self, values: np.ndarray) -> float:
        """int values Phi dx."""
        return float(self.phi_weights @ values)

    def against_psi(self, values: np.ndarray, t: float) -> float:
        """int values Psi(t, .) dx."""
        return math.exp(-t) * float(self.phi_weights @ values)


def f1(state: FieldState, mesh: RadialMesh,
       evaluator: Optional[EigenfunctionEvaluator] = None,
       quad: Optional[RadialQuadrature] = None) -> float:
    quad = quad or RadialQuadrature(mesh, evaluator)
    return quad.against_psi(state.v, state.t)


@dataclass(frozen=True)
class DataIntegrals:
    """Shape integrals int u_i Phi dx, without the amplitude eps."""

    u0_phi: float
    u1_phi: float
    u2_phi: float


def data_integrals(params: ProblemParams, shape: DataShape, mesh: RadialMesh,
                   quad: Optional[RadialQuadrature] = None) -> DataIntegrals:
    quad = quad or RadialQuadrature(mesh)
    base = quad.against_phi(bump(mesh.r, params.R, shape.m))
    return DataIntegrals(shape.amplitude_u0 * base, shape.amplitude_u1 * base,
                         shape.amplitude_u2 * base)


def data_integrals_exact(params: ProblemParams, shape: DataShape) -> DataIntegrals:
    """Mesh-free shape integrals by adaptive quadrature on [0, R]."""
    n, R, m = params.n, params.R, shape.m
    radial = adaptive_simpson(lambda r: (1.0 - (r / R) ** 2) ** m * phi(n, r) * r ** (n - 1),
                              0.0, R, rtol=1e-12)
    base = sphere_measure(n) * radial
    return DataIntegrals(shape.amplitude_u0 * base, shape.amplitude_u1 * base,
                         shape.amplitude_u2 * base)


def i_beta(ints: DataIntegrals, beta: float) -> float:
    """int (beta u2 + (beta+1) u1 + u0) Phi dx."""
    return beta * ints.u2_phi + (beta + 1.0) * ints.u1_phi + ints.u0_phi


def j_beta(ints: DataIntegrals, beta: float) -> float:
    """int (beta u2 + (beta+1) u1) Phi dx."""
    return beta * ints.u2_phi + (beta + 1.0) * ints.u1_phi


def moment_identity_value(state: FieldState, mesh: RadialMesh, params: ProblemParams,
             quad: RadialQuadrature, ibeta: float) -> float:
    """int (beta u_tt + (beta+1) u_t + u) Psi dx - eps I_beta with u_tt = Lap u + w."""
    beta = params.beta
    u_tt = laplacian_radial(state.u, mesh) + state.w
    combo = beta * u_tt + (beta + 1.0) * state.v + state.u
    return quad.against_psi(combo, state.t) - params.epsilon * ibeta


@dataclass
class FunctionalTrace:
    epsilon: float
    beta: float
    Ibeta: float
    Jbeta: float
    times: list = field(default_factory=list)
    F1: list = field(default_factory=list)
    NL: list = field(default_factory=list)
    # instantaneous int |u_t|^p Psi dx, the integrand of NL
    NL_rate: list = field(default_factory=list)
    identity_value: list = field(default_factory=list)
    identity_residual: list = field(default_factory=list)

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: np.asarray(getattr(self, k), dtype=float)
                for k in ("times", "F1", "NL", "NL_rate", "identity_value", "identity_residual")}

    @property
    def H(self) -> np.ndarray:
        nl = np.asarray(self.NL, dtype=float)
        return (nl + self.epsilon * self.Jbeta) / (self.beta + 1.0)

    @property
    def G(self) -> np.ndarray:
        return g_series(self)

    def value_at(self, name: str, t: float) -> float:
        """Linear interpolation of a stored series at time t."""
        arr = self.arrays()
        return float(np.interp(t, arr["times"], arr[name]))


def _residual(lhs: float, rhs: float) -> float:
    return abs(lhs - rhs) / (1.0 + abs(rhs))


class FunctionalProbe:
    """Solver probe accumulating F1, NL and the identity residual per step."""

    def __init__(self, params: ProblemParams, ints: DataIntegrals, mesh: RadialMesh,
                 quad: Optional[RadialQuadrature] = None, *, nonlinear: bool = True,
                 forcing=None):
        # NL integrates the source the solver actually applies
        self.nonlinear = nonlinear
        self.forcing = forcing
        self.params = params
        self.mesh = mesh
        self.quad = quad or RadialQuadrature(mesh)
        self.ibeta = i_beta(ints, params.beta)
        self.trace = FunctionalTrace(params.epsilon, params.beta, self.ibeta,
                                     j_beta(ints, params.beta))

    def __call__(self, state: FieldState, mesh: RadialMesh) -> None:
        tr = self.trace
        p = self.params.p
        if self.forcing is not None:
            rate = self.quad.against_psi(self.forcing(state.t, mesh.r), state.t)
        elif self.nonlinear:
            with np.errstate(over="ignore", invalid="ignore"):
                rate = self.quad.against_psi(np.abs(state.v) ** p, state.t)
        else:
            rate = 0.0
        if tr.times:
            nl = tr.NL[-1] + 0.5 * (state.t - tr.times[-1]) * (rate + tr.NL_rate[-1])
        else:
            nl = 0.0
        rhs = moment_identity_value(state, mesh, self.params, self.quad, self.ibeta)
        tr.times.append(state.t)
        tr.F1.append(self.quad.against_psi(state.v, state.t))
        tr.NL.append(nl)
        tr.NL_rate.append(rate)
        tr.identity_value.append(rhs)
        tr.identity_residual.append(_residual(nl, rhs))


def identity_residual_at(trace: FunctionalTrace, state: FieldState, mesh: RadialMesh,
                           params: ProblemParams, quad: Optional[RadialQuadrature] = None) -> float:
    """|NL(t) - RHS(t)| / (1 + |RHS(t)|) for a state synchronized with the trace."""
    times = np.asarray(trace.times)
    hits = np.flatnonzero(times == state.t)
    if hits.size == 0:
        raise ValueError(f"state at t={state.t} is not on the trace")
    quad = quad or RadialQuadrature(mesh)
    rhs = moment_identity_value(state, mesh, params, quad, trace.Ibeta)
    return _residual(trace.NL[hits[-1]], rhs)


def _derivative(values: np.ndarray, times: np.ndarray) -> np.ndarray:
    return np.gradient(values, times, edge_order=2)


def g_series(trace: FunctionalTrace) -> np.ndarray:
    """G(t) with F1' by second-order differences on the trace's own times."""
    if len(trace.times) < 3:
        raise ValueError("need at least 3 trace points")
    t = np.asarray(trace.times, dtype=float)
    f = np.asarray(trace.F1, dtype=float)
    return _derivative(f, t) + 2.0 * f - trace.H


def check_g_nonnegative(trace: FunctionalTrace) -> float:
    """Minimum of G over the trace."""
    return float(np.min(g_series(trace)))


def check_initial_lower_bound(trace: FunctionalTrace, C2: float) -> float:
    """min over t >= 1/2 of F1(t) / (C2 eps)."""
    t = np.asarray(trace.times)
    sel = t >= 0.5
    if not sel.any():
        raise ValueError("trace ends before t = 1/2")
    return float(np.min(np.asarray(trace.F1)[sel]) / (C2 * trace.epsilon))


def h_prime_margin(trace: FunctionalTrace, params: ProblemParams, C1: float,
                   t_min: float = 0.0) -> float:
    """Worst relative margin of  dNL/dt >= C1^(1-p) (t+R)^(-(n-1)(p-1)/2) F1^p.

    dNL/dt is taken by centered differences of the accumulated NL.  A
    negative result means the inequality failed somewhere on the trace.
    """
    t = np.asarray(trace.times, dtype=float)
    nl = np.asarray(trace.NL, dtype=float)
    f = np.maximum(np.asarray(trace.F1, dtype=float), 0.0)
    rate = _derivative(nl, t)
    n, p, R = params.n, params.p, params.R
    lower = C1 ** (1.0 - p) * (t + R) ** (-(n - 1) * (p - 1) / 2.0) * f**p
    sel = (t >= t_min) & (lower > 0)
    if not sel.any():
        return math.inf
    return float(np.min((rate[sel] - lower[sel]) / np.maximum(lower[sel], _FLOOR)))


def run_with_trace(params: ProblemParams, shape: DataShape, solver: SolverConfig,
                   probes=(), **evolve_kwargs) -> tuple[LifespanRecord, FunctionalTrace]:
    """Evolve bump data and record the functional trace along the way."""
    mesh = RadialMesh.from_extent(params.n, solver.r_max, solver.num_cells)
    quad = RadialQuadrature(mesh)
    ints = data_integrals(params, shape, mesh, quad)
    probe = FunctionalProbe(params, ints, mesh, quad,
                            nonlinear=evolve_kwargs.get("nonlinear", True),
                            forcing=evolve_kwargs.get("forcing"))
    initial = make_initial_data(params, shape, mesh)
    record = evolve(initial, params, solver, [probe, *probes], mesh=mesh, **evolve_kwargs)
    return record, probe.trace


TRACE_COLUMNS = ("t", "F1", "NL", "G", "H", "residual_eq01")


def write_trace_csv(path, trace: FunctionalTrace) -> None:
    arr = trace.arrays()
    g = g_series(trace) if len(trace.times) >= 3 else np.full(len(trace.times), math.nan)
    rows = zip(arr["times"], arr["F1"], arr["NL"], g, trace.H, arr["identity_residual"])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for row in rows:
            writer.writerow([repr(float(x)) for x in row])


def read_trace_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    return {c: np.array([float(r[c]) for r in rows]) for c in TRACE_COLUMNS}
