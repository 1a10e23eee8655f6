"""Radial method-of-lines solver for the conservative semilinear MGT equation.

The third-order equation

    beta u_ttt + u_tt - Lap u - beta Lap u_t = |u_t|^p

is evolved through the factorized first-order system

    u_t = v,    v_t = Lap u + w,    w_t = (|v|^p - w) / beta,

where ``w = u_tt - Lap u``.  Time stepping is classical RK4 with
``dt = cfl * dr``; blow-up is declared when ``max|v|`` crosses a threshold or
the state turns nonfinite, and the crossing time is localized by halving the
terminal step down to ``dt_min``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .config import ConfigError, DataShape, ProblemParams, SolverConfig

BLEW_UP = "blew_up"
SURVIVED = "survived"

SUPPORT_RTOL = 1e-10

Forcing = Callable[[float, np.ndarray], np.ndarray]
Probe = Callable[["FieldState", "RadialMesh"], None]


class BlowUpDetected(ArithmeticError):
    """A step produced nonfinite values."""


class SupportViolation(RuntimeError):
    """The numerical solution left the forward cone B_{t+R}."""


@dataclass(frozen=True)
class RadialMesh:
    n: int
    num_cells: int
    dr: float

    def __post_init__(self):
        if not self.dr > 0:
            raise ValueError("dr must be positive")
        if self.num_cells < 2:
            raise ValueError("need at least two cells")

    @classmethod
    def from_extent(cls, n: int, r_max: float, num_cells: int) -> "RadialMesh":
        return cls(n, int(num_cells), r_max / num_cells)

    @property
    def r(self) -> np.ndarray:
        return self.dr * np.arange(self.num_cells + 1)

    @property
    def r_max(self) -> float:
        return self.dr * self.num_cells


@dataclass(frozen=True)
class FieldState:
    t: float
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.u).all() and np.isfinite(self.v).all()
                    and np.isfinite(self.w).all())

    def sup_v(self) -> float:
        return float(np.max(np.abs(self.v)))

    def u_tt(self, mesh: RadialMesh) -> np.ndarray:
        return laplacian_radial(self.u, mesh) + self.w


@dataclass(frozen=True)
class LifespanRecord:
    epsilon: float
    status: str
    t_detect: Optional[float]
    sup_norm_history: tuple[tuple[float, float], ...]
    resolution: int
    t_bound_theory: float = math.nan
    t_end: float = 0.0
    steps: int = 0

    def __post_init__(self):
        if self.status not in (BLEW_UP, SURVIVED):
            raise ValueError(f"unknown status {self.status!r}")
        if (self.status == BLEW_UP) != (self.t_detect is not None):
            raise ValueError("t_detect must be present iff the run blew up")


def bump(r: np.ndarray, R: float, m: int) -> np.ndarray:
    """(1 - r^2/R^2)_+^m."""
    return np.clip(1.0 - (r / R) ** 2, 0.0, None) ** m


def laplacian_radial(f: np.ndarray, mesh: RadialMesh) -> np.ndarray:
    """Second-order radial Laplacian f'' + (n-1)/r f' with the limit n f''(0) at r = 0.

    The outer node is held at zero.
    """
    dr2 = mesh.dr * mesh.dr
    out = np.empty_like(f)
    out[0] = 2.0 * mesh.n * (f[1] - f[0]) / dr2
    d2 = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / dr2
    if mesh.n == 1:
        out[1:-1] = d2
    else:
        r = mesh.r[1:-1]
        out[1:-1] = d2 + (mesh.n - 1) / r * (f[2:] - f[:-2]) / (2.0 * mesh.dr)
    out[-1] = 0.0
    return out


class _Stencil:
    """Precomputed three-point coefficients for repeated Laplacian calls."""

    def __init__(self, mesh: RadialMesh):
        dr2 = mesh.dr * mesh.dr
        self.origin = 2.0 * mesh.n / dr2
        self.diag = -2.0 / dr2
        if mesh.n == 1:
            self.up = self.down = 1.0 / dr2
        else:
            r = mesh.r[1:-1]
            adv = (mesh.n - 1) / (2.0 * mesh.dr * r)
            self.up = 1.0 / dr2 + adv
            self.down = 1.0 / dr2 - adv

    def __call__(self, f: np.ndarray) -> np.ndarray:
        out = np.empty_like(f)
        out[0] = self.origin * (f[1] - f[0])
        out[1:-1] = self.up * f[2:] + self.diag * f[1:-1] + self.down * f[:-2]
        out[-1] = 0.0
        return out


def make_initial_data(params: ProblemParams, shape: DataShape, mesh: RadialMesh) -> FieldState:
    """Bump data eps * A_i * (1 - r^2/R^2)_+^m sampled on the mesh.

    ``w`` starts at eps * (u2 - Lap u0) with the discrete Laplacian.
    """
    if params.R / mesh.dr < 16:
        raise ConfigError(
            f"mesh too coarse: R/dr = {params.R / mesh.dr:.3g} < 16 cells across the support")
    g = bump(mesh.r, params.R, shape.m)
    eps = params.epsilon
    u = eps * shape.amplitude_u0 * g
    v = eps * shape.amplitude_u1 * g
    w = eps * shape.amplitude_u2 * g - laplacian_radial(u, mesh)
    return FieldState(0.0, u, v, w)


def manufactured_linear_solution(g: Callable, beta: float, t, r):
    """exp(-t/beta) g(r), an exact solution of the homogeneous linear MGT equation."""
    return np.exp(-np.asarray(t) / beta) * g(r)


def manufactured_initial_data(g: np.ndarray, lap_g: np.ndarray, beta: float) -> FieldState:
    """Data (g, -g/beta, g/beta^2 - Lap g) of the decaying manufactured solution."""
    return FieldState(0.0, g.copy(), -g / beta, g / beta**2 - lap_g)


class _Rhs:
    def __init__(self, params: ProblemParams, mesh: RadialMesh, nonlinear: bool,
                 forcing: Optional[Forcing], homogeneous: bool):
        self.p = params.p
        self.inv_beta = 1.0 / params.beta
        self.lap = None if homogeneous else _Stencil(mesh)
        self.nonlinear = nonlinear
        self.forcing = forcing
        self.r = mesh.r

    def __call__(self, t, u, v, w):
        if self.forcing is not None:
            src = self.forcing(t, self.r)
        elif self.nonlinear:
            src = np.abs(v) ** self.p
        else:
            src = 0.0
        dv = w if self.lap is None else self.lap(u) + w
        return v, dv, (src - w) * self.inv_beta


def _rk4(rhs: _Rhs, state: FieldState, dt: float) -> FieldState:
    t, u, v, w = state.t, state.u, state.v, state.w
    h2 = 0.5 * dt
    k1u, k1v, k1w = rhs(t, u, v, w)
    k2u, k2v, k2w = rhs(t + h2, u + h2 * k1u, v + h2 * k1v, w + h2 * k1w)
    k3u, k3v, k3w = rhs(t + h2, u + h2 * k2u, v + h2 * k2v, w + h2 * k2w)
    k4u, k4v, k4w = rhs(t + dt, u + dt * k3u, v + dt * k3v, w + dt * k3w)
    s = dt / 6.0
    return FieldState(
        t + dt,
        u + s * (k1u + 2.0 * k2u + 2.0 * k3u + k4u),
        v + s * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
        w + s * (k1w + 2.0 * k2w + 2.0 * k3w + k4w),
    )


def _advance(rhs: _Rhs, state: FieldState, dt: float) -> FieldState:
    with np.errstate(over="ignore", invalid="ignore"):
        new = _rk4(rhs, state, dt)
    if not new.is_finite():
        raise BlowUpDetected(f"nonfinite state after step to t={new.t:.17g}")
    return new


def step(state: FieldState, dt: float, params: ProblemParams, mesh: RadialMesh,
         forcing: Optional[Forcing] = None, *, nonlinear: bool = True,
         homogeneous: bool = False) -> FieldState:
    """One RK4 step of the factorized system.

    ``forcing(t, r)`` replaces |v|^p when given; ``nonlinear=False`` drops the
    source entirely; ``homogeneous=True`` sets the Laplacian to zero.
    Raises BlowUpDetected if the step overflows.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    return _advance(_Rhs(params, mesh, nonlinear, forcing, homogeneous), state, dt)


def support_margin(t: float, dr: float) -> float:
    """Width past the cone r = t + R beyond which fields must be negligible.

    Two cells plus the dispersive precursor layer of the centered stencil,
    which widens like (t/dr)^(1/3) cells.
    """
    return dr * (2.0 + 5.0 * (t / dr) ** (1.0 / 3.0))


def support_leak(state: FieldState, mesh: RadialMesh, R: float,
                 margin: Optional[float] = None) -> float:
    """Largest |field| outside B_{t+R+margin} relative to that field's sup norm."""
    if margin is None:
        margin = support_margin(state.t, mesh.dr)
    outside = mesh.r > state.t + R + margin
    if not outside.any():
        return 0.0
    worst = 0.0
    for f in (state.u, state.v, state.w):
        sup = float(np.max(np.abs(f)))
        if sup > 0:
            worst = max(worst, float(np.max(np.abs(f[outside]))) / sup)
    return worst


def evolve(initial: FieldState, params: ProblemParams, solver: SolverConfig,
           probes: Sequence[Probe] = (), *, mesh: Optional[RadialMesh] = None,
           nonlinear: bool = True, forcing: Optional[Forcing] = None,
           homogeneous: bool = False, check_support: bool = True,
           support_rtol: float = SUPPORT_RTOL, history_every: int = 10) -> LifespanRecord:
    """Advance ``initial`` to ``solver.t_max`` or until blow-up is detected.

    Probes are called with (state, mesh) at t = 0 and after every accepted
    step.  With ``check_support`` the solution is required to stay inside the
    forward cone at every accepted step.
    """
    if mesh is None:
        mesh = RadialMesh.from_extent(params.n, solver.r_max, solver.num_cells)
    if not homogeneous:
        solver.check_cone(params.R)
    rhs = _Rhs(params, mesh, nonlinear, forcing, homogeneous)
    dt = solver.cfl * mesh.dr
    threshold = solver.blowup_threshold

    state = initial
    history = [(state.t, state.sup_v())]
    for probe in probes:
        probe(state, mesh)

    def accept(new):
        nonlocal state, steps
        state = new
        steps += 1
        if check_support and not homogeneous:
            leak = support_leak(state, mesh, params.R)
            if leak > support_rtol:
                raise SupportViolation(
                    f"relative amplitude {leak:.3e} outside the forward cone at t={state.t:.6g}")
        if steps % history_every == 0:
            history.append((state.t, state.sup_v()))
        for probe in probes:
            probe(state, mesh)

    def triggered(h):
        try:
            trial = _advance(rhs, state, h)
        except BlowUpDetected:
            return None
        if trial.sup_v() > threshold:
            return None
        return trial

    steps = 0
    t_detect = None
    if state.sup_v() > threshold:
        t_detect = state.t
    while t_detect is None and state.t < solver.t_max:
        h = min(dt, solver.t_max - state.t)
        if h <= 1e-14 * max(1.0, solver.t_max):
            break
        trial = triggered(h)
        if trial is not None:
            accept(trial)
            continue
        # bracket the crossing inside [t, t + h] and shrink it to dt_min
        while h > solver.dt_min:
            h *= 0.5
            trial = triggered(h)
            if trial is not None:
                accept(trial)
        t_detect = min(state.t + h, solver.t_max)

    if history[-1][0] != state.t:
        history.append((state.t, state.sup_v()))
    status = BLEW_UP if t_detect is not None else SURVIVED
    return LifespanRecord(
        epsilon=params.epsilon,
        status=status,
        t_detect=t_detect,
        sup_norm_history=tuple(history),
        resolution=mesh.num_cells,
        t_end=state.t,
        steps=steps,
    )


class StateRecorder:
    """Probe that keeps copies of every k-th visited state."""

    def __init__(self, every: int = 1):
        self.every = every
        self.states: list[FieldState] = []
        self._calls = 0

    def __call__(self, state: FieldState, mesh: RadialMesh) -> None:
        if self._calls % self.every == 0:
            self.states.append(state)
        self._calls += 1


def wave_memory_residual(states: Sequence[FieldState], params: ProblemParams,
                         mesh: RadialMesh, *, node: Optional[int] = None,
                         nonlinear: bool = True) -> float:
    """Relative residual of the inhomogeneous wave form of the MGT equation.

    At a probe node and the mid-trace time, compares  u_tt - Lap u  (second
    time difference of u) with  exp(-t/beta) w(0) + (1/beta) int_0^t
    exp((tau-t)/beta) |u_t|^p dtau  (trapezoidal memory integral), where
    w(0) = eps (u2 - Lap u0).
    """
    if len(states) < 8:
        raise ValueError("need a trace of at least 8 states")
    times = np.array([s.t for s in states])
    dts = np.diff(times)
    dt = dts[0]
    if not np.allclose(dts, dt, rtol=1e-9, atol=0.0):
        raise ValueError("trace time step is not uniform")
    if node is None:
        node = int(np.argmin(np.abs(mesh.r - 0.5 * params.R)))
    k = len(states) // 2
    t = times[k]
    beta = params.beta

    u_tt = (states[k + 1].u[node] - 2.0 * states[k].u[node] + states[k - 1].u[node]) / dt**2
    lhs = u_tt - laplacian_radial(states[k].u, mesh)[node]

    rhs = math.exp(-t / beta) * states[0].w[node]
    if nonlinear:
        vs = np.array([s.v[node] for s in states[: k + 1]])
        kernel = np.exp((times[: k + 1] - t) / beta) * np.abs(vs) ** params.p
        rhs += np.trapezoid(kernel, times[: k + 1]) / beta

    scale = max(abs(lhs), abs(rhs), abs(u_tt), 1e-12)
    return abs(lhs - rhs) / scale


@dataclass
class OdeSolution:
    t: np.ndarray
    y: np.ndarray
    dy: np.ndarray
    d2y: np.ndarray
    blew_up: bool
    t_blowup: Optional[float] = None
    n_steps: int = 0
    n_rejected: int = 0


# Dormand-Prince 5(4) tableau
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_E = _DP_B - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                          -92097 / 339200, 187 / 2100, 1 / 40])


def ode_oracle(beta: float, p: float, y1: float, y2: float, t_end: float,
               tol: float = 1e-12, *, y0: float = 0.0, t_eval: Optional[Iterable[float]] = None,
               nonlinear: bool = True, h_min: float = 1e-12) -> OdeSolution:
    """Adaptive Dormand-Prince solution of  beta y''' + y'' = |y'|^p.

    Step size follows a PI controller on the embedded error estimate.  Steps
    are clipped to land exactly on ``t_eval`` (default: accepted steps only).
    Blow-up is reported when the step collapses below ``h_min``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")

    def f(y):
        src = abs(y[1]) ** p if nonlinear else 0.0
        return np.array([y[1], y[2], (src - y[2]) / beta])

    marks = None if t_eval is None else sorted(float(s) for s in t_eval if 0 < s <= t_end)
    mark_i = 0
    t = 0.0
    y = np.array([y0, y1, y2], dtype=float)
    ts, ys = [t], [y.copy()]
    h = min(1e-3, t_end) if t_end > 0 else 0.0
    err_prev = 1.0
    n_steps = n_rej = 0
    blew_up = False
    k1 = f(y)

    with np.errstate(over="ignore", invalid="ignore"):
        while t < t_end:
            target = t_end if marks is None or mark_i >= len(marks) else marks[mark_i]
            h_try = min(h, target - t)
            landing = h_try == target - t
            if h_try < h_min and not landing:
                blew_up = True
                break
            ks = [k1]
            for i in range(1, 7):
                yi = y + h_try * sum(a * k for a, k in zip(_DP_A[i], ks))
                ks.append(f(yi))
            y_new = y + h_try * sum(b * k for b, k in zip(_DP_B, ks) if b != 0.0)
            err_vec = h_try * sum(e * k for e, k in zip(_DP_E, ks) if e != 0.0)
            scale = tol + tol * np.maximum(np.abs(y), np.abs(y_new))
            err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
            if not np.isfinite(err) or not np.all(np.isfinite(y_new)):
                h = 0.2 * h_try
                n_rej += 1
                if h < h_min:
                    blew_up = True
                    break
                continue
            if err <= 1.0:
                t = target if landing else t + h_try
                y = y_new
                k1 = ks[6]
                n_steps += 1
                if marks is None or (landing and mark_i < len(marks) and target == marks[mark_i]):
                    ts.append(t)
                    ys.append(y.copy())
                    if marks is not None:
                        mark_i += 1
                # PI control (Gustafsson) with exponents 0.7/5 and 0.4/5
                fac = 0.9 * max(err, 1e-10) ** (-0.14) * err_prev ** 0.08
                h_next = h_try * min(5.0, max(0.2, fac))
                err_prev = max(err, 1e-4)
                # a clipped landing step must not shrink the controller's step
                h = max(h_next, h) if landing else h_next
            else:
                n_rej += 1
                h = h_try * max(0.2, 0.9 * err ** (-0.2))
                if h < h_min:
                    blew_up = True
                    break

    arr = np.array(ys)
    return OdeSolution(
        t=np.array(ts), y=arr[:, 0], dy=arr[:, 1], d2y=arr[:, 2],
        blew_up=blew_up, t_blowup=t if blew_up else None,
        n_steps=n_steps, n_rejected=n_rej,
    )


def homogeneous_state(y1: float, y2: float, size: int = 4, y0: float = 0.0) -> FieldState:
    """Spatially constant state (y, y', y'') for the homogeneous reduction."""
    ones = np.ones(size)
    return FieldState(0.0, y0 * ones, y1 * ones, y2 * ones)


def write_snapshot(path, state: FieldState, mesh: RadialMesh) -> None:
    """CSV with a ``# t=<value>`` header line and columns r, u, v, w."""
    data = np.column_stack([mesh.r, state.u, state.v, state.w])
    with open(path, "w") as fh:
        fh.write(f"# t={state.t!r}\n")
        fh.write("r,u,v,w\n")
        np.savetxt(fh, data, delimiter=",", fmt="%.17g")


def read_snapshot(path) -> tuple[float, np.ndarray]:
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("# t="):
            raise ValueError(f"{path}: missing '# t=' header")
        t = float(header[4:])
        fh.readline()
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return t, data
