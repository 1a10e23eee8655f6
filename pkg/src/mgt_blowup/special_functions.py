"""Radial eigenfunction of the Laplacian and the separated test function.

``phi(n, r)`` is the positive radial solution of ``Delta Phi = Phi`` obtained by
averaging ``exp(x . omega)`` over the unit sphere,

    Phi(r) = (2 pi)^(n/2) r^((2-n)/2) I_{(n-2)/2}(r),      Phi(r) = 2 cosh r for n = 1,

and ``psi(n, t, r) = exp(-t) Phi(r)`` solves the adjoint of the homogeneous
linear MGT operator for every relaxation parameter.

The modified Bessel function is evaluated as ``x^(-nu) I_nu(x)`` so the origin
is regular: a power series below ``SERIES_CUTOFF`` and the large-argument
expansion above it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SERIES_CUTOFF = 30.0
_SERIES_MAX_TERMS = 60
_ASYMPTOTIC_MAX_TERMS = 60
_C1_SAFETY = 1.05


def sphere_measure(n: int) -> float:
    """Surface measure of the unit sphere S^(n-1); equals 2 for n = 1."""
    _check_dim(n)
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def _check_dim(n):
    if int(n) != n or n < 1:
        raise ValueError(f"dimension must be an integer >= 1, got {n}")


def _check_radius(r):
    if np.any(np.asarray(r) < 0):
        raise ValueError("radius must be nonnegative")


def _series_scalar(nu: float, x: float) -> float:
    # sum_k (1/2)^(2k+nu) x^(2k) / (k! Gamma(k+nu+1))
    term = 2.0 ** (-nu) / math.gamma(nu + 1.0)
    total = term
    q = 0.25 * x * x
    for k in range(1, _SERIES_MAX_TERMS):
        term *= q / (k * (k + nu))
        total += term
        if term < 1e-16 * total:
            break
    return total


def _asymptotic_scalar(nu: float, x: float) -> tuple[float, float]:
    """Return (log prefactor, correction) with x^-nu I_nu(x) = exp(log) * corr."""
    mu = 4.0 * nu * nu
    term = 1.0
    total = 1.0
    prev = math.inf
    for k in range(1, _ASYMPTOTIC_MAX_TERMS):
        term *= -(mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        mag = abs(term)
        if mag == 0.0 or mag > prev:
            break
        total += term
        prev = mag
        if mag < 1e-17 * abs(total):
            break
    log_pref = x - 0.5 * math.log(2.0 * math.pi * x) - nu * math.log(x)
    return log_pref, total


def scaled_bessel_i(nu: float, x: float) -> float:
    """x^(-nu) I_nu(x) for x >= 0, regular at the origin."""
    if x < SERIES_CUTOFF:
        return _series_scalar(nu, x)
    log_pref, corr = _asymptotic_scalar(nu, x)
    return math.exp(log_pref) * corr


def _phi_scalar(n: int, r: float) -> float:
    if n == 1:
        return math.exp(r) + math.exp(-r)
    nu = 0.5 * (n - 2)
    return (2.0 * math.pi) ** (n / 2) * scaled_bessel_i(nu, r)


def _phi_array(n: int, r: np.ndarray) -> np.ndarray:
    if n == 1:
        return np.exp(r) + np.exp(-r)
    nu = 0.5 * (n - 2)
    out = np.empty_like(r)
    small = r < SERIES_CUTOFF
    if np.any(small):
        x = r[small]
        q = 0.25 * x * x
        term = np.full_like(x, 2.0 ** (-nu) / math.gamma(nu + 1.0))
        total = term.copy()
        for k in range(1, _SERIES_MAX_TERMS):
            term = term * q / (k * (k + nu))
            total += term
            if np.all(term < 1e-16 * total):
                break
        out[small] = total
    for i in np.flatnonzero(~small):
        out[i] = scaled_bessel_i(nu, float(r[i]))
    return (2.0 * math.pi) ** (n / 2) * out


def phi(n: int, r):
    """Eigenfunction Phi(r) = integral over S^(n-1) of exp(r e1 . omega).

    Accepts a scalar or an array of nonnegative radii.
    """
    _check_dim(n)
    _check_radius(r)
    if np.ndim(r) == 0:
        return _phi_scalar(n, float(r))
    return _phi_array(n, np.asarray(r, dtype=float))


def psi(n: int, t, r):
    """Separated test function exp(-t) Phi(r)."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("time must be nonnegative")
    return np.exp(-t) * phi(n, r)


@dataclass(frozen=True)
class EigenfunctionEvaluator:
    """Caches Phi on a fixed set of radial nodes."""

    n: int
    series_cutoff: float = SERIES_CUTOFF
    tol: float = 1e-10

    def __post_init__(self):
        _check_dim(self.n)
        if self.series_cutoff != SERIES_CUTOFF:
            raise ValueError("only the default series cutoff is supported")

    def phi(self, r):
        return phi(self.n, r)

    def psi(self, t, r):
        return psi(self.n, t, r)


def _radial_laplacian_fd(f, n, r, h):
    d2 = (f(r + h) - 2.0 * f(r) + f(r - h)) / (h * h)
    d1 = (f(r + h) - f(r - h)) / (2.0 * h)
    return d2 + (n - 1) / r * d1


def radial_laplacian_fd(n: int, r: float, h: float) -> float:
    """Centered second-order radial Laplacian of Phi at r > h."""
    return _radial_laplacian_fd(lambda s: _phi_scalar(n, s), n, r, h)


def adjoint_residual(n: int, t: float, r: float, h: float, beta: float = 1.0) -> float:
    """Finite-difference value of  -beta Psi_ttt + Psi_tt - Lap Psi + beta (Lap Psi)_t.

    All derivatives use centered stencils of order h^2, so the result is
    O(h^2) for the exact solution Psi.
    """
    if not h > 0:
        raise ValueError("step h must be positive")
    if t <= 3 * h or r <= 3 * h:
        raise ValueError("need t > 3h and r > 3h for the centered stencils")
    _check_dim(n)

    def ps(s, rr):
        return math.exp(-s) * _phi_scalar(n, rr)

    def lap(s):
        return _radial_laplacian_fd(lambda rr: ps(s, rr), n, r, h)

    d3 = (ps(t + 2 * h, r) - 2 * ps(t + h, r) + 2 * ps(t - h, r) - ps(t - 2 * h, r)) / (2 * h**3)
    d2 = (ps(t + h, r) - 2 * ps(t, r) + ps(t - h, r)) / (h * h)
    lap_t = (lap(t + h) - lap(t - h)) / (2 * h)
    return -beta * d3 + d2 - lap(t) + beta * lap_t


def adaptive_simpson(f, a: float, b: float, rtol: float = 1e-10, atol: float = 1e-14,
                     max_depth: int = 50) -> float:
    """Adaptive Simpson quadrature of a smooth scalar integrand on [a, b]."""
    if b == a:
        return 0.0
    # coarse estimate sets the absolute target for every panel
    xs = np.linspace(a, b, 33)
    fx = [f(float(x)) for x in xs]
    hc = (b - a) / 32
    coarse = hc / 3 * (fx[0] + fx[-1] + 4 * sum(fx[1:-1:2]) + 2 * sum(fx[2:-1:2]))
    target = max(rtol * abs(coarse), atol)

    total = 0.0
    for i in range(0, 32, 2):
        lo, mid, hi = float(xs[i]), float(xs[i + 1]), float(xs[i + 2])
        flo, fmid, fhi = fx[i], fx[i + 1], fx[i + 2]
        whole = (hi - lo) / 6 * (flo + 4 * fmid + fhi)
        stack = [(lo, hi, flo, fmid, fhi, whole, target / 16, max_depth)]
        while stack:
            lo, hi, flo, fmid, fhi, whole, eps, depth = stack.pop()
            mid = 0.5 * (lo + hi)
            lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
            flm, frm = f(lm), f(rm)
            left = (mid - lo) / 6 * (flo + 4 * flm + fmid)
            right = (hi - mid) / 6 * (fmid + 4 * frm + fhi)
            delta = left + right - whole
            if depth <= 0 or abs(delta) <= 15 * eps:
                total += left + right + delta / 15
            else:
                stack.append((lo, mid, flo, flm, fmid, left, eps / 2, depth - 1))
                stack.append((mid, hi, fmid, frm, fhi, right, eps / 2, depth - 1))
    return total


def _radial_moment(n: int, a: float, b: float) -> float:
    return adaptive_simpson(lambda r: _phi_scalar(n, r) * r ** (n - 1), a, b)


def psi_ball_integral(n: int, t: float, R: float) -> float:
    """Integral of Psi(t, .) over the ball of radius t + R."""
    _check_dim(n)
    if t < 0:
        raise ValueError("time must be nonnegative")
    if not R > 0:
        raise ValueError("R must be positive")
    return sphere_measure(n) * math.exp(-t) * _radial_moment(n, 0.0, t + R)


def estimate_C1(n: int, R: float, t_horizon: float = 200.0, samples: int = 200) -> float:
    """Numerical constant C1 with  int_{B_{t+R}} Psi <= C1 (t+R)^((n-1)/2).

    Maximum of the ratio over a geometric time grid on [0, t_horizon],
    inflated by a 5% safety factor.  Not a certified bound.
    """
    if not t_horizon > 0:
        raise ValueError("t_horizon must be positive")
    if samples < 2:
        raise ValueError("need at least two samples")
    ts = c1_time_grid(t_horizon, samples)
    return _C1_SAFETY * float(np.max(ball_ratio_series(n, R, ts)))


def c1_time_grid(t_horizon: float, samples: int) -> np.ndarray:
    lo = min(1e-3, t_horizon / samples)
    return np.concatenate(([0.0], np.geomspace(lo, t_horizon, samples - 1)))


def ball_ratio_series(n: int, R: float, ts) -> np.ndarray:
    """psi_ball_integral(n, t, R) (t+R)^(-(n-1)/2) on a sorted time grid.

    The radial moment is accumulated panel by panel across the grid.
    """
    ts = np.asarray(ts, dtype=float)
    if np.any(np.diff(ts) < 0):
        raise ValueError("time grid must be sorted")
    omega = sphere_measure(n)
    out = np.empty_like(ts)
    acc = _radial_moment(n, 0.0, R + ts[0])
    prev = R + ts[0]
    for i, t in enumerate(ts):
        upper = t + R
        if upper > prev:
            acc += _radial_moment(n, prev, upper)
            prev = upper
        out[i] = omega * math.exp(-t) * acc * upper ** (-(n - 1) / 2)
    return out
