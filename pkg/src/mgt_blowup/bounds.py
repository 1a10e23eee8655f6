"""Constants and sequences of the iteration argument, and the lifespan bounds.

Every multiplicative sequence (K_j, Q_j) is carried as a logarithm: the raw
values under- or overflow within a dozen iterations because their exponents
grow like p^j.

Subcritical chain (1 < p < (n+1)/(n-1), or n = 1)::

    F1(t) >= K_j (t+R)^(-alpha_j) (t - L_j)^(gamma_j),     t >= L_j

Critical chain (p = (n+1)/(n-1))::

    F1(t) >= Q_j log(t/L_j)^(sigma_j),                    t >= L_j

The constants C1 (ball integral of Psi) and C2 (first lower bound of F1)
come from the data; everything else follows from them.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .config import CRITICAL, SUBCRITICAL, ProblemParams, classify_regime

ONE_MINUS_INV_E = -math.expm1(-1.0)
_EPS0_SHRINK = 1.0 - 1e-12


class RegimeError(ValueError):
    """Raised when a computation is requested outside its (n, p) regime."""

    def __init__(self, expected: str, got: str, params: ProblemParams):
        self.expected = expected
        self.got = got
        super().__init__(
            f"(n={params.n}, p={params.p}) is {got}; this computation requires {expected}")


def _require(params: ProblemParams, regime: str) -> None:
    got = classify_regime(params)
    if got != regime:
        raise RegimeError(regime, got, params)


def time_exponent(n: int, p: float) -> float:
    """p((n+1) - (n-1)p) / (2(p-1)), the power of t in the final lower bound."""
    return p * ((n + 1) - (n - 1) * p) / (2.0 * (p - 1.0))


def lifespan_exponent(n: int, p: float) -> float:
    """2(p-1) / ((n+1) - (n-1)p): T(eps) <= C eps^(-this)."""
    return 2.0 * (p - 1.0) / ((n + 1) - (n - 1) * p)


def lifespan_exponent_alt(n: int, p: float) -> float:
    """Same exponent written as (1/(p-1) - (n-1)/2)^(-1)."""
    return 1.0 / (1.0 / (p - 1.0) - (n - 1) / 2.0)


# --- slicing --------------------------------------------------------------

@dataclass(frozen=True)
class SlicingSequence:
    p: float
    ell: np.ndarray
    L_partial: np.ndarray
    L_limit: float


def slicing(p: float, tol: float = 1e-13) -> SlicingSequence:
    """ell_k = 1 + p^-k and partial products L_j, up to ell_k - 1 < tol (p-1).

    The infinite tail of log L is summed in closed form to second order.
    """
    if not p > 1:
        raise ValueError(f"slicing needs p > 1, got {p}")
    logs = []
    k = 0
    while True:
        x = p ** (-k)
        logs.append(math.log1p(x))
        if x < tol * (p - 1.0):
            break
        k += 1
    J = k
    log_partial = np.cumsum(logs)
    xJ = p ** (-J)
    # sum_{k>J} log(1 + p^-k) = sum p^-k - sum p^-2k / 2 + O(p^-3J)
    tail = xJ / (p - 1.0) - 0.5 * xJ * xJ / (p * p - 1.0)
    ell = 1.0 + p ** (-np.arange(J + 1, dtype=float))
    return SlicingSequence(p, ell, np.exp(log_partial), float(math.exp(log_partial[-1] + tail)))


def ell(p: float, k) -> np.ndarray | float:
    return 1.0 + np.power(float(p), -np.asarray(k, dtype=float))


def partial_product(p: float, j: int) -> float:
    return float(math.exp(math.fsum(math.log1p(p ** (-k)) for k in range(j + 1))))


def verify_slicing_inequality(p: float, j: int, t_samples: Sequence[float]) -> float:
    """min over t of  [1 - exp(2t(1/ell_{j+1} - 1))] - 2(p-1) p^(-2(j+1)).

    Nonnegative whenever every t >= L_{j+1}.
    """
    t = np.asarray(t_samples, dtype=float)
    L_next = partial_product(p, j + 1)
    if np.any(t < L_next * (1 - 1e-14)):
        raise ValueError(f"samples must satisfy t >= L_(j+1) = {L_next}")
    e = float(ell(p, j + 1))
    lhs = -np.expm1(2.0 * t * (1.0 / e - 1.0))
    rhs = 2.0 * (p - 1.0) * p ** (-2.0 * (j + 1))
    return float(np.min(lhs - rhs))


# --- exponent sequences ---------------------------------------------------

def alpha0(n: int, p: float) -> float:
    return (n - 1) * (p - 1) / 2.0


GAMMA0 = 1.0


def subcritical_closed_forms(j: int, params: ProblemParams) -> tuple[float, float]:
    """(alpha_j, gamma_j) from their closed forms."""
    _require(params, SUBCRITICAL)
    n, p = params.n, params.p
    a0 = alpha0(n, p)
    pj = p**j
    return (pj * (a0 + (n - 1) / 2.0) - (n - 1) / 2.0,
            pj * (GAMMA0 + 1.0 / (p - 1.0)) - 1.0 / (p - 1.0))


def exponent_recursions(n: int, p, J: int) -> tuple[list, list]:
    """alpha_j and gamma_j by recursion, j = 0..J (exact if p is a Fraction)."""
    half = (n - 1) * (p - 1) / 2
    alphas, gammas = [half], [1]
    for _ in range(J):
        alphas.append(half + alphas[-1] * p)
        gammas.append(gammas[-1] * p + 1)
    return alphas, gammas


def sigma_closed_form(j: int, p):
    return (p**j - 1) / (p - 1)


def sigma_recursion(p, J: int) -> list:
    sig = [0]
    for _ in range(J):
        sig.append(sig[-1] * p + 1)
    return sig


def weighted_geometric_sum(p: float, j: int) -> float:
    """sum_{k=0}^{j-1} (j-k) p^k in closed form."""
    return ((p ** (j + 1) - p) / (p - 1.0) - j) / (p - 1.0)


# --- first lower bound ----------------------------------------------------

def first_lower_bound_constants(params: ProblemParams, u1_phi: float, u2_phi: float,
                                C3: float) -> tuple[float, float]:
    """C2 with F1(t) >= C2 eps for t >= 1/2, and K0 of the first iterate."""
    beta = params.beta
    C2 = 0.5 * u1_phi + beta / (2.0 * (beta + 1.0)) * ONE_MINUS_INV_E * u2_phi
    if not C2 > 0:
        raise ValueError("C2 must be positive: u1 or u2 has to be nonzero")
    K0 = C2**params.p * C3 * ONE_MINUS_INV_E * params.epsilon**params.p / 4.0
    return C2, K0


# --- subcritical ----------------------------------------------------------

@dataclass
class SubcriticalBundle:
    n: int
    p: float
    beta: float
    R: float
    epsilon: float
    C1: float
    C2: float
    C3: float
    alpha0: float
    gamma0: float
    K0: float
    M: float
    D: float
    E: float
    E1: float
    E2: float
    j0: int
    eps0: float
    L_limit: float
    alpha: np.ndarray
    gamma: np.ndarray
    log_K: np.ndarray
    log_K_floor: np.ndarray
    log_K_unrolled: np.ndarray
    chain_ok: bool
    notes: list = field(default_factory=list)

    regime = SUBCRITICAL

    @property
    def log_E(self) -> float:
        return math.log(self.E)


def subcritical_bundle(params: ProblemParams, C1: float, C2: float, J_max: int = 40,
                       slicing_seq: Optional[SlicingSequence] = None) -> SubcriticalBundle:
    _require(params, SUBCRITICAL)
    if not (C1 > 0 and C2 > 0):
        raise ValueError("C1 and C2 must be positive")
    n, p, beta, R, eps = params.n, params.p, params.beta, params.R, params.epsilon
    lp = math.log(p)
    a0 = alpha0(n, p)
    c_gamma = GAMMA0 + 1.0 / (p - 1.0)
    C3 = C1 ** (1.0 - p) / (1.0 + beta)
    log_C3 = math.log(C3)
    log_K0 = p * math.log(C2) + log_C3 + math.log(ONE_MINUS_INV_E) + p * math.log(eps) - math.log(4.0)

    js = np.arange(J_max + 1)
    alpha = np.empty(J_max + 1)
    gamma = np.empty(J_max + 1)
    log_K = np.empty(J_max + 1)
    alpha[0], gamma[0], log_K[0] = a0, GAMMA0, log_K0
    for j in range(J_max):
        g_next = gamma[j] * p + 1.0
        alpha[j + 1] = (n - 1) * (p - 1) / 2.0 + alpha[j] * p
        gamma[j + 1] = g_next
        log_K[j + 1] = (math.log(p - 1.0) - 2.0 * (j + 1) * lp + log_C3 + p * log_K[j]
                        - math.log(g_next) - g_next * math.log1p(p ** (-(j + 1))))

    # ell_j^(-gamma_j) decreases to exp(-c_gamma) from above
    ell_pow = np.exp(-gamma * np.log1p(np.power(p, -js.astype(float))))
    M = float(min(ell_pow.min(), math.exp(-c_gamma)))
    D = (p - 1.0) * M * C3 / c_gamma
    log_D = math.log(D)
    log_E = (log_D / (p - 1.0) - 3.0 * p * lp / (p - 1.0) ** 2 + p * math.log(C2) + log_C3
             + math.log(ONE_MINUS_INV_E) - math.log(4.0))
    E = math.exp(log_E)
    log_E1 = log_E - (a0 + (n - 1) / 2.0 + c_gamma) * math.log(2.0)
    b = time_exponent(n, p)
    a = lifespan_exponent(n, p)
    log_E2 = -log_E1 / b
    j0 = max(0, math.ceil(log_D / (3.0 * lp) - p / (p - 1.0)))
    if J_max < j0:
        raise ValueError(f"J_max={J_max} is below the threshold index j0={j0}")

    seq = slicing_seq or slicing(p)
    L = seq.L_limit
    # fixing inequality eps0^(-a) >= E1^(a/p) max{R, 2L}, taken with equality
    log_eps0 = -log_E1 / p - math.log(max(R, 2.0 * L)) / a
    eps0 = math.exp(log_eps0) * _EPS0_SHRINK
    notes = ["C1 is a numerical estimate; eps0 and E2 are numerical, not certified"]
    if not -a * math.log(eps0) >= (a / p) * log_E1 + math.log(max(R, 2.0 * L)):
        raise ArithmeticError("eps0 fails its own fixing inequality")

    floor = np.power(p, js.astype(float)) * (log_E + p * math.log(eps))
    # log_K_j >= D K_{j-1}^p p^{-3j} unrolled with the closed weighted sum
    geo = np.array([(p**j - 1.0) / (p - 1.0) for j in js])
    wsum = np.array([weighted_geometric_sum(p, int(j)) for j in js])
    unrolled = np.power(p, js.astype(float)) * log_K0 - 3.0 * wsum * lp + geo * log_D
    tol = 1e-12 * np.abs(floor)
    chain_ok = bool(np.all(log_K[j0:] >= floor[j0:] - tol[j0:]))

    return SubcriticalBundle(
        n=n, p=p, beta=beta, R=R, epsilon=eps, C1=C1, C2=C2, C3=C3,
        alpha0=a0, gamma0=GAMMA0, K0=math.exp(log_K0), M=M, D=D, E=E,
        E1=math.exp(log_E1), E2=math.exp(log_E2), j0=j0, eps0=eps0, L_limit=L,
        alpha=alpha, gamma=gamma, log_K=log_K, log_K_floor=floor,
        log_K_unrolled=unrolled, chain_ok=chain_ok, notes=notes,
    )


def unrolled_lower_chain(log_K0: float, log_D: float, p: float, J: int) -> np.ndarray:
    """Iterate log K_j = log D + p log K_{j-1} - 3 j log p step by step."""
    out = np.empty(J + 1)
    out[0] = log_K0
    for j in range(1, J + 1):
        out[j] = log_D + p * out[j - 1] - 3.0 * j * math.log(p)
    return out


@dataclass(frozen=True)
class LifespanBound:
    value: float
    log_value: float
    guaranteed: bool
    note: str = ""

    def __float__(self):
        return self.value


def lifespan_bound_subcritical(bundle: SubcriticalBundle, epsilon: Optional[float] = None
                               ) -> LifespanBound:
    """E2 eps^(-2(p-1)/((n+1)-(n-1)p)); flagged as not guaranteed for eps > eps0."""
    eps = bundle.epsilon if epsilon is None else epsilon
    n, p = bundle.n, bundle.p
    a = lifespan_exponent(n, p)
    a_alt = lifespan_exponent_alt(n, p)
    if abs(a - a_alt) > 1e-12 * abs(a):
        raise ArithmeticError(f"exponent forms disagree: {a} vs {a_alt}")
    log_val = math.log(bundle.E2) - a * math.log(eps)
    ok = eps <= bundle.eps0
    note = "" if ok else f"epsilon={eps} exceeds eps0={bundle.eps0}; bound not guaranteed"
    return LifespanBound(math.exp(log_val), log_val, ok, note)


def divergence_bracket(bundle: SubcriticalBundle, t: float, epsilon: Optional[float] = None) -> float:
    """log(E1 eps^p t^b); positive beyond the lifespan bound."""
    eps = bundle.epsilon if epsilon is None else epsilon
    return (math.log(bundle.E1) + bundle.p * math.log(eps)
            + time_exponent(bundle.n, bundle.p) * math.log(t))


# --- critical -------------------------------------------------------------

@dataclass
class CriticalBundle:
    n: int
    p: float
    beta: float
    R: float
    epsilon: float
    C2: float
    C3: float
    C4: float
    Dtilde: float
    Etilde: float
    j1: int
    eps0: float
    L_limit: float
    sigma: np.ndarray
    log_Q: np.ndarray
    log_Q_floor: np.ndarray
    chain_ok: bool
    notes: list = field(default_factory=list)

    regime = CRITICAL


def critical_bundle(params: ProblemParams, C3: float, C2: float, J_max: int = 40,
                    slicing_seq: Optional[SlicingSequence] = None) -> CriticalBundle:
    _require(params, CRITICAL)
    if not (C3 > 0 and C2 > 0):
        raise ValueError("C3 and C2 must be positive")
    n, p, beta, R, eps = params.n, params.p, params.beta, params.R, params.epsilon
    lp = math.log(p)
    # inf over s >= 1 of s/(s+R) is 1/(1+R)
    C4 = C3 / (1.0 + R)
    log_C4 = math.log(C4)

    js = np.arange(J_max + 1)
    sigma = np.empty(J_max + 1)
    log_Q = np.empty(J_max + 1)
    sigma[0], log_Q[0] = 0.0, math.log(C2 * eps)
    for j in range(J_max):
        s_next = sigma[j] * p + 1.0
        sigma[j + 1] = s_next
        log_Q[j + 1] = (log_C4 + p * log_Q[j] + math.log(p - 1.0)
                        - 2.0 * (j + 1) * lp - math.log(s_next))

    Dtilde = C4 * (p - 1.0) ** 2
    log_Dt = math.log(Dtilde)
    log_Et = log_Dt / (p - 1.0) - 3.0 * p * lp / (p - 1.0) ** 2 + math.log(C2)
    j1 = max(0, math.ceil(log_Dt / (3.0 * lp) - p / (p - 1.0)))
    if J_max < j1:
        raise ValueError(f"J_max={J_max} is below the threshold index j1={j1}")

    floor = np.power(p, js.astype(float)) * (log_Et + math.log(eps))
    tol = 1e-12 * np.abs(floor)
    chain_ok = bool(np.all(log_Q[j1:] >= floor[j1:] - tol[j1:]))
    seq = slicing_seq or slicing(p)
    notes = [
        "the critical fixing condition exp(Etilde^(1-p) eps0^(1-p)) >= 1 holds for every "
        "eps0 > 0; eps0 is reported as +inf and the bound is evaluated for all eps",
        "C1 is a numerical estimate; Etilde is numerical, not certified",
    ]
    return CriticalBundle(
        n=n, p=p, beta=beta, R=R, epsilon=eps, C2=C2, C3=C3, C4=C4,
        Dtilde=Dtilde, Etilde=math.exp(log_Et), j1=j1, eps0=math.inf,
        L_limit=seq.L_limit, sigma=sigma, log_Q=log_Q, log_Q_floor=floor,
        chain_ok=chain_ok, notes=notes,
    )


def lifespan_bound_critical(bundle: CriticalBundle, epsilon: Optional[float] = None,
                            L_limit: Optional[float] = None) -> LifespanBound:
    """L exp(Etilde^(-(p-1)) eps^(-(p-1))); the value may overflow to inf."""
    eps = bundle.epsilon if epsilon is None else epsilon
    L = bundle.L_limit if L_limit is None else L_limit
    p = bundle.p
    log_val = math.log(L) + (bundle.Etilde * eps) ** (-(p - 1.0))
    value = math.exp(log_val) if log_val < 709.0 else math.inf
    return LifespanBound(value, log_val, True, bundle.notes[0])


# --- assembly -------------------------------------------------------------

def bundle_for(params: ProblemParams, C1: float, C2: float, J_max: int = 40):
    """Subcritical or critical bundle according to the regime of params."""
    regime = classify_regime(params)
    if regime == SUBCRITICAL:
        return subcritical_bundle(params, C1, C2, J_max)
    if regime == CRITICAL:
        C3 = C1 ** (1.0 - params.p) / (1.0 + params.beta)
        return critical_bundle(params, C3, C2, J_max)
    raise RegimeError("subcritical or critical", regime, params)


def lifespan_bound(bundle, epsilon: Optional[float] = None) -> LifespanBound:
    if isinstance(bundle, SubcriticalBundle):
        return lifespan_bound_subcritical(bundle, epsilon)
    return lifespan_bound_critical(bundle, epsilon)


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def bundle_report(bundle, prefix: int = 20) -> dict:
    """Plain-dict view of a bundle: constants, sequence prefixes, bound."""
    raw = asdict(bundle)
    out = {"regime": bundle.regime}
    for key, val in raw.items():
        if isinstance(val, np.ndarray):
            out[key] = _jsonable(val[:prefix])
        else:
            out[key] = _jsonable(val)
    if out.get("eps0") is None:
        out["eps0_note"] = "+inf: any positive eps0 satisfies the fixing condition"
    bound = lifespan_bound(bundle)
    out["lifespan_bound"] = _jsonable(bound.value)
    out["log_lifespan_bound"] = bound.log_value
    out["bound_guaranteed"] = bound.guaranteed
    if isinstance(bundle, SubcriticalBundle):
        out["lifespan_exponent"] = lifespan_exponent(bundle.n, bundle.p)
    return out
