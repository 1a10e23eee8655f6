import json
import math
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mgt_blowup import bounds as be
from mgt_blowup.config import ProblemParams
from mgt_blowup.special_functions import estimate_C1

ONE_MINUS_INV_E = 1 - math.exp(-1)


def L_oracle(p: Fraction, terms: int = 200) -> float:
    prod = Fraction(1)
    for k in range(terms):
        prod *= 1 + Fraction(1) / p**k
    return float(prod)


def default_bundle(n, p, eps=1.0):
    params = ProblemParams(n=n, p=p, epsilon=eps)
    C1 = estimate_C1(n, 1.0)
    C3 = C1 ** (1 - p) / 2.0
    from mgt_blowup.config import DataShape
    from mgt_blowup.functionals import data_integrals_exact

    ints = data_integrals_exact(params, DataShape())
    C2, _ = be.first_lower_bound_constants(params, ints.u1_phi, ints.u2_phi, C3)
    return be.bundle_for(params, C1, C2)


def test_exponent_examples():
    assert be.lifespan_exponent(2, 2.0) == be.lifespan_exponent_alt(2, 2.0) == 2.0
    assert be.lifespan_exponent(1, 2.0) == 1.0
    assert be.time_exponent(1, 2.0) * be.lifespan_exponent(1, 2.0) == pytest.approx(2.0)


@given(n=st.integers(1, 6), frac=st.floats(0.01, 0.99))
def test_exponent_forms_agree(n, frac):
    p_max = 8.0 if n == 1 else (n + 1) / (n - 1)
    p = 1 + frac * (p_max - 1)
    a, b = be.lifespan_exponent(n, p), be.lifespan_exponent_alt(n, p)
    assert abs(a - b) <= 1e-12 * abs(a)
    assert be.time_exponent(n, p) * a == pytest.approx(p, rel=1e-12)


def test_slicing_examples():
    for p in (1.2, 2.0, 3.0):
        assert be.slicing(p).ell[0] == 2.0
    seq = be.slicing(2.0)
    assert seq.L_partial[1] == pytest.approx(3.0, rel=1e-15)
    assert be.partial_product(2.0, 1) == pytest.approx(3.0, rel=1e-15)
    assert np.all(np.diff(seq.ell) < 0) and np.all(seq.ell > 1)
    assert np.all(np.diff(seq.L_partial) > 0) and seq.L_limit > seq.L_partial[-1] * (1 - 1e-15)


@pytest.mark.parametrize("p", [Fraction(6, 5), Fraction(3, 2), Fraction(2), Fraction(3)])
def test_L_limit_against_rational_oracle(p):
    terms = 200 if p >= 2 else 400
    assert be.slicing(float(p)).L_limit == pytest.approx(L_oracle(p, terms), rel=1e-10)


def test_L_limit_p2_value():
    assert be.slicing(2.0).L_limit == pytest.approx(4.768462058062743, rel=1e-12)


def test_slicing_rejects_p_le_one():
    with pytest.raises(ValueError):
        be.slicing(1.0)


def test_slicing_inequality_example():
    margin = be.verify_slicing_inequality(2.0, 0, [3.0])
    assert margin == pytest.approx((1 - math.exp(-2)) - 0.5, rel=1e-14)


@pytest.mark.parametrize("p", [1.2, 2.0, 3.0])
def test_slicing_inequality_grid(p):
    for j in range(21):
        L = be.partial_product(p, j + 1)
        ts = L * np.array([1.0, 1.5, 3.0, 10.0])
        margins = [be.verify_slicing_inequality(p, j, [t]) for t in ts]
        assert min(margins) >= 0
        assert np.all(np.diff(margins) >= -1e-15)


def test_slicing_inequality_rejects_small_t():
    with pytest.raises(ValueError):
        be.verify_slicing_inequality(2.0, 0, [2.0])


def test_closed_form_examples():
    assert be.subcritical_closed_forms(0, ProblemParams(n=3, p=1.5)) == pytest.approx((0.5, 1.0))
    a1, _ = be.subcritical_closed_forms(1, ProblemParams(n=3, p=1.5))
    assert a1 == pytest.approx(1.25, rel=1e-15)
    for j in range(10):
        assert be.subcritical_closed_forms(j, ProblemParams(n=1, p=2.5))[0] == 0.0


@pytest.mark.parametrize("n,p", [(1, Fraction(2)), (1, Fraction(3)), (2, Fraction(2)),
                                 (3, Fraction(3, 2)), (4, Fraction(3, 2))])
def test_recursions_match_closed_forms(n, p):
    alphas, gammas = be.exponent_recursions(n, p, 40)
    params = ProblemParams(n=n, p=float(p))
    for j in range(41):
        exact_a = p**j * ((n - 1) * (p - 1) / 2 + Fraction(n - 1, 2)) - Fraction(n - 1, 2)
        exact_g = p**j * (1 + 1 / (p - 1)) - 1 / (p - 1)
        assert alphas[j] == exact_a and gammas[j] == exact_g
        a, g = be.subcritical_closed_forms(j, params)
        assert a == pytest.approx(float(exact_a), rel=1e-12, abs=1e-300)
        assert g == pytest.approx(float(exact_g), rel=1e-12)


def test_float_bundle_sequences_match_closed_forms():
    b = default_bundle(3, 1.5)
    for j in range(41):
        a, g = be.subcritical_closed_forms(j, ProblemParams(n=3, p=1.5))
        assert b.alpha[j] == pytest.approx(a, rel=1e-12)
        assert b.gamma[j] == pytest.approx(g, rel=1e-12)


@pytest.mark.parametrize("p", [2, 3, 5])
def test_sigma_integer_exact(p):
    rec = be.sigma_recursion(p, 40)
    assert rec == [(p**j - 1) // (p - 1) for j in range(41)]
    assert be.sigma_closed_form(2, 3) == 4


def _ell_power_gap(p, j):
    c = 1 + 1 / (p - 1)
    g = (p**j) * c - 1 / (p - 1)
    return abs(math.exp(g * math.log1p(p ** (-j))) / math.exp(c) - 1)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_ell_power_gamma_limit(p):
    # relative gap ~ (c/2 + 1/(p-1)) p^-j to leading order
    kappa = (1 + 1 / (p - 1)) / 2 + 1 / (p - 1)
    for j in (10, 20, 30, 40):
        assert _ell_power_gap(p, j) <= kappa * p ** (-j) * (1 + 1e-6)
    assert _ell_power_gap(p, 40) <= 1e-6


@pytest.mark.xfail(strict=True, reason="gap at j=20 is of order p^-20, above 1e-6 for p < 2.1")
@pytest.mark.parametrize("p", [1.5, 2.0])
def test_ell_power_gamma_limit_at_20(p):
    assert _ell_power_gap(p, 20) <= 1e-6


@given(p=st.floats(1.05, 5.0), j=st.integers(0, 30))
def test_weighted_geometric_sum(p, j):
    brute = math.fsum((j - k) * p**k for k in range(j))
    assert be.weighted_geometric_sum(p, j) == pytest.approx(brute, rel=1e-9, abs=1e-9)


def test_regime_guards():
    with pytest.raises(be.RegimeError):
        be.subcritical_closed_forms(1, ProblemParams(n=3, p=2.0))
    with pytest.raises(be.RegimeError):
        be.subcritical_bundle(ProblemParams(n=2, p=3.0), 1.0, 1.0)
    with pytest.raises(be.RegimeError):
        be.critical_bundle(ProblemParams(n=2, p=2.0), 1.0, 1.0)
    with pytest.raises(be.RegimeError) as info:
        be.bundle_for(ProblemParams(n=3, p=3.0), 1.0, 1.0)
    assert info.value.got == "supercritical"


def test_first_lower_bound_constants():
    params = ProblemParams(n=1, p=2.0, beta=1.0, epsilon=2.0)
    C2, K0 = be.first_lower_bound_constants(params, 2.0, 0.0, 0.5)
    assert C2 == 1.0
    assert K0 == pytest.approx(0.5 * ONE_MINUS_INV_E * 4.0 / 4.0)
    C2b, _ = be.first_lower_bound_constants(replace(params, beta=3.0), 0.0, 1.0, 1.0)
    assert C2b == pytest.approx(3.0 / 8.0 * ONE_MINUS_INV_E)
    with pytest.raises(ValueError):
        be.first_lower_bound_constants(params, 0.0, 0.0, 1.0)


@pytest.mark.parametrize("n,p", [(1, 2.0), (1, 3.0), (2, 2.0), (3, 1.5)])
def test_subcritical_bundle_chain(n, p):
    b = default_bundle(n, p)
    assert b.chain_ok
    assert np.all(b.log_K[b.j0:] >= b.log_K_floor[b.j0:] - 1e-12 * np.abs(b.log_K_floor[b.j0:]))
    for name in ("C1", "C2", "C3", "K0", "M", "D", "E", "E1", "E2", "eps0"):
        val = getattr(b, name)
        assert math.isfinite(val) and val > 0, name
    assert b.M <= math.exp(-(1 + 1 / (p - 1))) * (1 + 1e-15)


@pytest.mark.parametrize("n,p", [(1, 2.0), (2, 2.0), (3, 1.5)])
def test_unrolled_sum_identity(n, p):
    b = default_bundle(n, p)
    step = be.unrolled_lower_chain(math.log(b.K0), math.log(b.D), p, 40)
    np.testing.assert_allclose(b.log_K_unrolled, step, rtol=1e-10)


def test_eps0_fixing_inequality():
    b = default_bundle(1, 2.0)
    a = be.lifespan_exponent(1, 2.0)
    lhs = -a * math.log(b.eps0)
    rhs = (a / 2.0) * math.log(b.E1) + math.log(max(b.R, 2 * b.L_limit))
    assert lhs >= rhs and lhs - rhs < 1e-9


def test_jmax_below_threshold_rejected():
    with pytest.raises(ValueError, match="j0"):
        be.subcritical_bundle(ProblemParams(n=1, p=2.0), 1e-30, 1.0, J_max=5)


def test_subcritical_lifespan_bound():
    b = default_bundle(1, 2.0)
    a = be.lifespan_exponent(1, 2.0)
    full = be.lifespan_bound(b, 0.5)
    half = be.lifespan_bound(b, 0.25)
    assert half.value / full.value == pytest.approx(2**a, rel=1e-12)
    assert full.guaranteed
    assert full.value == pytest.approx(b.E2 * 0.5 ** (-a), rel=1e-12)
    flagged = be.lifespan_bound(b, 2 * b.eps0)
    assert not flagged.guaranteed and "exceeds" in flagged.note


def test_divergence_certificate():
    b = default_bundle(2, 2.0)
    for eps in (1.0, 0.1):
        T = be.lifespan_bound(b, eps).value
        assert abs(be.divergence_bracket(b, T, eps)) < 1e-9
        assert be.divergence_bracket(b, 1.01 * T, eps) > 0


@pytest.mark.parametrize("n,p", [(2, 3.0), (3, 2.0)])
def test_critical_bundle(n, p):
    b = default_bundle(n, p)
    assert b.chain_ok and b.eps0 == math.inf
    np.testing.assert_allclose(b.sigma, [(p**j - 1) / (p - 1) for j in range(41)], rtol=1e-12)
    assert np.all(b.log_Q[b.j1:] >= b.log_Q_floor[b.j1:] - 1e-12 * np.abs(b.log_Q_floor[b.j1:]))
    assert b.C4 == pytest.approx(b.C3 / 2.0)
    assert b.Dtilde == pytest.approx(b.C4 * (p - 1) ** 2)


def test_critical_sigma_example():
    assert default_bundle(2, 3.0).sigma[2] == 4.0


def test_critical_lifespan_bound():
    b = default_bundle(3, 2.0)
    eps = np.array([4000.0, 8000.0, 16000.0])
    logs = np.array([be.lifespan_bound_critical(b, e).log_value for e in eps])
    assert np.all(np.diff(logs) < 0)
    x = eps ** (-(b.p - 1))
    slope = np.diff(logs) / np.diff(x)
    np.testing.assert_allclose(slope, b.Etilde ** (-(b.p - 1)), rtol=1e-9)
    doubled = replace(b, Etilde=2 * b.Etilde)
    logs2 = np.array([be.lifespan_bound_critical(doubled, e).log_value for e in eps])
    slope2 = np.diff(logs2) / np.diff(x)
    np.testing.assert_allclose(slope / slope2, 2 ** (b.p - 1), rtol=1e-9)
    assert be.lifespan_bound_critical(b, 1.0).value == math.inf


def test_bundle_report_is_json(tmp_path):
    for n, p in ((1, 2.0), (3, 2.0)):
        rep = be.bundle_report(default_bundle(n, p))
        text = json.dumps(rep, allow_nan=False)
        assert len(rep["log_K" if n == 1 else "log_Q"]) == 20
        back = json.loads(text)
        assert back["regime"] in ("subcritical", "critical")
    assert rep["eps0"] is None and "eps0_note" in rep
