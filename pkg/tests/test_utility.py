import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bellhedge.utility import (
    FAMILIES,
    EmpiricalDistribution,
    OCERangeError,
    UtilityConfig,
    UtilityFamily,
    check_axioms,
    entropy_closed_form,
    oce_batch,
    oce_objective,
    oce_value,
    u_eval,
)

POINTWISE = [k for k in FAMILIES if k != "worst_case"]


def fam(kind, lam=1.0):
    return UtilityFamily(kind, lam)


def test_u_examples():
    assert u_eval(fam("entropy"), 0.0) == 0.0
    assert u_eval(fam("vicky"), 1.0) == pytest.approx(2.0 - math.sqrt(2.0), abs=1e-12)
    assert u_eval(fam("normalized_quadratic", 2.0), 1.0) == pytest.approx(0.25, abs=1e-12)


def test_u_formulas_against_direct_substitution():
    lam = 0.7
    xs = np.linspace(-3, 3, 13)
    for x in xs:
        assert u_eval(fam("entropy", lam), x) == pytest.approx((1 - math.exp(-lam * x)) / lam, abs=1e-12)
        assert u_eval(fam("cvar", lam), x) == pytest.approx((1 + lam) * min(0.0, x), abs=1e-12)
        assert u_eval(fam("vicky", lam), x) == pytest.approx((1 + lam * x - math.sqrt(1 + lam * lam * x * x)) / lam, abs=1e-12)
        assert u_eval(fam("expectation"), x) == x


def test_worst_case_has_no_pointwise_u():
    with pytest.raises(ValueError):
        u_eval(fam("worst_case"), 1.0)


@pytest.mark.parametrize("kind", POINTWISE)
def test_normalisation_at_zero(kind):
    f = fam(kind, 1.3)
    assert abs(u_eval(f, 0.0)) <= 1e-12
    if kind != "cvar":
        h = 1e-6
        assert (u_eval(f, h) - u_eval(f, -h)) / (2 * h) == pytest.approx(1.0, abs=1e-8)


def test_invalid_family_and_lambda():
    with pytest.raises(ValueError):
        UtilityFamily("nope")
    with pytest.raises(ValueError):
        UtilityFamily("entropy", 0.0)
    with pytest.raises(ValueError):
        UtilityConfig(kind="nope")


def test_empirical_distribution_validation():
    with pytest.raises(ValueError):
        EmpiricalDistribution(np.array([1.0, 2.0]), np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        EmpiricalDistribution(np.array([1.0]), np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        EmpiricalDistribution(np.array([1.0, 2.0]), np.array([-0.5, 1.5]))


@pytest.mark.parametrize("kind", FAMILIES)
def test_degenerate_law_gives_the_constant(kind):
    d = EmpiricalDistribution(np.full(3, 2.5), np.array([0.2, 0.3, 0.5]))
    assert oce_value(fam(kind), d)[0] == pytest.approx(2.5, abs=1e-10)


def test_entropy_two_point_example():
    d = EmpiricalDistribution.uniform([-1.0, 1.0])
    expected = -math.log(math.cosh(1.0))
    assert oce_value(fam("entropy"), d)[0] == pytest.approx(expected, abs=1e-8)
    assert entropy_closed_form(1.0, d) == pytest.approx(expected, abs=1e-12)


def test_expectation_returns_mean_and_zero_shift():
    d = EmpiricalDistribution(np.array([1.0, 4.0]), np.array([0.25, 0.75]))
    v, y = oce_value(fam("expectation"), d)
    assert v == pytest.approx(3.25, abs=1e-14)
    assert y == 0.0


def test_worst_case_is_exact_min_over_support():
    d = EmpiricalDistribution(np.array([-7.0, 3.0, -9.0]), np.array([0.5, 0.5, 0.0]))
    assert oce_value(fam("worst_case"), d)[0] == -7.0


def test_closed_form_edge_cases():
    assert entropy_closed_form(2.0, EmpiricalDistribution.uniform([0.0, 0.0])) == 0.0
    assert entropy_closed_form(2.0, EmpiricalDistribution.uniform([1.5])) == pytest.approx(1.5, abs=1e-15)
    with pytest.raises(ValueError):
        entropy_closed_form(0.0, EmpiricalDistribution.uniform([1.0]))


def test_entropy_range_error_beyond_exponent_cap():
    d = EmpiricalDistribution.uniform([-400.0, 400.0])
    with pytest.raises(OCERangeError):
        oce_value(fam("entropy", 1.0), d)


def test_cvar_matches_tail_average():
    # (1+lam) min(0, x) gives CVaR at level 1/(1+lam): lam = 1 -> mean of the worst half
    x = np.array([-3.0, -1.0, 2.0, 5.0])
    d = EmpiricalDistribution.uniform(x)
    assert oce_value(fam("cvar", 1.0), d)[0] == pytest.approx(-2.0, abs=1e-10)


laws = st.integers(2, 8).flatmap(
    lambda n: st.tuples(
        st.lists(st.floats(-5, 5, allow_nan=False), min_size=n, max_size=n),
        st.lists(st.floats(0.01, 1.0), min_size=n, max_size=n),
    )
)


def _law(xp):
    x, w = xp
    p = np.asarray(w) / np.sum(w)
    return EmpiricalDistribution(np.asarray(x), p / p.sum())


@settings(max_examples=60, deadline=None)
@given(laws, st.sampled_from(POINTWISE), st.floats(0.2, 3.0))
def test_shift_is_a_local_maximiser(xp, kind, lam):
    f = fam(kind, lam)
    d = _law(xp)
    v, y = oce_value(f, d)
    g = oce_objective(f, d, y)
    assert v == pytest.approx(g, abs=1e-9)
    for dlt in (1e-4, -1e-4):
        assert g >= oce_objective(f, d, y + dlt) - 1e-10


@settings(max_examples=60, deadline=None)
@given(laws, st.sampled_from(FAMILIES), st.floats(-4, 4))
def test_cash_invariance_and_jensen(xp, kind, c):
    f = fam(kind, 1.0)
    d = _law(xp)
    v = oce_value(f, d)[0]
    assert oce_value(f, d.shifted(c))[0] == pytest.approx(v + c, abs=1e-8)
    assert v <= d.mean() + 1e-8


@settings(max_examples=60, deadline=None)
@given(laws, st.floats(0.1, 3.0))
def test_entropy_sup_matches_closed_form(xp, lam):
    d = _law(xp)
    assert oce_value(fam("entropy", lam), d)[0] == pytest.approx(entropy_closed_form(lam, d), abs=1e-8)


def test_batch_shapes_and_broadcast():
    x = np.arange(24, dtype=float).reshape(2, 3, 4)
    p = np.full(4, 0.25)
    v, y = oce_batch(fam("entropy"), x, p)
    assert v.shape == (2, 3) and y.shape == (2, 3)
    v2, _ = oce_batch(fam("entropy"), x, p, closed_form=True)
    assert np.allclose(v, v2, atol=1e-8)


def test_axioms_expectation_all_pass():
    rep = check_axioms(fam("expectation"), trials=200, seed=1)
    assert all(rep.passed.values())


def test_axioms_entropy_coherence_fails_with_counterexample():
    rep = check_axioms(fam("entropy"), trials=200, seed=1)
    assert rep.ok()
    assert not rep.passed["coherent"]
    ce = rep.counterexamples["coherent"]
    assert abs(ce["U[nX]"] - ce["nU[X]"]) > 1e-8


def test_axioms_cvar_is_coherent():
    rep = check_axioms(fam("cvar"), trials=200, seed=1)
    assert rep.ok("monotone", "concave", "cash_invariant", "risk_averse", "coherent")


def test_axiom_report_json_roundtrip():
    import json

    rep = check_axioms(fam("vicky"), trials=20, seed=3)
    d = json.loads(rep.to_json())
    assert d["trials"] == 20 and d["family"]["kind"] == "vicky"
    with pytest.raises(ValueError):
        check_axioms(fam("vicky"), trials=0)
