import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bellhedge.bellman import (
    NonConvergenceError, T_alt, action_values, apply_T, apply_T_multi, apply_T_tilde, greedy_policy, solve, value_iterate,
    verify_cashflow_equivalence,
)
from bellhedge.mdp import ClaimConfig, MDPConfig, assemble_mdp, build_mdp
from bellhedge.utility import UtilityFamily

from conftest import FAMS, SMALL_MDP

ENT = UtilityFamily("entropy", 1.0)
EXP = UtilityFamily("expectation")
CVAR = UtilityFamily("cvar", 1.0)

ZERO_MDP = MDPConfig(base=ClaimConfig(payoff="zero"), hedges=[ClaimConfig(payoff="zero")])
FUTURES_MDP = MDPConfig(base=ClaimConfig(payoff="future", quantity=-0.3), hedges=[ClaimConfig(payoff="future", quantity=0.2)])


def _rand(mdp, seed, scale=3.0):
    return np.random.default_rng(seed).uniform(-scale, scale, size=(mdp.K, mdp.n_lattice))


def test_T0_is_zero_risk_neutral(default_mdp):
    assert np.max(np.abs(apply_T(default_mdp, EXP, np.zeros((3, 11))))) < 1e-12


@pytest.mark.parametrize("op", ["T", "T_tilde", "T_alt"])
def test_constant_shift(default_mdp, fam3, op):
    f = _rand(default_mdp, 1)
    fn = {"T": apply_T, "T_tilde": apply_T_tilde, "T_alt": T_alt}[op]
    shifted = fn(default_mdp, fam3, f + 1.7)
    assert np.allclose(shifted, fn(default_mdp, fam3, f) + default_mdp.beta[:, None] * 1.7, rtol=0, atol=1e-10)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(FAMS), st.sampled_from(["T", "T_tilde"]))
def test_monotone_and_contraction(seed, fam, op):
    mdp = build_mdp(SMALL_MDP)
    fn = apply_T if op == "T" else apply_T_tilde
    f = _rand(mdp, seed)
    g = f + np.random.default_rng(seed + 1).uniform(0, 2, size=f.shape)
    Tf, Tg = fn(mdp, fam, f), fn(mdp, fam, g)
    assert np.all(Tf <= Tg + 1e-10)
    assert np.max(np.abs(Tf - Tg)) <= mdp.beta_star * np.max(np.abs(f - g)) + 1e-9


def test_T_tilde_zero_cashflows_is_minus_hedge_book():
    # f = 0, zero cashflows, zero cost: (T~ 0)(z, m) = max_a (-a . B(h, m)) over the action grid
    mdp0 = build_mdp(SMALL_MDP)
    K = mdp0.K
    zero = {"cashflows": np.zeros((K, K)), "book": np.zeros(K), "features": np.zeros((K, 5))}
    hedge = {"cashflows": np.zeros((K, K)), "book": np.array([1.3, -0.4]), "features": np.zeros((K, 5))}
    axis = np.linspace(-1.0, 1.0, 5)
    m = assemble_mdp(mdp0.market_states, mdp0.P, mdp0.beta, mdp0.calendar, axis, axis[:, None], np.linspace(-0.5, 0.5, 3)[:, None],
                     zero, [hedge], np.zeros(5), 0.5)
    got = apply_T_tilde(m, ENT, np.zeros((K, 5)))
    expect = np.max(-m.a_eff[None, :, :, 0] * hedge["book"][:, None, None], axis=2)
    assert np.allclose(got, expect, atol=1e-12)


def test_T_multi_one_is_T(small_mdp, fam3):
    f = _rand(small_mdp, 2)
    assert np.allclose(apply_T_multi(small_mdp, fam3, f, 1), apply_T(small_mdp, fam3, f), rtol=0, atol=1e-12)
    with pytest.raises(ValueError):
        apply_T_multi(small_mdp, fam3, f, 3)


# real-world drift and trading costs make rewards depend on the lattice point
SKEWED_SMALL = SMALL_MDP.model_copy(update={"p_up": 0.5, "p_down": 0.2, "q_up": 0.3, "q_down": 0.3})


def test_T_multi_expectation_time_consistent(small_mdp):
    skewed = build_mdp(MDPConfig(**{**SKEWED_SMALL.model_dump(), "cost": {"action_bound": 0.5, "gamma_weights": [0.0, 0.05, 0.0, 0.0, 0.0]}}))
    for mdp in (small_mdp, skewed):
        for seed in range(5):
            f = _rand(mdp, seed)
            assert np.allclose(apply_T(mdp, EXP, apply_T(mdp, EXP, f)), apply_T_multi(mdp, EXP, f, 2), atol=1e-10)


def test_T_multi_matches_scalar_enumeration():
    # direct loop over (a1, a2 per intermediate regime) for one state
    mdp = build_mdp(SKEWED_SMALL)
    f = _rand(mdp, 9)
    k, p = 1, 2
    best = -np.inf
    W = mdp.nxt.shape[1]
    for a1 in range(mdp.n_actions):
        p1 = mdp.succ[p, a1]
        for a2 in np.ndindex(*([mdp.n_actions] * W)):
            xs, ps = [], []
            for w1 in range(W):
                j = mdp.nxt[k, w1]
                p2 = mdp.succ[p1, a2[w1]]
                for w2 in range(W):
                    xs.append(mdp.R[k, p, a1, w1] + mdp.beta[k] * (mdp.R[j, p1, a2[w1], w2] + mdp.beta[j] * f[mdp.nxt[j, w2], p2]))
                    ps.append(mdp.probs[k, w1] * mdp.probs[j, w2])
            val = -np.log(np.dot(ps, np.exp(-np.array(xs))))
            best = max(best, val)
    assert apply_T_multi(mdp, ENT, f, 2)[k, p] == pytest.approx(best, abs=1e-10)


def test_T_multi_cvar_gap_recorded(small_mdp):
    gaps = []
    for seed in range(5):
        f = _rand(small_mdp, seed)
        gaps.append(np.max(np.abs(apply_T(small_mdp, CVAR, apply_T(small_mdp, CVAR, f)) - apply_T_multi(small_mdp, CVAR, f, 2))))
    print("cvar |T^2 f - T_2 f| per seed:", ["%.3e" % g for g in gaps])
    assert max(gaps) > 1e-6


def test_zero_reward_mdp_converges_in_one_sweep(fam3):
    mdp = build_mdp(ZERO_MDP)
    res = value_iterate(mdp, fam3)
    assert res.converged and res.iterations == 1
    assert np.all(res.values == 0.0)


def test_uniqueness_and_residual_ratio(default_mdp):
    a = value_iterate(default_mdp, ENT, tol=1e-8)
    b = value_iterate(default_mdp, ENT, default_mdp.random_values(5), tol=1e-8)
    assert a.converged and b.converged
    assert np.max(np.abs(a.values - b.values)) < 2e-8
    r = np.asarray(b.residuals)
    assert np.all(r[1:] <= 0.9 * r[:-1] + 1e-9)


def test_non_convergence_flag(default_mdp):
    res = value_iterate(default_mdp, ENT, default_mdp.random_values(1), tol=1e-8, max_iter=3)
    assert not res.converged and res.iterations == 3
    with pytest.raises(NonConvergenceError):
        solve(default_mdp, ENT, tol=1e-8, max_iter=3)
    with pytest.raises(ValueError):
        value_iterate(default_mdp, ENT, tol=0.0)
    with pytest.raises(ValueError):
        apply_T(default_mdp, ENT, np.full((3, 11), np.nan))


def test_greedy_ties_and_strict_argmax(default_mdp, costly_mdp):
    # zero cost: every action ties at V* = 0, so the lowest index wins
    assert np.all(greedy_policy(default_mdp, EXP, np.zeros((3, 11))) == 0)
    # positive cost: not trading is the strict optimum; at the lattice edge every
    # outward action snaps to the same zero trade and the lowest index wins
    V = value_iterate(costly_mdp, EXP).values
    assert np.max(np.abs(V)) < 1e-8
    pol = greedy_policy(costly_mdp, EXP, V)
    assert np.all(costly_mdp.a_eff[np.arange(11)[None, :], pol] == 0.0)
    assert np.all(pol[:, 1:] == costly_mdp.zero_action())


def test_greedy_single_action_and_shift(default_mdp):
    one = build_mdp(MDPConfig(action_points=1))
    assert np.all(greedy_policy(one, ENT, _rand(one, 0)) == 0)
    V = value_iterate(default_mdp, ENT).values
    pol = greedy_policy(default_mdp, ENT, V)
    assert np.array_equal(pol, greedy_policy(default_mdp, ENT, V + 3.0))
    q = action_values(default_mdp, ENT, V)
    assert np.allclose(np.take_along_axis(q, pol[..., None], 2)[..., 0], apply_T(default_mdp, ENT, V))


@pytest.mark.parametrize("fam", [EXP, ENT], ids=["expectation", "entropy"])
def test_cashflow_equivalence(default_mdp, fam):
    rep = verify_cashflow_equivalence(default_mdp, fam, tol=1e-6)
    assert rep["passed"], rep["max_abs_gap"]


def test_cashflow_equivalence_futures_only():
    mdp = build_mdp(FUTURES_MDP)
    assert np.all(mdp.book == 0.0)
    rep = verify_cashflow_equivalence(mdp, ENT)
    assert np.array_equal(rep["V"], rep["V_cash"])


def test_T_tilde_expectation_matches_book_transform(default_mdp):
    # for U = E and constant beta, the cash-value fixed point is V* + B
    v = solve(default_mdp, EXP, "T", 1e-10).values
    w = solve(default_mdp, EXP, "T_tilde", 1e-10).values
    assert np.max(np.abs(w - v - default_mdp.book)) < 1e-7


def test_entropy_two_step_gap_has_a_sign(small_mdp):
    # discounting inside the utility: U[b Y] = b U_{b lam}[Y] >= b U[Y], so the
    # one-shot two-step operator dominates the iterated one; equal when b = 1
    undiscounted = build_mdp(SMALL_MDP)
    undiscounted.beta = np.ones_like(undiscounted.beta)
    for seed in range(5):
        f = _rand(small_mdp, seed)
        gap = apply_T_multi(small_mdp, ENT, f, 2) - apply_T(small_mdp, ENT, apply_T(small_mdp, ENT, f))
        assert np.all(gap >= -1e-12) and np.max(gap) > 1e-6
        flat = apply_T_multi(undiscounted, ENT, f, 2) - apply_T(undiscounted, ENT, apply_T(undiscounted, ENT, f))
        assert np.max(np.abs(flat)) < 1e-10
