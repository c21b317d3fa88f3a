import math

import numpy as np
import pytest
from scipy.integrate import quad
from hypothesis import given, settings
from hypothesis import strategies as st

from bellhedge.dynamics import CostConfig, CostSpec, cost, pnl_dB, reward_cashflow, reward_R
from bellhedge.instruments import HedgeBasket, InstrumentFMR, Portfolio, combine
from bellhedge.market_sim import InstrumentSpec, MarketState, oracle_book_value, oracle_cashflow, oracle_features

F = 5


def fmr(bn, bx, cash, f=None):
    f = np.zeros(F) if f is None else f
    return InstrumentFMR(np.r_[bn, f[1:]], np.r_[bx, f[1:]], bn, bx, cash)


def test_pnl_examples():
    assert pnl_dB(fmr(10.0, 11.0, 0.0), 1.0) == 1.0
    assert pnl_dB(fmr(10.0, 10.0, 2.0), 0.5) == -3.0
    assert pnl_dB(fmr(0.0, 0.0, 1.7), 0.9) == 1.7  # daily-settled future
    with pytest.raises(ValueError):
        pnl_dB(InstrumentFMR(np.zeros(F), None, 0.0, None, None), 1.0)


def test_cost_examples():
    spec = CostSpec(np.full(F, 0.1))
    hf = np.random.default_rng(0).normal(size=(2, F))
    assert cost(spec, [0.0, 0.0], hf) == 0.0
    assert cost(CostSpec.zero(F), [1.0, -2.0], hf) == 0.0
    f = hf[0]
    assert cost(spec, [1.0, 1.0], np.stack([f, -f])) == 0.0
    assert math.isinf(cost(spec, [5.5, 0.0], hf))


def test_cost_spec_validation():
    with pytest.raises(ValueError):
        CostSpec(np.array([-1.0, 0, 0, 0, 0]))
    with pytest.raises(ValueError):
        CostSpec(np.zeros(F), action_bound=0.0)
    with pytest.raises(ValueError):
        CostConfig(gamma_weights=(0.0, -1.0, 0.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        cost(CostSpec.zero(3), [1.0], np.zeros((1, F)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_cost_convex_and_reward_concave(seed):
    rng = np.random.default_rng(seed)
    spec = CostSpec(rng.uniform(0, 0.2, F), 5.0)
    legs = tuple(InstrumentFMR(rng.normal(size=F), rng.normal(size=F), 0.0, 0.0, 0.0) for _ in range(3))
    legs = tuple(InstrumentFMR(l.features_now, l.features_next, l.features_now[0], l.features_next[0], rng.normal()) for l in legs)
    h = HedgeBasket(legs)
    z = Portfolio(InstrumentFMR(rng.normal(size=F), rng.normal(size=F), 0.3, 0.1, 0.2))
    a, b = rng.uniform(-5, 5, 3), rng.uniform(-5, 5, 3)
    hf = h.features_now()
    assert cost(spec, 0.5 * a + 0.5 * b, hf) <= 0.5 * cost(spec, a, hf) + 0.5 * cost(spec, b, hf) + 1e-12
    mid = reward_R(0.5 * a + 0.5 * b, z, h, 0.97, spec)
    assert mid >= 0.5 * reward_R(a, z, h, 0.97, spec) + 0.5 * reward_R(b, z, h, 0.97, spec) - 1e-12


def test_reward_examples():
    rng = np.random.default_rng(1)
    z = Portfolio(fmr(2.0, 2.5, 0.3))
    h = HedgeBasket((fmr(1.0, 1.2, 0.1, rng.normal(size=F)),))
    spec = CostSpec.zero(F)
    assert reward_R([0.0], z, h, 0.9, spec) == pytest.approx(pnl_dB(z, 0.9), abs=1e-15)
    empty = Portfolio(InstrumentFMR.zeros(F))
    assert reward_R([1.0], empty, h, 0.9, spec) == pytest.approx(pnl_dB(h.legs[0], 0.9), abs=1e-15)
    assert reward_R([9.0], empty, h, 0.9, spec) == -math.inf
    assert reward_cashflow([0.0], z, h, spec) == 0.3
    fut = HedgeBasket((fmr(0.0, 0.0, 0.4),))
    c = CostSpec(np.full(F, 0.1))
    assert reward_cashflow([1.0], z, fut, c) == pytest.approx(0.3 - cost(c, [1.0], fut.features_now()), abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_reward_identity(seed):
    # R(a) - R_cash(a) = beta B(z' + a h') - B(z + a h) when R_cash counts r(z + a h)
    rng = np.random.default_rng(seed)
    spec = CostSpec(rng.uniform(0, 0.1, F), 5.0)
    mk = lambda: fmr(rng.normal(), rng.normal(), rng.normal(), rng.normal(size=F))  # noqa: E731
    z, h = Portfolio(mk()), HedgeBasket((mk(), mk()))
    a = rng.uniform(-4, 4, 2)
    beta = float(rng.uniform(0.5, 1.0))
    lhs = reward_R(a, z, h, beta, spec) - reward_cashflow(a, z, h, spec, include_hedge_cashflow=True)
    b_next = z.book_next + sum(ai * l.book_next for ai, l in zip(a, h.legs))
    rhs = beta * b_next - z.book_now
    assert lhs == pytest.approx(rhs, abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_pnl_linearity(seed):
    rng = np.random.default_rng(seed)
    xs = [fmr(rng.normal(), rng.normal(), rng.normal()) for _ in range(4)]
    w = rng.normal(size=4)
    assert pnl_dB(combine(w, xs), 0.95) == pytest.approx(sum(wi * pnl_dB(x, 0.95) for wi, x in zip(w, xs)), abs=1e-10)


@pytest.mark.parametrize("spec", [
    InstrumentSpec("vanilla_option", 100.0, 20, -1, True),
    InstrumentSpec("vanilla_option", 95.0, 1, 1, False),
    InstrumentSpec("forward", 101.0, 8),
    InstrumentSpec("daily_settled_future", steps_to_expiry=13),
])
def test_risk_neutral_pnl_is_a_martingale_increment(spec):
    # E[beta B(x', m') + r - B(x, m)] = 0 under the pricing measure; adaptive
    # quadrature in the normal shock with a breakpoint at any payoff kink
    rate, vol, dt = 0.6, 0.2, 1.0 / 52
    beta = math.exp(-rate * dt)
    m = MarketState(0, 100.0, vol, rate, dt, beta)
    drift, sd = (rate - 0.5 * vol * vol) * dt, vol * math.sqrt(dt)
    b0 = oracle_book_value(spec, m)

    def integrand(z):
        s1 = 100.0 * math.exp(drift + sd * z)
        m1 = MarketState(1, s1, vol, rate, dt, beta)
        pnl = beta * oracle_book_value(spec.rolled(), m1) + oracle_cashflow(spec, m, m1) - b0
        return pnl * math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)

    pts = [(math.log(spec.strike / 100.0) - drift) / sd] if spec.strike else None
    total, _ = quad(integrand, -12, 12, points=pts, limit=200, epsabs=1e-13, epsrel=1e-12)
    assert abs(total) < 1e-8
