import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bellhedge.instruments import HedgeBasket, InstrumentFMR, Portfolio, UnpopulatedError, apply_action, combine, roll

F = 5


def rand_fmr(rng):
    return InstrumentFMR(rng.normal(size=F), rng.normal(size=F), rng.normal(), rng.normal(), rng.normal())


def test_zero_weights_give_empty_portfolio():
    rng = np.random.default_rng(0)
    xs = [rand_fmr(rng) for _ in range(3)]
    z = combine(np.zeros(3), xs)
    assert z.fmr.allclose(InstrumentFMR.zeros(F), atol=0.0)


def test_single_unit_weight_is_identity():
    x = rand_fmr(np.random.default_rng(1))
    assert combine([1.0], [x]).fmr.allclose(x, rtol=0, atol=0)


def test_two_minus_one_fieldwise():
    rng = np.random.default_rng(2)
    a, b = rand_fmr(rng), rand_fmr(rng)
    z = combine([2.0, -1.0], [a, b])
    assert np.allclose(z.features_now, 2 * a.features_now - b.features_now, rtol=0, atol=1e-14)
    assert np.allclose(z.features_next, 2 * a.features_next - b.features_next, rtol=0, atol=1e-14)
    assert z.book_now == pytest.approx(2 * a.book_now - b.book_now, abs=1e-14)
    assert z.book_next == pytest.approx(2 * a.book_next - b.book_next, abs=1e-14)
    assert z.cashflow == pytest.approx(2 * a.cashflow - b.cashflow, abs=1e-14)


def test_length_mismatch():
    x = rand_fmr(np.random.default_rng(3))
    with pytest.raises(ValueError):
        combine([1.0, 2.0], [x])
    with pytest.raises(ValueError):
        InstrumentFMR(np.zeros(3), np.zeros(4), 0.0, 0.0, 0.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(seed, al, be):
    rng = np.random.default_rng(seed)
    xs = [rand_fmr(rng) for _ in range(4)]
    u, v = rng.normal(size=4), rng.normal(size=4)
    lhs = combine(al * u + be * v, xs).fmr
    rhs = combine(u, xs).fmr.scaled(al) + combine(v, xs).fmr.scaled(be)
    assert lhs.allclose(rhs, rtol=1e-12, atol=1e-12)


def test_roll_shifts_fields_and_marks_unpopulated():
    x = InstrumentFMR(np.ones(F), np.full(F, 2.0), 1.0, 3.2, 0.5)
    r = roll(Portfolio(x))
    assert r.book_now == 3.2 and np.all(r.features_now == 2.0)
    assert not r.populated
    with pytest.raises(UnpopulatedError):
        roll(r)
    with pytest.raises(UnpopulatedError):
        r.require_populated()


def test_expired_roll_is_zero():
    x = InstrumentFMR(np.ones(F), np.zeros(F), 1.0, 0.0, 0.7)
    r = roll(Portfolio(x))
    assert r.book_now == 0.0 and np.all(r.features_now == 0.0)


def test_roll_commutes_with_combine():
    rng = np.random.default_rng(5)
    xs = [rand_fmr(rng) for _ in range(3)]
    w = rng.normal(size=3)
    lhs = roll(combine(w, xs)).fmr
    rolled = [roll(Portfolio(x)).fmr for x in xs]
    rhs = rolled[0].scaled(w[0]) + rolled[1].scaled(w[1]) + rolled[2].scaled(w[2])
    assert lhs.allclose(rhs)


def test_populate_rejoins_next_record():
    x = roll(Portfolio(InstrumentFMR(np.ones(F), np.full(F, 2.0), 1.0, 3.2, 0.5))).fmr
    y = x.populate(np.zeros(F), 0.0, 1.0)
    assert y.populated and y.book_now == 3.2
    with pytest.raises(ValueError):
        y.populate(np.zeros(F), 0.0, 1.0)


def _basket(rng, n=2):
    return HedgeBasket(tuple(rand_fmr(rng) for _ in range(n)))


def test_apply_action_examples():
    rng = np.random.default_rng(6)
    h = _basket(rng)
    z_next = roll(Portfolio(rand_fmr(rng)))
    same = apply_action(z_next, [0.0, 0.0], h)
    assert same.fmr.allclose(z_next.fmr, rtol=0, atol=0)

    empty = roll(Portfolio(InstrumentFMR.zeros(F)))
    one = apply_action(empty, [1.0, 0.0], h)
    assert np.array_equal(one.features_now, h.legs[0].features_next)
    assert one.book_now == h.legs[0].book_next

    up = apply_action(z_next, [1.0, 1.0], h)
    back = apply_action(up, [-1.0, -1.0], h)
    assert back.fmr.allclose(z_next.fmr, rtol=0, atol=1e-14)


def test_apply_action_accumulates():
    rng = np.random.default_rng(7)
    h = _basket(rng, 3)
    z_next = roll(Portfolio(rand_fmr(rng)))
    a, b = rng.normal(size=3), rng.normal(size=3)
    lhs = apply_action(z_next, a + b, h).fmr
    rhs = apply_action(apply_action(z_next, a, h), b, h).fmr
    assert lhs.allclose(rhs, rtol=1e-12, atol=1e-12)


def test_apply_action_errors():
    rng = np.random.default_rng(8)
    h = _basket(rng)
    z_next = roll(Portfolio(rand_fmr(rng)))
    with pytest.raises(ValueError):
        apply_action(z_next, [1.0], h)
    unpop = HedgeBasket((roll(Portfolio(rand_fmr(rng))).fmr,))
    with pytest.raises(UnpopulatedError):
        apply_action(z_next, [1.0], unpop)
    with pytest.raises(ValueError):
        HedgeBasket(())
