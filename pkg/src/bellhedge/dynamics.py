"""Rewards and transaction costs.

``dB = beta * B(x', m') - B(x, m) + r(x, m)`` is the discounted one-period
P&L of holding ``x``.  The mark-to-market reward adds the hedge legs' P&L and
subtracts the cost of trading them; the cashflow-only reward counts just the
cash that actually changes hands today.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .instruments import HedgeBasket, InstrumentFMR, Portfolio


@dataclass(frozen=True)
class CostSpec:
    gamma_weights: np.ndarray
    action_bound: float = 5.0

    def __post_init__(self):
        g = np.asarray(self.gamma_weights, dtype=float).ravel()
        if np.any(g < 0.0) or not np.all(np.isfinite(g)):
            raise ValueError("cost weights must be finite and non-negative")
        if not self.action_bound > 0.0:
            raise ValueError("action_bound must be positive")
        object.__setattr__(self, "gamma_weights", g)

    @classmethod
    def zero(cls, n_features, action_bound=5.0):
        return cls(np.zeros(n_features), action_bound)

    def to_dict(self):
        return {"gamma_weights": self.gamma_weights.tolist(), "action_bound": self.action_bound}


class CostConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    gamma_weights: tuple[float, ...] = (0.0, 0.0, 0.0, 0.0, 0.0)
    action_bound: float = Field(5.0, gt=0.0)

    @field_validator("gamma_weights")
    @classmethod
    def _nonneg(cls, v):
        if any(g < 0.0 for g in v):
            raise ValueError("cost weights must be non-negative")
        return v

    def spec(self):
        return CostSpec(np.asarray(self.gamma_weights, dtype=float), self.action_bound)


def _fmr(x):
    return x.fmr if isinstance(x, Portfolio) else x


def pnl_dB(x, beta: float) -> float:
    x = _fmr(x)
    x.require_populated()
    return beta * x.book_next - x.book_now + x.cashflow


def cost_batch(gamma, action, hedge_features, bound):
    """Vectorised cost over leading axes: ``action`` (..., n), features (..., n, F)."""
    a = np.asarray(action, dtype=float)
    net = np.einsum("...i,...if->...f", a, np.asarray(hedge_features, dtype=float))
    c = np.sum(np.abs(net * gamma), axis=-1)
    return np.where(np.any(np.abs(a) > bound, axis=-1), np.inf, c)


def cost(spec: CostSpec, action, hedge_features) -> float:
    """``sum_F |gamma_F * sum_i a_i f_iF|``; ``inf`` outside the admissible box."""
    a = np.asarray(action, dtype=float).ravel()
    hf = np.asarray(hedge_features, dtype=float).reshape(a.shape[0], -1)
    if hf.shape[1] != spec.gamma_weights.shape[0]:
        raise ValueError(f"hedge features have {hf.shape[1]} columns, cost weights {spec.gamma_weights.shape[0]}")
    return float(cost_batch(spec.gamma_weights, a, hf, spec.action_bound))


def _basket_action(action, basket):
    a = np.asarray(action, dtype=float).ravel()
    if a.shape[0] != len(basket):
        raise ValueError(f"action has length {a.shape[0]} but the basket has {len(basket)} legs")
    return a


def reward_R(action, z, basket: HedgeBasket, beta: float, spec: CostSpec) -> float:
    """Mark-to-market reward: portfolio and hedge P&L minus trading cost."""
    a = _basket_action(action, basket)
    c = cost(spec, a, basket.features_now())
    if np.isinf(c):
        return -np.inf
    hedge = sum(ai * pnl_dB(leg, beta) for ai, leg in zip(a, basket.legs))
    return pnl_dB(z, beta) + hedge - c


def reward_cashflow(action, z, basket: HedgeBasket, spec: CostSpec, include_hedge_cashflow: bool = False) -> float:
    """Cash-only reward ``r(z,m) - a . B(h,m) - c(a)``.

    With ``include_hedge_cashflow`` the portfolio cashflow is taken after the
    trade, ``r(z + a.h, m)``; that is the variant under which the cash value
    function equals the mark-to-market one plus book value.
    """
    a = _basket_action(action, basket)
    z = _fmr(z)
    z.require_populated()
    c = cost(spec, a, basket.features_now())
    if np.isinf(c):
        return -np.inf
    r = z.cashflow
    if include_hedge_cashflow:
        for ai, leg in zip(a, basket.legs):
            leg.require_populated()
            r += ai * leg.cashflow
    return r - float(a @ basket.book_now()) - c
