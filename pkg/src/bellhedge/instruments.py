"""Finite Markov representation algebra.

A portfolio is stored as the aggregate of its instruments' linear features,
so weighting, rolling and adding hedge trades are all plain vector arithmetic.
Rolling shifts tomorrow's fields into today's and leaves tomorrow's fields
unpopulated until the next record is joined in.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


class UnpopulatedError(ValueError):
    """Forward-looking fields were read before the next record was joined."""


@dataclass(frozen=True)
class InstrumentFMR:
    features_now: np.ndarray
    features_next: Optional[np.ndarray]
    book_now: float
    book_next: Optional[float]
    cashflow: Optional[float]

    def __post_init__(self):
        now = np.asarray(self.features_now, dtype=float).copy()
        object.__setattr__(self, "features_now", now)
        flags = (self.features_next is None, self.book_next is None, self.cashflow is None)
        if any(flags) and not all(flags):
            raise ValueError("next-step fields must be all populated or all unpopulated")
        if self.features_next is not None:
            nxt = np.asarray(self.features_next, dtype=float).copy()
            if nxt.shape != now.shape:
                raise ValueError(f"feature vectors differ in length: {now.shape} vs {nxt.shape}")
            object.__setattr__(self, "features_next", nxt)
            object.__setattr__(self, "book_next", float(self.book_next))
            object.__setattr__(self, "cashflow", float(self.cashflow))
        object.__setattr__(self, "book_now", float(self.book_now))

    @property
    def populated(self):
        return self.features_next is not None

    @property
    def n_features(self):
        return self.features_now.shape[0]

    def require_populated(self):
        if not self.populated:
            raise UnpopulatedError("next-step fields are unpopulated; join the next record first")

    def populate(self, features_next, book_next, cashflow):
        """Join tomorrow's forward-looking fields onto a rolled FMR."""
        if self.populated:
            raise ValueError("next-step fields are already populated")
        return InstrumentFMR(self.features_now, features_next, self.book_now, book_next, cashflow)

    @classmethod
    def zeros(cls, n_features):
        z = np.zeros(n_features)
        return cls(z, z, 0.0, 0.0, 0.0)

    @classmethod
    def from_arrays(cls, f_now, f_next, cashflow):
        """FMR from dataset rows whose first feature is the book value."""
        return cls(f_now, f_next, f_now[0], f_next[0], cashflow)

    def scaled(self, w):
        if not self.populated:
            return InstrumentFMR(w * self.features_now, None, w * self.book_now, None, None)
        return InstrumentFMR(w * self.features_now, w * self.features_next, w * self.book_now, w * self.book_next, w * self.cashflow)

    def __add__(self, other):
        if self.n_features != other.n_features:
            raise ValueError("feature vectors differ in length")
        if self.populated != other.populated:
            raise UnpopulatedError("cannot add populated and unpopulated FMRs")
        if not self.populated:
            return InstrumentFMR(self.features_now + other.features_now, None, self.book_now + other.book_now, None, None)
        return InstrumentFMR(
            self.features_now + other.features_now,
            self.features_next + other.features_next,
            self.book_now + other.book_now,
            self.book_next + other.book_next,
            self.cashflow + other.cashflow,
        )

    def allclose(self, other, rtol=1e-12, atol=1e-12):
        if self.populated != other.populated:
            return False
        ok = np.allclose(self.features_now, other.features_now, rtol, atol) and np.isclose(self.book_now, other.book_now, rtol, atol)
        if self.populated:
            ok = ok and np.allclose(self.features_next, other.features_next, rtol, atol)
            ok = ok and np.isclose(self.book_next, other.book_next, rtol, atol) and np.isclose(self.cashflow, other.cashflow, rtol, atol)
        return bool(ok)


@dataclass(frozen=True)
class Portfolio:
    """The state component ``z``: one aggregated FMR."""

    fmr: InstrumentFMR

    @classmethod
    def empty(cls, n_features):
        return cls(InstrumentFMR.zeros(n_features))

    def __getattr__(self, name):
        # expose the FMR fields directly (z.book_now etc.)
        if name in ("features_now", "features_next", "book_now", "book_next", "cashflow", "populated", "n_features", "require_populated"):
            return getattr(self.fmr, name)
        raise AttributeError(name)


@dataclass(frozen=True)
class HedgeBasket:
    legs: tuple

    def __post_init__(self):
        legs = tuple(self.legs)
        if len(legs) < 1:
            raise ValueError("a hedge basket needs at least one leg")
        if len({leg.n_features for leg in legs}) != 1:
            raise ValueError("all hedge legs must share the feature dimension")
        object.__setattr__(self, "legs", legs)

    def __len__(self):
        return len(self.legs)

    def features_now(self):
        return np.array([leg.features_now for leg in self.legs])

    def book_now(self):
        return np.array([leg.book_now for leg in self.legs])


def _check_len(weights, items, what):
    w = np.asarray(weights, dtype=float).ravel()
    if w.shape[0] != len(items):
        raise ValueError(f"{what} has length {w.shape[0]} but there are {len(items)} instruments")
    return w


def combine(weights, instruments: Sequence[InstrumentFMR]) -> Portfolio:
    """``w . x`` field by field."""
    if len(instruments) == 0:
        raise ValueError("combine needs at least one instrument")
    w = _check_len(weights, instruments, "weights")
    acc = instruments[0].scaled(w[0])
    for wi, x in zip(w[1:], instruments[1:]):
        acc = acc + x.scaled(wi)
    return Portfolio(acc)


def roll(z) -> Portfolio:
    """Shift tomorrow's fields into today's; tomorrow becomes unpopulated."""
    fmr = z.fmr if isinstance(z, Portfolio) else z
    if not fmr.populated:
        raise UnpopulatedError("cannot roll a portfolio whose next-step fields are unpopulated")
    return Portfolio(InstrumentFMR(fmr.features_next, None, fmr.book_next, None, None))


def apply_action(z_next: Portfolio, action, basket: HedgeBasket) -> Portfolio:
    """``z' + a . h'``: add the rolled hedge legs to tomorrow's portfolio.

    ``z_next`` is tomorrow's portfolio (today's fields hold t+1 values).  The
    hedges' t+2 data is unknown, so the result is always unpopulated.
    """
    a = _check_len(action, basket.legs, "action")
    feats = z_next.fmr.features_now.copy()
    book = z_next.fmr.book_now
    for ai, leg in zip(a, basket.legs):
        leg.require_populated()
        if leg.n_features != feats.shape[0]:
            raise ValueError("hedge leg and portfolio differ in feature length")
        feats = feats + ai * leg.features_next
        book = book + ai * leg.book_next
    return Portfolio(InstrumentFMR(feats, None, book, None, None))
