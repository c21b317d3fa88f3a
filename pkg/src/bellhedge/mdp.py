"""Small, fully enumerated hedging MDPs.

The market is a trinomial spot chain with ``K`` regimes.  The book is one
perpetual state-contingent claim, the hedges are further such claims, and a
portfolio is ``base + q . h`` for holdings ``q`` on a lattice.  Because the
claims never expire, rolling is the identity and the state space stays finite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .dynamics import CostConfig, cost_batch
from .market_sim import F, SCENARIO_SHOCK, ClaimTable, HistoricDataset, InstrumentSpec, MarketState, _fmr
from .rng import keyed_rng


class ClaimConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    payoff: Literal["call", "put", "linear", "constant", "zero", "future", "custom"] = "linear"
    strike: float = 100.0
    quantity: float = 1.0
    cashflows: Optional[list[float]] = None  # custom: one per regime


class MDPConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    n_market_states: int = Field(3, ge=2)
    spot0: float = Field(100.0, gt=0.0)
    spot_step: float = Field(0.05, gt=0.0)
    vol: float = Field(0.2, gt=0.0)
    dt: float = Field(1.0 / 52.0, gt=0.0)
    p_up: float = Field(0.3, ge=0.0, le=1.0)
    p_down: float = Field(0.3, ge=0.0, le=1.0)
    q_up: Optional[float] = None  # pricing measure; None means risk-neutral (Q = P)
    q_down: Optional[float] = None
    beta: float = 0.9
    beta_by_state: Optional[list[float]] = None
    beta_star: float = 0.9
    base: ClaimConfig = ClaimConfig(payoff="call", strike=100.0, quantity=-0.2)
    hedges: list[ClaimConfig] = [ClaimConfig(payoff="linear", strike=100.0, quantity=0.2)]
    lattice_points: int = Field(11, ge=1)
    lattice_bound: float = Field(2.5, ge=0.0)
    action_points: int = Field(11, ge=1)
    # the action pitch matches the lattice pitch, so every lattice point stays reachable
    cost: CostConfig = CostConfig(action_bound=2.5)
    calendar0: float = Field(1.0, gt=0.0, le=1.0)

    @model_validator(mode="after")
    def _check(self):
        if not (0.0 < self.beta_star < 1.0):
            raise ValueError(f"beta_star must lie in (0, 1), got {self.beta_star}")
        betas = self.beta_by_state if self.beta_by_state is not None else [self.beta]
        if self.beta_by_state is not None and len(betas) != self.n_market_states:
            raise ValueError("beta_by_state needs one entry per market state")
        if any(not (0.0 < b <= self.beta_star) for b in betas):
            raise ValueError(f"discount factors must lie in (0, beta_star={self.beta_star}]")
        for name, up, down in (("p", self.p_up, self.p_down), ("q", self.q_up, self.q_down)):
            if (up is None) != (down is None):
                raise ValueError(f"{name}_up and {name}_down must be given together")
            if up is not None and up + down > 1.0:
                raise ValueError(f"{name}_up + {name}_down must not exceed 1")
        if not self.hedges:
            raise ValueError("at least one hedge claim is required")
        for c in [self.base, *self.hedges]:
            if c.payoff == "custom" and (c.cashflows is None or len(c.cashflows) != self.n_market_states):
                raise ValueError("custom claims need one cashflow per market state")
        if len(self.cost.gamma_weights) != F:
            raise ValueError(f"cost.gamma_weights needs {F} entries")
        return self


def _chain(K, up, down):
    P = np.zeros((K, K))
    for k in range(K):
        P[k, min(k + 1, K - 1)] += up
        P[k, max(k - 1, 0)] += down
        P[k, k] += 1.0 - up - down
    return P


def claim_cashflows(c: ClaimConfig, spots):
    """Cashflow matrix ``r[k, j]`` of a claim over a ``k -> j`` period."""
    K = spots.shape[0]
    if c.payoff == "future":
        return c.quantity * (spots[None, :] - spots[:, None])
    if c.payoff == "call":
        r = np.maximum(spots - c.strike, 0.0)
    elif c.payoff == "put":
        r = np.maximum(c.strike - spots, 0.0)
    elif c.payoff == "linear":
        r = spots - c.strike
    elif c.payoff == "constant":
        r = np.ones(K)
    elif c.payoff == "zero":
        r = np.zeros(K)
    else:
        r = np.asarray(c.cashflows, dtype=float)
    return np.repeat((c.quantity * r)[:, None], K, axis=1)


def claim_book(c: ClaimConfig, r, beta, Q):
    """``B = (I - diag(beta) Q)^-1 E_Q[r]``; daily-settled claims carry no book value."""
    if c.payoff == "future":
        return np.zeros(r.shape[0])
    K = r.shape[0]
    return np.linalg.solve(np.eye(K) - beta[:, None] * Q, np.sum(Q * r, axis=1))


def claim_features(c: ClaimConfig, book, spots):
    """``[book, delta, gamma, vega, scenario]`` per regime from the chain's book values."""
    if c.payoff == "future":
        return np.column_stack([np.zeros_like(spots), np.full_like(spots, c.quantity), np.zeros_like(spots), np.zeros_like(spots), c.quantity * SCENARIO_SHOCK * spots])
    delta = np.gradient(book, spots)
    gamma = np.gradient(delta, spots)
    shocked = np.interp(spots * (1.0 + SCENARIO_SHOCK), spots, book)
    return np.column_stack([book, delta, gamma, np.zeros_like(book), shocked - book])


@dataclass
class HedgingMDP:
    """Enumerated MDP over (market regime k, lattice point p, action index a).

    Each regime has ``W`` successor slots: ``nxt[k, w]`` is the next regime and
    ``probs[k, w]`` its probability (padding slots carry probability 0).
    Reward tensors are indexed ``[k, p, a, w]``.  The successor lattice index
    does not depend on the regime because the claims never roll off;
    ``a_eff`` is the trade actually executed after snapping to the lattice.
    """

    market_states: list
    nxt: np.ndarray  # (K, W)
    probs: np.ndarray  # (K, W)
    beta: np.ndarray  # (K,)
    calendar: np.ndarray  # (K,) cumulative discount from the origin date
    lattice: np.ndarray  # (L, n) hedge holdings
    actions: np.ndarray  # (A, n)
    succ: np.ndarray  # (L, A)
    a_eff: np.ndarray  # (L, A, n)
    book: np.ndarray  # (K, L) B(z, m)
    features: np.ndarray  # (K, L, F)
    R: np.ndarray  # (K, L, A, W) mark-to-market rewards
    R_cash: np.ndarray  # (K, L, A, W) cash rewards, post-trade cashflow r(z + a.h, m)
    cost: np.ndarray  # (K, L, A)
    claims: dict = field(default_factory=dict)  # name -> {cashflows, book, features}
    terminal: Optional[np.ndarray] = None  # (K,) absorbing zero-reward regimes
    config: Optional[dict] = None

    def __post_init__(self):
        self.nxt = np.asarray(self.nxt, dtype=np.int64)
        if not np.allclose(self.probs.sum(axis=1), 1.0, atol=1e-12, rtol=0.0):
            raise ValueError("transition rows must sum to 1")
        if np.any(self.probs < 0.0):
            raise ValueError("transition probabilities must be non-negative")
        if self.nxt.min() < 0 or self.nxt.max() >= self.K:
            raise ValueError("successor regimes must index the market states")
        if not (np.all(np.isfinite(self.R)) and np.all(np.isfinite(self.R_cash))):
            raise ValueError("reward tensors must be finite on the action grid")
        if self.succ.min() < 0 or self.succ.max() >= self.n_lattice:
            raise ValueError("successor map must point into the lattice")

    @property
    def K(self):
        return self.nxt.shape[0]

    @property
    def P(self):
        """Dense ``K x K`` transition matrix."""
        P = np.zeros((self.K, self.K))
        np.add.at(P, (np.repeat(np.arange(self.K), self.nxt.shape[1]), self.nxt.ravel()), self.probs.ravel())
        return P

    @property
    def n_lattice(self):
        return self.lattice.shape[0]

    @property
    def n_actions(self):
        return self.actions.shape[0]

    @property
    def n_hedges(self):
        return self.lattice.shape[1]

    @property
    def beta_star(self):
        return float(self.beta.max())

    def zero_action(self):
        """Index of the no-trade action, or None if the grid lacks it."""
        hits = np.flatnonzero(np.all(self.actions == 0.0, axis=1))
        return int(hits[0]) if hits.size else None

    def lattice_index(self, q):
        d = np.linalg.norm(self.lattice - np.asarray(q, dtype=float)[None, :], axis=1)
        return int(np.argmin(d))

    def random_values(self, seed, low=-5.0, high=5.0, key="f0"):
        return keyed_rng(seed, "values", key).uniform(low, high, size=(self.K, self.n_lattice))

    def to_dict(self):
        arr = lambda a: np.asarray(a).tolist()  # noqa: E731
        return {
            "config": self.config,
            "market_states": [
                {"time_index": s.time_index, "spot": s.spot, "vol": s.vol, "rate": s.rate, "dt": s.dt, "discount": s.discount, "regime": s.regime}
                for s in self.market_states
            ],
            "nxt": arr(self.nxt),
            "probs": arr(self.probs),
            "beta": arr(self.beta),
            "calendar": arr(self.calendar),
            "lattice": arr(self.lattice),
            "actions": arr(self.actions),
            "succ": arr(self.succ),
            "a_eff": arr(self.a_eff),
            "book": arr(self.book),
            "features": arr(self.features),
            "R": arr(self.R),
            "R_cash": arr(self.R_cash),
            "cost": arr(self.cost),
            "claims": {k: {kk: arr(vv) for kk, vv in v.items()} for k, v in self.claims.items()},
            "terminal": None if self.terminal is None else arr(self.terminal),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        f = lambda k, dt=float: np.asarray(d[k], dtype=dt)  # noqa: E731
        states = [MarketState(**s) for s in d["market_states"]]
        claims = {k: {kk: np.asarray(vv, dtype=float) for kk, vv in v.items()} for k, v in d.get("claims", {}).items()}
        term = None if d.get("terminal") is None else np.asarray(d["terminal"], dtype=bool)
        return cls(states, f("nxt", np.int64), f("probs"), f("beta"), f("calendar"), f("lattice"), f("actions"), f("succ", np.int64),
                   f("a_eff"), f("book"), f("features"), f("R"), f("R_cash"), f("cost"), claims, term, d.get("config"))


def _grid(points, bound, n):
    g = np.linspace(-bound, bound, points) if points > 1 else np.zeros(1)
    mesh = np.meshgrid(*([g] * n), indexing="ij")
    return g, np.stack([m.ravel() for m in mesh], axis=1)


def assemble_mdp(states, P, beta, calendar, lattice_axis, lattice, actions, base, hedges, gamma, action_bound, config=None):
    """Build reward tensors from claim tables.

    ``base`` and each hedge are dicts with ``cashflows`` (K, K), ``book`` (K,)
    and ``features`` (K, F).
    """
    K = P.shape[0]
    n = lattice.shape[1]
    L, A = lattice.shape[0], actions.shape[0]
    pitch = lattice_axis[1] - lattice_axis[0] if lattice_axis.size > 1 else 1.0
    lo, hi = lattice_axis[0], lattice_axis[-1]

    target = np.clip(lattice[:, None, :] + actions[None, :, :], lo, hi)
    idx = np.rint((target - lo) / pitch).astype(np.int64) if lattice_axis.size > 1 else np.zeros_like(target, dtype=np.int64)
    m = lattice_axis.size
    succ = np.zeros((L, A), dtype=np.int64)
    for i in range(n):
        succ = succ * m + idx[:, :, i]
    a_eff = lattice[succ] - lattice[:, None, :]

    hc = np.stack([h["cashflows"] for h in hedges])  # (n, K, K)
    hb = np.stack([h["book"] for h in hedges])  # (n, K)
    hf = np.stack([h["features"] for h in hedges])  # (n, K, F)

    def dB(c, b):
        return beta[:, None] * b[None, :] - b[:, None] + c

    dB_base = dB(base["cashflows"], base["book"])  # (K, K)
    dB_h = np.stack([dB(hc[i], hb[i]) for i in range(n)])  # (n, K, K)
    post = lattice[:, None, :] + a_eff  # holdings after the trade (L, A, n)

    hf_k = np.transpose(hf, (1, 0, 2))  # (K, n, F)
    cost = cost_batch(gamma, a_eff[None, :, :, :], hf_k[:, None, None, :, :], action_bound)  # (K, L, A)
    if not np.all(np.isfinite(cost)):
        raise ValueError("action grid leaves the admissible box")

    R = dB_base[:, None, None, :] + np.einsum("lai,ikj->klaj", post, dB_h) - cost[..., None]
    R_cash = (
        base["cashflows"][:, None, None, :]
        + np.einsum("lai,ikj->klaj", post, hc)
        - np.einsum("lai,ik->kla", a_eff, hb)[..., None]
        - cost[..., None]
    )
    book = base["book"][:, None] + np.einsum("li,ik->kl", lattice, hb)
    features = base["features"][:, None, :] + np.einsum("li,ikf->klf", lattice, hf)
    claims = {"base": base, **{f"hedge_{i}": h for i, h in enumerate(hedges)}}
    nxt = np.tile(np.arange(K), (K, 1))
    return HedgingMDP(list(states), nxt, P.copy(), beta, calendar, lattice, actions, succ, a_eff, book, features, R, R_cash, cost, claims, None, config)


def build_mdp(cfg: MDPConfig) -> HedgingMDP:
    if not isinstance(cfg, MDPConfig):
        cfg = MDPConfig.model_validate(cfg)
    K = cfg.n_market_states
    spots = cfg.spot0 * np.exp(cfg.spot_step * (np.arange(K) - (K - 1) / 2.0))
    P = _chain(K, cfg.p_up, cfg.p_down)
    Q = P if cfg.q_up is None else _chain(K, cfg.q_up, cfg.q_down)
    beta = np.asarray(cfg.beta_by_state if cfg.beta_by_state is not None else [cfg.beta] * K, dtype=float)
    calendar = np.full(K, cfg.calendar0)

    def table(c):
        r = claim_cashflows(c, spots)
        b = claim_book(c, r, beta, Q)
        return {"cashflows": r, "book": b, "features": claim_features(c, b, spots)}

    base = table(cfg.base)
    hedges = [table(h) for h in cfg.hedges]
    states = [
        MarketState(0, float(spots[k]), cfg.vol, float(-np.log(beta[k]) / cfg.dt), cfg.dt, float(beta[k]), 0.0, (), k)
        for k in range(K)
    ]
    n = len(hedges)
    axis, lattice = _grid(cfg.lattice_points, cfg.lattice_bound, n)
    _, actions = _grid(cfg.action_points, cfg.cost.action_bound, n)
    return assemble_mdp(states, P, beta, calendar, axis, lattice, actions, base, hedges, np.asarray(cfg.cost.gamma_weights, dtype=float), cfg.cost.action_bound, cfg.model_dump(mode="json"))


def calendar_expand(mdp: HedgingMDP, horizon: int) -> HedgingMDP:
    """Time-layered copy of ``mdp`` with calendar discounts as part of the state.

    Regime ``(t, k)`` (index ``t*K + k``) moves to ``(t+1, j)`` and carries the
    cumulative discount ``c0 * beta^t``.  Layer ``horizon`` is absorbing with
    zero rewards, so fixed points on the expansion are the ``horizon``-step
    truncated values.  Requires a constant per-period discount, otherwise the
    calendar discount is path dependent and not a function of ``(t, k)``.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if mdp.terminal is not None:
        raise ValueError("cannot expand an already expanded MDP")
    if not np.all(mdp.beta == mdp.beta[0]):
        raise ValueError("calendar expansion needs a constant discount factor")
    K, H = mdp.K, horizon
    W = mdp.nxt.shape[1]
    layer = np.repeat(np.arange(H + 1), K)
    reg = np.tile(np.arange(K), H + 1)
    terminal = layer == H

    nxt = (layer[:, None] + 1) * K + mdp.nxt[reg]
    probs = mdp.probs[reg].copy()
    nxt[terminal] = np.arange(H * K, (H + 1) * K)[:, None]
    probs[terminal] = 0.0
    probs[terminal, 0] = 1.0

    R = mdp.R[reg].copy()
    R_cash = mdp.R_cash[reg].copy()
    cost = mdp.cost[reg].copy()
    R[terminal] = 0.0
    R_cash[terminal] = 0.0
    cost[terminal] = 0.0

    states = [
        MarketState(int(t), s.spot, s.vol, s.rate, s.dt, s.discount, s.calendar_fraction, s.returns, s.regime)
        for t in range(H + 1) for s in mdp.market_states
    ]
    calendar = mdp.calendar[reg] * float(mdp.beta[0]) ** layer
    return HedgingMDP(
        states, nxt, probs, mdp.beta[reg].copy(), calendar, mdp.lattice, mdp.actions, mdp.succ, mdp.a_eff,
        mdp.book[reg], mdp.features[reg], R, R_cash, cost, dict(mdp.claims), terminal,
        {"expanded_from": mdp.config, "horizon": H},
    )


# --------------------------------------------------------------------------- datasets


def _claim_table(name, c):
    return ClaimTable(name, tuple(tuple(float(v) for v in row) for row in c["cashflows"]), tuple(float(v) for v in c["book"]), tuple(tuple(float(v) for v in f) for f in c["features"]))


def mdp_instruments(mdp: HedgingMDP):
    """Book instruments (base claim, then one per hedge) and the hedge menu."""
    base = InstrumentSpec("perpetual_cashflow_claim", steps_to_expiry=None, claim=_claim_table("base", mdp.claims["base"]))
    hedges = [InstrumentSpec("perpetual_cashflow_claim", steps_to_expiry=None, claim=_claim_table(f"hedge_{i}", mdp.claims[f"hedge_{i}"])) for i in range(mdp.n_hedges)]
    return [base, *hedges], hedges


def _records(mdp, pairs, group, weight, meta):
    book, hedges = mdp_instruments(mdp)
    n = len(pairs)
    out = {k: [] for k in ("bn", "bx", "bc", "hn", "hx", "hc")}
    now, nxt = [], []
    for t, (k, j) in enumerate(pairs):
        m = replace(mdp.market_states[k], time_index=t)
        m1 = replace(mdp.market_states[j], time_index=t + 1)
        now.append(m)
        nxt.append(m1)
        a, b, c = _fmr(book, m, m1)
        out["bn"].append(a), out["bx"].append(b), out["bc"].append(c)
        a, b, c = _fmr(hedges, m, m1)
        out["hn"].append(a), out["hx"].append(b), out["hc"].append(c)
    hist = np.zeros((n, len(book)))
    hist[:, 0] = 1.0
    return HistoricDataset(
        now, nxt, np.asarray(group), np.asarray(weight, dtype=float),
        [list(book) for _ in range(n)], hist, np.array(out["bn"]), np.array(out["bx"]), np.array(out["bc"]),
        [list(hedges) for _ in range(n)], np.array(out["hn"]), np.array(out["hx"]), np.array(out["hc"]), meta,
    )


def mdp_dataset(mdp: HedgingMDP, mode: str = "enumerate", n_steps: int = 100, seed: int = 0, start: int = 0) -> HistoricDataset:
    """FMR dataset generated from the MDP's market chain.

    ``enumerate`` lists every transition ``k -> j`` with ``P[k, j] > 0`` once,
    grouped by origin and weighted by its probability, so conditional
    expectations over a group are exact.  ``path`` samples one chain path.
    """
    meta = {"source": f"mdp_{mode}", "seed": int(seed), "config": mdp.config}
    if mode == "enumerate":
        pairs, group, weight = [], [], []
        for k in range(mdp.K):
            for w in range(mdp.nxt.shape[1]):
                if mdp.probs[k, w] > 0.0:
                    pairs.append((k, int(mdp.nxt[k, w])))
                    group.append(k)
                    weight.append(mdp.probs[k, w])
        return _records(mdp, pairs, group, weight, meta)
    if mode == "path":
        path = sample_chain(mdp, n_steps, seed, start)
        pairs = list(zip(path[:-1], path[1:]))
        return _records(mdp, pairs, np.arange(n_steps), np.ones(n_steps), meta)
    raise ValueError(f"unknown dataset mode {mode!r}")


def sample_chain(mdp: HedgingMDP, n_steps: int, seed: int, start: int = 0, key="chain"):
    """Regime path of length ``n_steps + 1``; step ``t`` is keyed by ``(seed, key, t)``."""
    cdf = np.cumsum(mdp.P, axis=1)
    path = [int(start)]
    for t in range(n_steps):
        u = keyed_rng(seed, key, t).random()
        k = path[-1]
        path.append(int(min(np.searchsorted(cdf[k], u, side="right"), mdp.K - 1)))
    return path
