"""Synthetic desk history: market paths, instruments, FMR features, cashflows.

The market is a single-asset GBM with optional mean-reverting log-vol and
short-rate factors.  Instruments are marked with closed-form Black-Scholes
prices, so every feature a desk risk system would report has an exact oracle.

Cashflow convention: a settlement paid at the end of period ``[t, t+1)`` is
recorded in ``r_t`` at its value at ``t`` (multiplied by ``beta(m_t)``).
Daily-settled futures are the exception; their variation margin is the raw
futures price move, which is already a martingale increment.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field, replace
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import ndtr

from .rng import keyed_normal, keyed_rng

FEATURE_NAMES = ("book", "delta", "gamma", "vega", "scenario_down")
F = len(FEATURE_NAMES)
SCENARIO_SHOCK = -0.10
KINDS = ("perpetual_cashflow_claim", "vanilla_option", "forward", "daily_settled_future")


# --------------------------------------------------------------------------- types


@dataclass(frozen=True)
class MarketState:
    time_index: int
    spot: float
    vol: float
    rate: float
    dt: float
    discount: float
    calendar_fraction: float = 0.0
    returns: tuple = ()
    regime: int = 0

    def __post_init__(self):
        if self.time_index < 0:
            raise ValueError("time_index must be >= 0")
        if not (0.0 < self.discount <= 1.0):
            raise ValueError(f"discount must lie in (0, 1], got {self.discount}")
        vals = (self.spot, self.vol, self.rate, self.dt, self.calendar_fraction, *self.returns)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("market state features must be finite")

    @property
    def features(self):
        return np.array([self.spot, *self.returns, self.vol, self.calendar_fraction], dtype=float)


@dataclass(frozen=True)
class MarketPath:
    states: tuple
    transition_seed: int = 0

    def __post_init__(self):
        if len(self.states) < 2:
            raise ValueError("a market path needs at least two states")
        for a, b in zip(self.states, self.states[1:]):
            if b.time_index != a.time_index + 1:
                raise ValueError("consecutive path states must differ by one time step")

    def __len__(self):
        return len(self.states)


@dataclass(frozen=True)
class ClaimTable:
    """Per-regime book values and features of a perpetual claim.

    ``cashflows[k][j]`` is paid over a period that starts in regime ``k`` and
    ends in regime ``j``; most claims pay the same amount for every ``j``.
    """

    name: str
    cashflows: tuple
    book: tuple
    features: tuple  # one F-tuple per regime

    def to_dict(self):
        return {"name": self.name, "cashflows": [list(r) for r in self.cashflows], "book": list(self.book), "features": [list(f) for f in self.features]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], tuple(tuple(r) for r in d["cashflows"]), tuple(d["book"]), tuple(tuple(f) for f in d["features"]))


@dataclass(frozen=True)
class InstrumentSpec:
    kind: str
    strike: float = 0.0
    steps_to_expiry: Optional[int] = 0  # None: perpetual
    direction: int = 1
    is_call: bool = True
    claim: Optional[ClaimTable] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown instrument kind {self.kind!r}")
        if self.direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")
        if self.kind == "perpetual_cashflow_claim":
            if self.claim is None:
                raise ValueError("a perpetual claim needs its claim table")
        elif self.steps_to_expiry is None or self.steps_to_expiry < 0:
            raise ValueError("dated instruments need steps_to_expiry >= 0")
        if self.kind == "vanilla_option" and not self.strike > 0.0:
            raise ValueError("option strike must be positive")

    @property
    def expired(self):
        return self.steps_to_expiry is not None and self.steps_to_expiry == 0

    def rolled(self):
        if self.steps_to_expiry is None:
            return self
        return replace(self, steps_to_expiry=max(self.steps_to_expiry - 1, 0))


# --------------------------------------------------------------------------- pricing


def _bs(spot, strike, tau, rate, vol, is_call):
    """Black-Scholes value, delta, gamma, vega (no dividends)."""
    sq = vol * math.sqrt(tau)
    d1 = (math.log(spot / strike) + (rate + 0.5 * vol * vol) * tau) / sq
    d2 = d1 - sq
    df = math.exp(-rate * tau)
    pdf = math.exp(-0.5 * d1 * d1) / math.sqrt(2.0 * math.pi)
    if is_call:
        value = spot * ndtr(d1) - strike * df * ndtr(d2)
        delta = ndtr(d1)
    else:
        value = strike * df * ndtr(-d2) - spot * ndtr(-d1)
        delta = ndtr(d1) - 1.0
    gamma = pdf / (spot * sq)
    vega = spot * pdf * math.sqrt(tau)
    return float(value), float(delta), gamma, vega


def _tau(spec, m):
    return spec.steps_to_expiry * m.dt


def futures_price(spec: InstrumentSpec, m: MarketState) -> float:
    return m.spot * math.exp(m.rate * _tau(spec, m))


def oracle_book_value(spec: InstrumentSpec, m: MarketState) -> float:
    """Closed-form mark-to-market of one unit of ``spec`` in state ``m``."""
    if spec.kind == "perpetual_cashflow_claim":
        return spec.direction * spec.claim.book[m.regime]
    if spec.expired:
        return 0.0
    tau = _tau(spec, m)
    if spec.kind == "vanilla_option":
        return spec.direction * _bs(m.spot, spec.strike, tau, m.rate, m.vol, spec.is_call)[0]
    if spec.kind == "forward":
        return spec.direction * (m.spot - spec.strike * math.exp(-m.rate * tau))
    return 0.0  # daily settlement resets the mark to zero


def oracle_features(spec: InstrumentSpec, m: MarketState) -> np.ndarray:
    """FMR vector ``[book, delta, gamma, vega, scenario_down]``."""
    if spec.kind == "perpetual_cashflow_claim":
        return spec.direction * np.asarray(spec.claim.features[m.regime], dtype=float)
    if spec.expired:
        return np.zeros(F)
    tau = _tau(spec, m)
    if spec.kind == "vanilla_option":
        value, delta, gamma, vega = _bs(m.spot, spec.strike, tau, m.rate, m.vol, spec.is_call)
        shocked = _bs(m.spot * (1.0 + SCENARIO_SHOCK), spec.strike, tau, m.rate, m.vol, spec.is_call)[0]
        out = [value, delta, gamma, vega, shocked - value]
    elif spec.kind == "forward":
        out = [oracle_book_value(replace(spec, direction=1), m), 1.0, 0.0, 0.0, SCENARIO_SHOCK * m.spot]
    else:
        # futures greeks are quoted against the futures price itself
        out = [0.0, 1.0, 0.0, 0.0, SCENARIO_SHOCK * futures_price(spec, m)]
    return spec.direction * np.asarray(out, dtype=float)


def oracle_cashflow(spec: InstrumentSpec, m: MarketState, m_next: MarketState) -> float:
    """Cashflow of one unit of ``spec`` over ``[t, t+1)``, valued at ``t``."""
    if spec.kind == "perpetual_cashflow_claim":
        return spec.direction * spec.claim.cashflows[m.regime][m_next.regime]
    if spec.expired:
        return 0.0
    if spec.kind == "daily_settled_future":
        return spec.direction * (futures_price(spec.rolled(), m_next) - futures_price(spec, m))
    if spec.steps_to_expiry != 1:
        return 0.0
    if spec.kind == "vanilla_option":
        payoff = max(m_next.spot - spec.strike, 0.0) if spec.is_call else max(spec.strike - m_next.spot, 0.0)
    else:
        payoff = m_next.spot - spec.strike
    return spec.direction * m.discount * payoff


def discount_factor(m: MarketState) -> float:
    """One-period discount factor from ``t+1`` back to ``t``."""
    return m.discount


# --------------------------------------------------------------------------- config


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class StochVolConfig(_Strict):
    kappa: float = Field(2.0, ge=0.0)
    theta: float = Field(0.2, gt=0.0)
    xi: float = Field(0.5, ge=0.0)


class RateModelConfig(_Strict):
    kappa: float = Field(1.0, ge=0.0)
    mean: float = 0.6
    xi: float = Field(0.2, ge=0.0)


class InstrumentConfig(_Strict):
    kind: Literal["vanilla_option", "forward", "daily_settled_future"]
    moneyness: float = Field(1.0, gt=0.0)  # strike / spot at inception
    steps_to_expiry: int = Field(20, ge=1)
    direction: Literal[1, -1] = 1
    is_call: bool = True
    weight: float = 1.0


class RandomBookConfig(_Strict):
    size: int = Field(3, ge=1)
    min_steps: int = Field(4, ge=1)
    max_steps: int = Field(26, ge=1)
    moneyness_sd: float = Field(0.1, ge=0.0)


class HedgeMenuConfig(_Strict):
    instruments: tuple = ("future", "call", "put")
    future_steps: int = Field(13, ge=1)
    option_steps: int = Field(8, ge=1)
    call_offset: float = Field(0.05, ge=0.0)
    put_offset: float = Field(0.05, ge=0.0, lt=1.0)

    @model_validator(mode="after")
    def _check(self):
        bad = [h for h in self.instruments if h not in ("future", "call", "put")]
        if bad or not self.instruments:
            raise ValueError(f"hedge menu entries must be among future/call/put, got {list(self.instruments)}")
        return self


class GeneratorConfig(_Strict):
    n_steps: int = Field(250, description="number of transitions N")
    dt: float = Field(1.0 / 52.0, gt=0.0)
    spot0: float = Field(100.0, gt=0.0)
    vol0: float = Field(0.2)
    mu: float = 0.65
    rate: float = 0.6
    risk_neutral: bool = False
    stochastic_vol: Optional[StochVolConfig] = None
    rate_model: Optional[RateModelConfig] = None
    beta_star: float = 0.99
    returns_window: int = Field(5, ge=0)
    book: tuple[InstrumentConfig, ...] = (InstrumentConfig(kind="vanilla_option", direction=-1),)
    random_book: Optional[RandomBookConfig] = None
    replace_expired: bool = True
    hedges: HedgeMenuConfig = HedgeMenuConfig()

    @model_validator(mode="after")
    def _check(self):
        if self.n_steps < 2:
            raise ValueError(f"n_steps must be >= 2, got {self.n_steps}")
        if not self.vol0 > 0.0:
            raise ValueError(f"vol0 must be positive, got {self.vol0}")
        if not (0.0 < self.beta_star < 1.0):
            raise ValueError(f"beta_star must lie in (0, 1), got {self.beta_star}")
        if self.risk_neutral and (self.stochastic_vol is not None or self.rate_model is not None):
            raise ValueError("risk_neutral mode requires constant vol and rate")
        if not self.book and self.random_book is None:
            raise ValueError("the book must hold at least one instrument")
        return self

    def min_rate(self):
        return -math.log(self.beta_star) / self.dt

    def config_hash(self):
        blob = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


# --------------------------------------------------------------------------- dataset


@dataclass
class HistoricDataset:
    """FMR records: one row per observed transition ``m -> m'``.

    ``group`` ties records that share the same origin state; ``weight`` is the
    conditional probability of the transition within its group (1 for a path).
    """

    states_now: list
    states_next: list
    group: np.ndarray
    weight: np.ndarray
    book_specs: list  # [record][slot] InstrumentSpec
    book_weights: np.ndarray  # (R, nb) historic portfolio weights
    book_now: np.ndarray  # (R, nb, F)
    book_next: np.ndarray
    book_cash: np.ndarray  # (R, nb)
    hedge_specs: list
    hedge_now: np.ndarray  # (R, nh, F)
    hedge_next: np.ndarray
    hedge_cash: np.ndarray  # (R, nh)
    meta: dict = field(default_factory=dict)

    @property
    def n_records(self):
        return len(self.states_now)

    @property
    def n_book(self):
        return self.book_now.shape[1]

    @property
    def n_hedges(self):
        return self.hedge_now.shape[1]

    def market_features(self, which="now"):
        states = self.states_now if which == "now" else self.states_next
        return np.array([s.features for s in states])

    def discounts(self):
        return np.array([s.discount for s in self.states_now])

    def market_path(self):
        """Path view of a path-shaped dataset (consecutive records)."""
        states = list(self.states_now) + [self.states_next[-1]]
        return MarketPath(tuple(states), int(self.meta.get("seed", 0)))

    def is_path(self):
        return all(b == a for a, b in zip(self.states_next, self.states_now[1:]))

    def groups(self):
        """Record indices per group, in first-appearance order."""
        order = {}
        for i, g in enumerate(self.group.tolist()):
            order.setdefault(g, []).append(i)
        return [np.array(v) for v in order.values()]


def _menu(cfg: GeneratorConfig, m: MarketState):
    out = []
    h = cfg.hedges
    for name in h.instruments:
        if name == "future":
            out.append(InstrumentSpec("daily_settled_future", steps_to_expiry=h.future_steps))
        elif name == "call":
            out.append(InstrumentSpec("vanilla_option", m.spot * (1 + h.call_offset), h.option_steps, 1, True))
        else:
            out.append(InstrumentSpec("vanilla_option", m.spot * (1 - h.put_offset), h.option_steps, 1, False))
    return out


def _book_contract(ic: InstrumentConfig, m: MarketState):
    if ic.kind == "vanilla_option":
        return InstrumentSpec("vanilla_option", m.spot * ic.moneyness, ic.steps_to_expiry, ic.direction, ic.is_call)
    if ic.kind == "forward":
        fair = m.spot * math.exp(m.rate * ic.steps_to_expiry * m.dt)
        return InstrumentSpec("forward", fair * ic.moneyness, ic.steps_to_expiry, ic.direction)
    return InstrumentSpec("daily_settled_future", steps_to_expiry=ic.steps_to_expiry, direction=ic.direction)


def _random_contract(cfg: GeneratorConfig, m: MarketState, seed, t, slot):
    rb = cfg.random_book or RandomBookConfig()
    rng = keyed_rng(seed, "book", t, slot)
    steps = int(rng.integers(rb.min_steps, max(rb.max_steps, rb.min_steps) + 1))
    money = float(math.exp(rb.moneyness_sd * rng.standard_normal()))
    direction = 1 if rng.random() < 0.5 else -1
    is_call = bool(rng.random() < 0.5)
    return InstrumentSpec("vanilla_option", m.spot * money, steps, direction, is_call)


def simulate_market(cfg: GeneratorConfig, seed: int) -> MarketPath:
    """Market states ``m_0 .. m_N`` keyed by ``(seed, factor, step)``."""
    dt = cfg.dt
    mu = cfg.rate if cfg.risk_neutral else cfg.mu
    r_min = cfg.min_rate()
    spot, vol, rate = cfg.spot0, cfg.vol0, max(cfg.rate, r_min)
    rets = [0.0] * cfg.returns_window
    states = []
    for t in range(cfg.n_steps + 1):
        disc = min(math.exp(-rate * dt), cfg.beta_star)
        states.append(MarketState(t, spot, vol, rate, dt, disc, (t * dt) % 1.0, tuple(rets[-cfg.returns_window:]) if cfg.returns_window else ()))
        if t == cfg.n_steps:
            break
        z = float(keyed_normal(seed, "spot", t))
        drift = (rate if cfg.risk_neutral else mu) - 0.5 * vol * vol
        ret = drift * dt + vol * math.sqrt(dt) * z
        spot = spot * math.exp(ret)
        if cfg.returns_window:
            rets = (rets + [ret])[-cfg.returns_window:]
        if cfg.stochastic_vol is not None:
            sv = cfg.stochastic_vol
            lv = math.log(vol)
            lv += sv.kappa * (math.log(sv.theta) - lv) * dt + sv.xi * math.sqrt(dt) * float(keyed_normal(seed, "vol", t))
            vol = math.exp(lv)
        if cfg.rate_model is not None:
            rm = cfg.rate_model
            rate += rm.kappa * (rm.mean - rate) * dt + rm.xi * math.sqrt(dt) * float(keyed_normal(seed, "rate", t))
            rate = max(rate, r_min)
    return MarketPath(tuple(states), seed)


def _fmr(specs, m, m_next):
    now = np.array([oracle_features(s, m) for s in specs]).reshape(len(specs), F)
    nxt = np.array([oracle_features(s.rolled(), m_next) for s in specs]).reshape(len(specs), F)
    cash = np.array([oracle_cashflow(s, m, m_next) for s in specs], dtype=float)
    return now, nxt, cash


def generate_history(config: GeneratorConfig, seed: int) -> HistoricDataset:
    """Synthetic FMR history of ``config.n_steps`` transitions; pure in ``(config, seed)``."""
    if not isinstance(config, GeneratorConfig):
        config = GeneratorConfig.model_validate(config)
    path = simulate_market(config, seed).states
    if config.random_book is not None:
        book = [_random_contract(config, path[0], seed, 0, i) for i in range(config.random_book.size)]
        weights = [1.0] * len(book)
    else:
        book = [_book_contract(ic, path[0]) for ic in config.book]
        weights = [ic.weight for ic in config.book]

    rec = {k: [] for k in ("book_specs", "book_now", "book_next", "book_cash", "hedge_specs", "hedge_now", "hedge_next", "hedge_cash")}
    for t in range(config.n_steps):
        m, m1 = path[t], path[t + 1]
        menu = _menu(config, m)
        for role, specs in (("book", book), ("hedge", menu)):
            now, nxt, cash = _fmr(specs, m, m1)
            rec[f"{role}_specs"].append(list(specs))
            rec[f"{role}_now"].append(now)
            rec[f"{role}_next"].append(nxt)
            rec[f"{role}_cash"].append(cash)
        nxt_book = []
        for slot, spec in enumerate(book):
            spec = spec.rolled()
            if spec.expired and config.replace_expired:
                if config.random_book is not None:
                    spec = _random_contract(config, m1, seed, t + 1, slot)
                else:
                    spec = _book_contract(config.book[slot], m1)
            nxt_book.append(spec)
        book = nxt_book

    n = config.n_steps
    return HistoricDataset(
        states_now=list(path[:-1]),
        states_next=list(path[1:]),
        group=np.arange(n),
        weight=np.ones(n),
        book_specs=rec["book_specs"],
        book_weights=np.tile(np.asarray(weights, dtype=float), (n, 1)),
        book_now=np.array(rec["book_now"]),
        book_next=np.array(rec["book_next"]),
        book_cash=np.array(rec["book_cash"]),
        hedge_specs=rec["hedge_specs"],
        hedge_now=np.array(rec["hedge_now"]),
        hedge_next=np.array(rec["hedge_next"]),
        hedge_cash=np.array(rec["hedge_cash"]),
        meta={"source": "gbm", "seed": int(seed), "config": config.model_dump(mode="json"), "config_hash": config.config_hash()},
    )


# --------------------------------------------------------------------------- persistence

_STATE_FIELDS = ("time_index", "regime", "spot", "vol", "rate", "dt", "discount", "calendar_fraction")
DATASET_FILES = ("states.csv", "instruments.csv", "features_t.csv", "features_t1.csv", "cashflows.csv")


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    return repr(float(x))


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def atomic_write_text(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _state_row(s):
    return [getattr(s, f) for f in _STATE_FIELDS] + list(s.returns)


def save_dataset(ds: HistoricDataset, out_dir):
    w = len(ds.states_now[0].returns)
    ret_cols = [f"ret_{i}" for i in range(w)]
    cols = list(_STATE_FIELDS) + ret_cols
    header = ["record", "group", "weight"] + [f"now_{c}" for c in cols] + [f"next_{c}" for c in cols]
    rows = [[i, int(ds.group[i]), float(ds.weight[i])] + _state_row(a) + _state_row(b) for i, (a, b) in enumerate(zip(ds.states_now, ds.states_next))]
    files = {"states.csv": _csv_text(header, rows)}

    claims = {}
    inst_rows, ft_rows, ft1_rows, cf_rows = [], [], [], []
    for i in range(ds.n_records):
        for role, specs, now, nxt, cash in (
            ("book", ds.book_specs[i], ds.book_now[i], ds.book_next[i], ds.book_cash[i]),
            ("hedge", ds.hedge_specs[i], ds.hedge_now[i], ds.hedge_next[i], ds.hedge_cash[i]),
        ):
            for slot, spec in enumerate(specs):
                claim = ""
                if spec.claim is not None:
                    claims[spec.claim.name] = spec.claim.to_dict()
                    claim = spec.claim.name
                hw = ds.book_weights[i, slot] if role == "book" else 0.0
                inst_rows.append([i, role, slot, spec.kind, spec.strike, spec.steps_to_expiry, spec.direction, spec.is_call, claim, hw])
                ft_rows.append([i, role, slot, *now[slot]])
                ft1_rows.append([i, role, slot, *nxt[slot]])
                cf_rows.append([i, role, slot, cash[slot]])
    files["instruments.csv"] = _csv_text(["record", "role", "slot", "kind", "strike", "steps_to_expiry", "direction", "is_call", "claim", "hist_weight"], inst_rows)
    files["features_t.csv"] = _csv_text(["record", "role", "slot", *FEATURE_NAMES], ft_rows)
    files["features_t1.csv"] = _csv_text(["record", "role", "slot", *FEATURE_NAMES], ft1_rows)
    files["cashflows.csv"] = _csv_text(["record", "role", "slot", "cashflow"], cf_rows)

    manifest = {k: v for k, v in ds.meta.items()}
    manifest.update({"n_records": ds.n_records, "n_book": ds.n_book, "n_hedges": ds.n_hedges, "feature_names": list(FEATURE_NAMES), "claims": claims, "files": list(DATASET_FILES)})
    manifest.setdefault("config_hash", hashlib.sha256(json.dumps(manifest.get("config"), sort_keys=True).encode()).hexdigest())
    for name, text in files.items():
        atomic_write_text(os.path.join(out_dir, name), text)
    atomic_write_text(os.path.join(out_dir, "manifest.json"), json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return out_dir


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _parse_state(row, prefix, w):
    vals = {f: row[f"{prefix}{f}"] for f in _STATE_FIELDS}
    return MarketState(
        time_index=int(vals["time_index"]),
        regime=int(vals["regime"]),
        spot=float(vals["spot"]),
        vol=float(vals["vol"]),
        rate=float(vals["rate"]),
        dt=float(vals["dt"]),
        discount=float(vals["discount"]),
        calendar_fraction=float(vals["calendar_fraction"]),
        returns=tuple(float(row[f"{prefix}ret_{i}"]) for i in range(w)),
    )


def load_dataset(in_dir) -> HistoricDataset:
    with open(os.path.join(in_dir, "manifest.json")) as fh:
        manifest = json.load(fh)
    claims = {k: ClaimTable.from_dict(v) for k, v in manifest.get("claims", {}).items()}
    srows = _read_csv(os.path.join(in_dir, "states.csv"))
    if not srows:
        raise ValueError(f"{in_dir}: empty dataset")
    w = sum(1 for k in srows[0] if k.startswith("now_ret_"))
    R, nb, nh = manifest["n_records"], manifest["n_book"], manifest["n_hedges"]
    now = [_parse_state(r, "now_", w) for r in srows]
    nxt = [_parse_state(r, "next_", w) for r in srows]
    group = np.array([int(r["group"]) for r in srows])
    weight = np.array([float(r["weight"]) for r in srows])

    specs = {"book": [[None] * nb for _ in range(R)], "hedge": [[None] * nh for _ in range(R)]}
    hist = np.zeros((R, nb))
    for r in _read_csv(os.path.join(in_dir, "instruments.csv")):
        i, role, slot = int(r["record"]), r["role"], int(r["slot"])
        ste = None if r["steps_to_expiry"] == "" else int(r["steps_to_expiry"])
        specs[role][i][slot] = InstrumentSpec(r["kind"], float(r["strike"]), ste, int(r["direction"]), r["is_call"] == "1", claims.get(r["claim"]) if r["claim"] else None)
        if role == "book":
            hist[i, slot] = float(r["hist_weight"])

    def feats(name):
        out = {"book": np.zeros((R, nb, F)), "hedge": np.zeros((R, nh, F))}
        for r in _read_csv(os.path.join(in_dir, name)):
            out[r["role"]][int(r["record"]), int(r["slot"])] = [float(r[c]) for c in FEATURE_NAMES]
        return out

    ft, ft1 = feats("features_t.csv"), feats("features_t1.csv")
    cash = {"book": np.zeros((R, nb)), "hedge": np.zeros((R, nh))}
    for r in _read_csv(os.path.join(in_dir, "cashflows.csv")):
        cash[r["role"]][int(r["record"]), int(r["slot"])] = float(r["cashflow"])
    meta = {k: v for k, v in manifest.items() if k not in ("claims", "files", "n_records", "n_book", "n_hedges", "feature_names")}
    return HistoricDataset(now, nxt, group, weight, specs["book"], hist, ft["book"], ft1["book"], cash["book"], specs["hedge"], ft["hedge"], ft1["hedge"], cash["hedge"], meta)
