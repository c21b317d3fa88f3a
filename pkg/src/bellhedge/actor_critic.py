"""Actor-critic solution of the hedging Bellman equation on FMR data.

Each round freezes a snapshot ``V_prev`` of the value network, then

* actor:  ascend ``E[u(beta V_prev(z' + a.h', m') + R(a) + y) - y]`` in the
  policy ``a = pi(z, m)`` and the OCE shift ``y(z, m)``;
* critic: regress ``V(z, m)`` onto the sampled Bellman target.

Scenario batches are grouped: records in one group share the origin state
``(z, m)`` and carry conditional weights, so datasets that enumerate the
successors of a state give exact conditional expectations.  Path data has
singleton groups with weight 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .dynamics import CostConfig, CostSpec, cost_batch
from .mdp import mdp_instruments
from .market_sim import HistoricDataset, oracle_book_value, oracle_cashflow, oracle_features
from .nn import Adam, Approximator, Momentum, Normalizer, buehler_zero_init, clip_grads
from .rng import keyed_rng
from .utility import UtilityConfig, UtilityFamily, oce_batch


class TrainingError(ArithmeticError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


# --------------------------------------------------------------------------- config


class SamplerConfig(BaseModel):
    """Distribution ``Q`` of portfolio weights ``w`` (book value ``z = w . x``)."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    sigma_w: float = Field(1.0, ge=0.0)
    hist_mass: float = Field(0.5, ge=0.0, le=1.0)
    distribution: Literal["normal", "uniform"] = "normal"
    uniform_low: float = -1.0
    uniform_high: float = 1.0
    resample: Optional[list[bool]] = None  # per book slot; False keeps the historic weight

    @model_validator(mode="after")
    def _check(self):
        if self.uniform_high < self.uniform_low:
            raise ValueError("uniform_high must be >= uniform_low")
        return self


class NetConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    hidden: list[int] = [32, 32]
    activation: Literal["relu", "softplus", "tanh"] = "softplus"


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    batch_size: int = Field(256, ge=1)
    actor_steps_per_round: int = Field(1, ge=0)
    critic_steps_per_round: int = Field(1, ge=0)
    learning_rate: float = Field(1e-2, gt=0.0)
    critic_learning_rate: Optional[float] = Field(None, gt=0.0)
    lr_decay: float = Field(1.0, gt=0.0, le=1.0)
    optimizer: Literal["momentum", "adam"] = "momentum"
    momentum: float = Field(0.9, ge=0.0, lt=1.0)
    grad_clip: Optional[float] = Field(None, gt=0.0)
    rounds: int = Field(100, ge=0)
    seed: int = Field(0, ge=0)
    utility: UtilityConfig = UtilityConfig()
    entropy_closed_form: bool = False
    critic_loss: Literal["abs", "squared_unconditional"] = "squared_unconditional"
    sampler: SamplerConfig = SamplerConfig()
    policy_net: NetConfig = NetConfig()
    value_net: NetConfig = NetConfig()
    shift_net: NetConfig = NetConfig()
    cost: CostConfig = CostConfig()
    divergence_threshold: float = Field(1e6, gt=0.0)

    @model_validator(mode="after")
    def _check(self):
        if self.entropy_closed_form and self.utility.kind != "entropy":
            raise ValueError("entropy_closed_form requires the entropy utility")
        if self.utility.kind == "worst_case":
            raise ValueError("worst_case has no pointwise utility and cannot be trained")
        return self


# --------------------------------------------------------------------------- batches


@dataclass
class ScenarioBatch:
    z_now: np.ndarray  # (B, F)
    z_next: np.ndarray  # (B, F)
    z_cash: np.ndarray  # (B,)
    m_now: np.ndarray  # (B, D)
    m_next: np.ndarray  # (B, D)
    h_now: np.ndarray  # (B, n, F)
    h_next: np.ndarray  # (B, n, F)
    h_cash: np.ndarray  # (B, n)
    beta: np.ndarray  # (B,)
    group: np.ndarray  # (B,) in 0..G-1
    weight: np.ndarray  # (B,) conditional weight within the group
    weights: np.ndarray = None  # (G, n_book) sampled portfolio weights
    record: np.ndarray = None  # (B,) dataset record index

    def __post_init__(self):
        if self.z_now.shape[0] < 1:
            raise ValueError("a scenario batch needs at least one record")
        for name in ("z_now", "z_next", "z_cash", "m_now", "m_next", "h_now", "h_next", "h_cash", "beta"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"scenario batch field {name} is not finite")

    @property
    def size(self):
        return self.z_now.shape[0]

    @property
    def n_groups(self):
        return int(self.group.max()) + 1

    @property
    def n_hedges(self):
        return self.h_now.shape[1]

    def inputs_now(self):
        return np.concatenate([self.z_now, self.m_now], axis=1)

    def subset_groups(self, groups):
        keep = np.isin(self.group, groups)
        remap = {g: i for i, g in enumerate(groups)}
        g = np.array([remap[v] for v in self.group[keep]])
        return ScenarioBatch(
            self.z_now[keep], self.z_next[keep], self.z_cash[keep], self.m_now[keep], self.m_next[keep],
            self.h_now[keep], self.h_next[keep], self.h_cash[keep], self.beta[keep], g, self.weight[keep],
            None if self.weights is None else self.weights[list(groups)], None if self.record is None else self.record[keep],
        )


def _draw_weights(rng, hist, sampler: SamplerConfig):
    if rng.random() < sampler.hist_mass:
        return hist.copy()
    if sampler.distribution == "normal":
        w = sampler.sigma_w * rng.standard_normal(hist.shape[0])
    else:
        w = rng.uniform(sampler.uniform_low, sampler.uniform_high, hist.shape[0])
    if sampler.resample is not None:
        if len(sampler.resample) != hist.shape[0]:
            raise ValueError(f"sampler.resample has {len(sampler.resample)} entries for {hist.shape[0]} book slots")
        w = np.where(np.asarray(sampler.resample, dtype=bool), w, hist)
    return w


def sample_scenarios(dataset: HistoricDataset, sampler: SamplerConfig, count: int, seed: int, key=()) -> ScenarioBatch:
    """Draw ``count`` origin states: a uniform group, then portfolio weights ``w``.

    Every draw expands into all records of its group.  Draw ``i`` uses the
    stream ``(seed, "scenario", *key, i)``, so batches do not depend on the
    order or the number of workers producing them.
    """
    if dataset.n_records == 0:
        raise ValueError("cannot sample from an empty dataset")
    if count < 1:
        raise ValueError("count must be >= 1")
    groups = dataset.groups()
    recs, gid, ws = [], [], []
    for i in range(count):
        rng = keyed_rng(seed, "scenario", *key, i)
        g = groups[int(rng.integers(len(groups)))]
        w = _draw_weights(rng, dataset.book_weights[g[0]], sampler)
        ws.append(w)
        recs.extend(g.tolist())
        gid.extend([i] * g.size)
    recs = np.asarray(recs)
    gid = np.asarray(gid)
    W = np.asarray(ws)[gid]  # (B, nb)
    z_now = np.einsum("bk,bkf->bf", W, dataset.book_now[recs])
    z_next = np.einsum("bk,bkf->bf", W, dataset.book_next[recs])
    z_cash = np.einsum("bk,bk->b", W, dataset.book_cash[recs])
    m_now = dataset.market_features("now")[recs]
    m_next = dataset.market_features("next")[recs]
    return ScenarioBatch(
        z_now, z_next, z_cash, m_now, m_next,
        dataset.hedge_now[recs], dataset.hedge_next[recs], dataset.hedge_cash[recs],
        dataset.discounts()[recs], gid, dataset.weight[recs], np.asarray(ws), recs,
    )


# --------------------------------------------------------------------------- objective


def _group_sum(values, group, n_groups):
    out = np.zeros((n_groups,) + values.shape[1:])
    np.add.at(out, group, values)
    return out


def _rewards(batch: ScenarioBatch, a, cost: CostSpec):
    beta = batch.beta
    dBz = beta * batch.z_next[:, 0] - batch.z_now[:, 0] + batch.z_cash
    dBh = beta[:, None] * batch.h_next[:, :, 0] - batch.h_now[:, :, 0] + batch.h_cash
    net = np.einsum("bi,bif->bf", a, batch.h_now)
    c = np.sum(np.abs(cost.gamma_weights * net), axis=1)
    dc = np.einsum("bf,bif->bi", cost.gamma_weights * np.sign(net), batch.h_now)
    return dBz + np.sum(a * dBh, axis=1) - c, dBh - dc


def _next_inputs(batch, a):
    zn = batch.z_next + np.einsum("bi,bif->bf", a, batch.h_next)
    return np.concatenate([zn, batch.m_next], axis=1)


def _entropy_groups(lam, X, batch):
    """Per-group ``-(1/lam) log sum w exp(-lam X)`` and its softmin weights."""
    G = batch.n_groups
    e = -lam * X
    mx = np.full(G, -np.inf)
    np.maximum.at(mx, batch.group, e)
    ex = batch.weight * np.exp(e - mx[batch.group])
    s = _group_sum(ex, batch.group, G)
    vals = -(mx + np.log(s)) / lam
    return vals, ex / s[batch.group]


@dataclass
class _Pass:
    objective: float
    a: np.ndarray
    X: np.ndarray
    targets: np.ndarray  # per record (generic) or per group (closed form)
    dJ_da: np.ndarray
    dJ_dy: Optional[np.ndarray]
    pi_state: tuple
    y_state: Optional[tuple]


def _forward(V_prev, pi, y, batch, fam, cost, closed_form, want_grads=True):
    x_in = batch.inputs_now()
    a, pi_state = pi.forward_cache(x_in)
    nxt_in = _next_inputs(batch, a)
    v, v_state = V_prev.forward_cache(nxt_in)
    v = v[:, 0]
    R, dR_da = _rewards(batch, a, cost)
    X = batch.beta * v + R
    G = batch.n_groups
    if closed_form:
        vals, soft = _entropy_groups(fam.lam, X, batch)
        obj = float(vals.mean())
        dJ_dX = soft / G
        targets, dJ_dy, y_state = vals, None, None
    else:
        yv, y_state = y.forward_cache(x_in)
        yv = yv[:, 0]
        arg = X + yv
        uval = fam.u(arg)
        targets = uval - yv
        obj = float(np.sum(batch.weight * targets) / G)
        du = fam.du(arg)
        dJ_dX = batch.weight * du / G
        dJ_dy = batch.weight * (du - 1.0) / G
    dJ_da = None
    if want_grads:
        _, gin = V_prev.backward(v_state, np.ones((batch.size, 1)), need_input=True)
        F = batch.z_now.shape[1]
        dv_da = np.einsum("bf,bif->bi", gin[:, :F], batch.h_next)
        dJ_da = dJ_dX[:, None] * (batch.beta[:, None] * dv_da + dR_da)
    if not np.isfinite(obj):
        bad = int(np.flatnonzero(~np.isfinite(X))[0]) if np.any(~np.isfinite(X)) else -1
        raise TrainingError("non-finite actor objective", {"sample": bad})
    return _Pass(obj, a, X, targets, dJ_da, dJ_dy, pi_state, y_state)


def actor_objective(V_prev, pi, y, batch, fam, cost=None, closed_form=False):
    cost = cost or CostSpec.zero(batch.z_now.shape[1])
    return _forward(V_prev, pi, y, batch, fam, cost, closed_form, want_grads=False).objective


def actor_gradients(V_prev, pi, y, batch, fam, cost=None, closed_form=False):
    """``(objective, pi grads, y grads, dJ/da)`` of the Monte-Carlo actor objective."""
    cost = cost or CostSpec.zero(batch.z_now.shape[1])
    p = _forward(V_prev, pi, y, batch, fam, cost, closed_form)
    g_pi, _ = pi.backward(p.pi_state, p.dJ_da)
    g_y = None
    if p.y_state is not None:
        g_y, _ = y.backward(p.y_state, p.dJ_dy[:, None])
    return p.objective, g_pi, g_y, p.dJ_da


def _plain_step(appr, grads, lr, sign):
    appr.net.params = [(W + sign * lr * gW, b + sign * lr * gb) for (W, b), (gW, gb) in zip(appr.net.params, grads)]


def actor_step(V_prev, pi, y, batch, fam: UtilityFamily, lr: float, cost=None, closed_form=False, opt_pi=None, opt_y=None, batch_id=0, clip=None):
    """One ascent step for ``pi`` and ``y``; returns ``(pi, y, pre-step objective)``."""
    try:
        obj, g_pi, g_y, _ = actor_gradients(V_prev, pi, y, batch, fam, cost, closed_form)
    except TrainingError as exc:
        exc.diagnostics["batch"] = batch_id
        raise
    g_pi = clip_grads(g_pi, clip)
    (opt_pi.step(pi, g_pi, +1.0, lr) if opt_pi else _plain_step(pi, g_pi, lr, +1.0))
    if g_y is not None:
        g_y = clip_grads(g_y, clip)
        (opt_y.step(y, g_y, +1.0, lr) if opt_y else _plain_step(y, g_y, lr, +1.0))
    return pi, y, obj


def bellman_targets(V_prev, pi, y, batch, fam, cost=None, closed_form=False):
    """Sampled targets: per record ``u(X + y) - y``, or per group in closed form."""
    cost = cost or CostSpec.zero(batch.z_now.shape[1])
    return _forward(V_prev, pi, y, batch, fam, cost, closed_form, want_grads=False).targets


def critic_loss_and_grad(v, targets, batch, loss_kind, group_targets=False):
    """Loss and ``dL/dv`` for per-record value predictions ``v``."""
    G = batch.n_groups
    w = batch.weight
    if group_targets:
        t = targets[batch.group]
    else:
        t = targets
    if loss_kind == "abs":
        d = _group_sum(w * (t - v), batch.group, G)
        loss = float(np.mean(np.abs(d)))
        grad = -w * np.sign(d)[batch.group] / G
    elif loss_kind == "squared_unconditional":
        r = v - t
        loss = float(np.sum(w * r * r) / G)
        grad = 2.0 * w * r / G
    elif loss_kind == "squared_nested":
        # (V(z,m) - E[target | z,m])^2 with the conditional mean taken exactly
        cond = _group_sum(w * t, batch.group, G)
        vg = _group_sum(w * v, batch.group, G)
        loss = float(np.mean((vg - cond) ** 2))
        grad = 2.0 * w * (vg - cond)[batch.group] / G
    else:
        raise ValueError(f"unknown critic loss {loss_kind!r}")
    return loss, grad


def critic_gradients(V, V_prev, pi, y, batch, fam, loss_kind, cost=None, closed_form=False):
    targets = bellman_targets(V_prev, pi, y, batch, fam, cost, closed_form)
    v, state = V.forward_cache(batch.inputs_now())
    loss, g = critic_loss_and_grad(v[:, 0], targets, batch, loss_kind, group_targets=closed_form)
    grads, _ = V.backward(state, g[:, None])
    return loss, grads


def critic_step(V, V_prev, pi, y, batch, fam: UtilityFamily, lr: float, loss_kind="squared_unconditional", cost=None, closed_form=False, opt=None, clip=None):
    """One descent step on the critic loss; returns ``(V, pre-step loss)``."""
    loss, grads = critic_gradients(V, V_prev, pi, y, batch, fam, loss_kind, cost, closed_form)
    if not np.isfinite(loss):
        raise TrainingError("non-finite critic loss", {"loss": loss})
    grads = clip_grads(grads, clip)
    (opt.step(V, grads, -1.0, lr) if opt else _plain_step(V, grads, lr, -1.0))
    return V, loss


# --------------------------------------------------------------------------- model


@dataclass
class TrainedModel:
    pi: Approximator
    y: Approximator
    V: Approximator
    config: dict
    curves: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def policy(self, z_features, m_features):
        x = np.concatenate([np.atleast_2d(z_features), np.atleast_2d(m_features)], axis=1)
        return self.pi(x)

    def value(self, z_features, m_features):
        x = np.concatenate([np.atleast_2d(z_features), np.atleast_2d(m_features)], axis=1)
        return self.V(x)[:, 0]

    def to_dict(self):
        return {"pi": self.pi.to_dict(), "y": self.y.to_dict(), "V": self.V.to_dict(), "config": self.config, "curves": self.curves, "meta": self.meta}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, d):
        return cls(Approximator.from_dict(d["pi"]), Approximator.from_dict(d["y"]), Approximator.from_dict(d["V"]), d["config"], d.get("curves", []), d.get("meta", {}))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def init_model(dataset: HistoricDataset, cfg: TrainConfig) -> TrainedModel:
    """Buehler-zero networks with input normalisation fitted on a sampled batch."""
    probe = sample_scenarios(dataset, cfg.sampler, cfg.batch_size, cfg.seed, key=("normalizer",))
    x = np.concatenate([probe.inputs_now(), np.concatenate([probe.z_next, probe.m_next], axis=1)])
    norm = Normalizer.fit(x)
    d_in = x.shape[1]
    n = dataset.n_hedges
    pi = buehler_zero_init([d_in, *cfg.policy_net.hidden, n], cfg.seed, cfg.policy_net.activation, norm, cfg.cost.action_bound, key="pi")
    y = buehler_zero_init([d_in, *cfg.shift_net.hidden, 1], cfg.seed, cfg.shift_net.activation, norm, key="y")
    V = buehler_zero_init([d_in, *cfg.value_net.hidden, 1], cfg.seed, cfg.value_net.activation, norm, key="V")
    return TrainedModel(pi, y, V, cfg.model_dump(mode="json"), [], {"n_hedges": n, "input_dim": d_in})


def _optimizer(cfg: TrainConfig, lr):
    if cfg.optimizer == "adam":
        return Adam(lr, beta1=cfg.momentum)
    return Momentum(lr, cfg.momentum)


def train(dataset: HistoricDataset, cfg: TrainConfig, callback=None) -> TrainedModel:
    """Alternate actor and critic steps for ``cfg.rounds`` rounds.

    Round ``r`` samples its batch from the stream ``(seed, "round", r)``.
    Raises :class:`TrainingError` (with the curve so far) on divergence.
    """
    if not isinstance(cfg, TrainConfig):
        cfg = TrainConfig.model_validate(cfg)
    fam = cfg.utility.family()
    if cfg.entropy_closed_form and all(len(g) == 1 for g in dataset.groups()):
        raise ValueError("the closed-form entropy objective needs grouped successors; this dataset has singleton groups")
    cost = cfg.cost.spec()
    if cost.gamma_weights.shape[0] != dataset.book_now.shape[2]:
        raise ValueError("cost weights must match the feature dimension")
    model = init_model(dataset, cfg)
    pi, y, V = model.pi, model.y, model.V
    opt_pi = _optimizer(cfg, cfg.learning_rate)
    opt_y = _optimizer(cfg, cfg.learning_rate)
    lr_c = cfg.critic_learning_rate or cfg.learning_rate
    opt_V = _optimizer(cfg, lr_c)
    for r in range(cfg.rounds):
        batch = sample_scenarios(dataset, cfg.sampler, cfg.batch_size, cfg.seed, key=("round", r))
        V_prev = V.copy()
        decay = cfg.lr_decay**r
        obj = loss = float("nan")
        for _ in range(cfg.actor_steps_per_round):
            _, _, obj = actor_step(V_prev, pi, y, batch, fam, cfg.learning_rate * decay, cost, cfg.entropy_closed_form, opt_pi, opt_y, batch_id=r, clip=cfg.grad_clip)
        for _ in range(cfg.critic_steps_per_round):
            _, loss = critic_step(V, V_prev, pi, y, batch, fam, lr_c * decay, cfg.critic_loss, cost, cfg.entropy_closed_form, opt_V, clip=cfg.grad_clip)
        row = {"round": r, "actor_objective": obj, "critic_loss": loss, "lr": cfg.learning_rate * decay}
        model.curves.append(row)
        if callback is not None:
            callback(row)
        if not (np.isfinite(loss) or cfg.critic_steps_per_round == 0) or abs(loss) > cfg.divergence_threshold or abs(obj) > cfg.divergence_threshold:
            raise TrainingError(f"training diverged in round {r}", {"curves": model.curves})
    return model


# --------------------------------------------------------------------------- rollouts


@dataclass
class EvalReport:
    family: dict
    episodes: int
    episode_length: int
    utility_policy: float
    utility_baseline: float
    mean_policy: float
    mean_baseline: float
    returns_policy: list
    returns_baseline: list

    @property
    def improvement(self):
        return self.utility_policy - self.utility_baseline

    def to_dict(self, with_returns=False):
        d = {k: getattr(self, k) for k in ("family", "episodes", "episode_length", "utility_policy", "utility_baseline", "mean_policy", "mean_baseline")}
        d["improvement"] = self.improvement
        if with_returns:
            d["returns_policy"] = self.returns_policy
            d["returns_baseline"] = self.returns_baseline
        return d


def zero_policy(ctx):
    return np.zeros(ctx["hedge_now"].shape[0])


def model_policy(model: TrainedModel):
    def policy(ctx):
        return model.policy(ctx["z_features"], ctx["market_features"])[0]

    return policy


def rollout(dataset: HistoricDataset, policy, start: int, length: int, cost: CostSpec) -> float:
    """Discounted reward sum of ``policy`` along records ``start .. start+length-1``.

    Positions are tracked contract by contract and marked with the oracle
    pricer, so hedges bought earlier keep contributing P&L until expiry.
    """
    positions = {}
    for spec, w in zip(dataset.book_specs[start], dataset.book_weights[start]):
        if w != 0.0:
            positions[spec] = positions.get(spec, 0.0) + float(w)
    G, disc = 0.0, 1.0
    for t in range(start, start + length):
        m, m1 = dataset.states_now[t], dataset.states_next[t]
        beta = m.discount
        F = dataset.hedge_now.shape[2]
        z = np.zeros(F)
        Rz = 0.0
        for spec, q in positions.items():
            z += q * oracle_features(spec, m)
            Rz += q * (beta * oracle_book_value(spec.rolled(), m1) - oracle_book_value(spec, m) + oracle_cashflow(spec, m, m1))
        h_now = dataset.hedge_now[t]
        ctx = {"z_features": z, "market": m, "market_features": m.features, "hedge_now": h_now, "positions": positions}
        a = np.asarray(policy(ctx), dtype=float).ravel()
        dBh = beta * dataset.hedge_next[t, :, 0] - h_now[:, 0] + dataset.hedge_cash[t]
        c = float(cost_batch(cost.gamma_weights, a, h_now, cost.action_bound))
        G += disc * (Rz + float(a @ dBh) - c)
        disc *= beta
        rolled = {}
        for spec, q in positions.items():
            s = spec.rolled()
            if not s.expired:
                rolled[s] = rolled.get(s, 0.0) + q
        for spec, aj in zip(dataset.hedge_specs[t], a):
            s = spec.rolled()
            if aj != 0.0 and not s.expired:
                rolled[s] = rolled.get(s, 0.0) + float(aj)
        positions = rolled
    return G


def realized_utility(fam: UtilityFamily, returns) -> float:
    x = np.asarray(returns, dtype=float)
    return float(oce_batch(fam, x[None, :], np.full((1, x.size), 1.0 / x.size))[0][0])


def evaluate(model, dataset: HistoricDataset, fam: UtilityFamily, episodes: int, episode_length: Optional[int] = None, cost: Optional[CostSpec] = None, baseline=zero_policy) -> EvalReport:
    """Roll the policy over ``episodes`` disjoint windows of a held-out path.

    ``model`` is a :class:`TrainedModel` or a policy callable taking the
    rollout context.  The same windows are scored for ``baseline``.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    if not dataset.is_path():
        raise ValueError("evaluation needs a path-shaped dataset (consecutive records)")
    length = episode_length or dataset.n_records // episodes
    if length < 1 or length * episodes > dataset.n_records:
        raise ValueError(f"{episodes} episodes of length {length} do not fit in {dataset.n_records} records")
    if cost is None:
        cost = CostSpec.zero(dataset.hedge_now.shape[2]) if not isinstance(model, TrainedModel) else CostConfig(**model.config["cost"]).spec()
    policy = model_policy(model) if isinstance(model, TrainedModel) else model
    g_pol = [rollout(dataset, policy, e * length, length, cost) for e in range(episodes)]
    g_base = [rollout(dataset, baseline, e * length, length, cost) for e in range(episodes)]
    return EvalReport(fam.to_dict(), episodes, length, realized_utility(fam, g_pol), realized_utility(fam, g_base),
                      float(np.mean(g_pol)), float(np.mean(g_base)), g_pol, g_base)


def tabular_policy(mdp, policy_table):
    """Rollout policy that plays the tabular greedy action on the lattice."""
    _, hedges = mdp_instruments(mdp)

    def policy(ctx):
        q = np.array([ctx["positions"].get(h, 0.0) for h in hedges])
        k = ctx["market"].regime
        p = mdp.lattice_index(q)
        return mdp.a_eff[p, policy_table[k, p]]

    return policy


def lattice_values(model: TrainedModel, mdp):
    """Trained ``V`` on every (regime, lattice point) of ``mdp``, shape ``(K, L)``."""
    out = np.empty((mdp.K, mdp.n_lattice))
    for k, s in enumerate(mdp.market_states):
        m = np.repeat(np.asarray(s.features, dtype=float)[None, :], mdp.n_lattice, axis=0)
        out[k] = model.value(mdp.features[k], m)
    return out


def lattice_actions(model: TrainedModel, mdp):
    """Trained policy on every (regime, lattice point), shape ``(K, L, n)``."""
    out = np.empty((mdp.K, mdp.n_lattice, mdp.n_hedges))
    for k, s in enumerate(mdp.market_states):
        m = np.repeat(np.asarray(s.features, dtype=float)[None, :], mdp.n_lattice, axis=0)
        out[k] = model.policy(mdp.features[k], m)
    return out
