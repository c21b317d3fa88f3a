"""Truncated-horizon references for the vanilla (cash-reward) hedging problem.

The vanilla value of a state is ``sup_pi U[sum_t c_t R_cash_t] / c_0`` with
calendar discounts ``c_t = c_0 beta^t``.  Two brute-force references are
provided, both independent of the OCE y-search:

* literal enumeration of every deterministic history-dependent policy on a
  tiny tree, scored with an arbitrary utility on the exact path law;
* for the entropy utility, the multiplicative dynamic programme in log space,
  which is exact over all policies because the exponential utility factorises
  along the tree.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.special import logsumexp

from .mdp import HedgingMDP, calendar_expand
from .bellman import solve
from .utility import UtilityFamily, oce_batch


def _constant_beta(mdp):
    if not np.all(mdp.beta == mdp.beta[0]):
        raise ValueError("the truncated vanilla problem needs a constant discount factor")
    return float(mdp.beta[0])


def truncation_horizon(beta_star: float, reward_bound: float, eps: float = 1e-4) -> int:
    """Smallest ``H`` with ``beta*^H * bound / (1 - beta*) < eps``."""
    if reward_bound <= 0.0:
        return 1
    return max(1, int(math.floor(math.log(eps * (1.0 - beta_star) / reward_bound) / math.log(beta_star))) + 1)


def reward_bound(mdp: HedgingMDP) -> float:
    return float(np.max(np.abs(mdp.R_cash)))


def entropy_log_dp(mdp: HedgingMDP, lam: float, horizon: int) -> np.ndarray:
    """Exact ``horizon``-step vanilla entropy value, shape ``(K, L)``.

    ``phi_t(k, p) = min_a E[exp(-lam c_t R) phi_{t+1}(j, succ)]`` is carried as
    ``log phi`` so large horizons never overflow.
    """
    beta = _constant_beta(mdp)
    K, L = mdp.K, mdp.n_lattice
    logp = np.log(np.where(mdp.probs > 0.0, mdp.probs, 1.0))
    logp = np.where(mdp.probs > 0.0, logp, -np.inf)[:, None, None, :]
    log_phi = np.zeros((K, L))
    c0 = mdp.calendar
    for t in reversed(range(horizon)):
        ct = (c0 * beta**t)[:, None, None, None]
        nxt = np.transpose(log_phi[mdp.nxt][:, :, mdp.succ], (0, 2, 3, 1))  # [k, p, a, w]
        terms = logp - lam * ct * mdp.R_cash + nxt
        log_phi = np.min(logsumexp(terms, axis=3), axis=2)
    return -log_phi / (lam * c0[:, None])


def enumerate_policies(mdp: HedgingMDP, fam: UtilityFamily, horizon: int, max_policies: int = 2_000_000) -> np.ndarray:
    """Vanilla value by literal enumeration of history-dependent policies.

    A policy assigns an action to every node of the regime tree of depth
    ``horizon - 1``; every policy is scored by ``U`` of its discounted cash
    rewards over the exact path law.  Exponential in the tree size.
    """
    beta = _constant_beta(mdp)
    K, A, W = mdp.K, mdp.n_actions, mdp.nxt.shape[1]
    n_nodes = sum(W**t for t in range(horizon))
    if A**n_nodes > max_policies:
        raise ValueError(f"{A}^{n_nodes} policies exceed the enumeration budget")
    policies = np.array(list(itertools.product(range(A), repeat=n_nodes)))  # (NP, nodes)
    slot_paths = list(itertools.product(range(W), repeat=horizon))
    out = np.zeros((K, mdp.n_lattice))
    for k0 in range(K):
        for p0 in range(mdp.n_lattice):
            G = np.zeros((policies.shape[0], len(slot_paths)))
            prob = np.ones(len(slot_paths))
            for col, path in enumerate(slot_paths):
                k = k0
                p = np.full(policies.shape[0], p0)
                node, base = 0, 0
                for t, w in enumerate(path):
                    a = policies[:, node]
                    G[:, col] += mdp.calendar[k0] * beta**t * mdp.R_cash[k, p, a, w]
                    prob[col] *= mdp.probs[k, w]
                    p = mdp.succ[p, a]
                    k = int(mdp.nxt[k, w])
                    # children of node (depth t, index i) live at depth t+1, index i*W + w
                    idx = node - base
                    base += W**t
                    node = base + idx * W + w
            vals, _ = oce_batch(fam, G, prob[None, :])
            out[k0, p0] = vals.max() / mdp.calendar[k0]
    return out


def vanilla_fixed_point(mdp: HedgingMDP, fam: UtilityFamily, horizon: int, tol: float = 1e-10):
    """Fixed point of the cash-value operator on the calendar-expanded MDP, layer 0."""
    expanded = calendar_expand(mdp, horizon)
    res = solve(expanded, fam, "T_tilde", tol)
    return res.values[: mdp.K], res
