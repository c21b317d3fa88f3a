"""Exact Bellman operators on enumerated hedging MDPs.

All operators evaluate the conditional OCE of every (state, action) pair in
one batched kernel call and take the max over the action grid.  Ties (up to
``TIE_TOL`` relative) go to the lowest action index.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .mdp import HedgingMDP
from .utility import UtilityFamily, oce_batch


def _check_f(mdp, f):
    f = np.asarray(f, dtype=float)
    if f.shape != (mdp.K, mdp.n_lattice):
        raise ValueError(f"value table must have shape {(mdp.K, mdp.n_lattice)}, got {f.shape}")
    if not np.all(np.isfinite(f)):
        raise ValueError("value table must be finite")
    return f


def _successor_values(mdp, f):
    # fs[k, p, a, w] = f[nxt[k, w], succ[p, a]]
    return np.transpose(f[mdp.nxt][:, :, mdp.succ], (0, 2, 3, 1))


TIE_TOL = 1e-12


def _greedy(q):
    # actions within TIE_TOL (relative) of the best count as ties; lowest index wins
    best = np.max(q, axis=2)
    tied = q >= (best - TIE_TOL * np.maximum(1.0, np.abs(best)))[..., None]
    return best, np.argmax(tied, axis=2)


def action_values(mdp: HedgingMDP, fam: UtilityFamily, f, operator: str = "T", backend=None):
    """Per-action values ``Q[k, p, a]`` whose max over ``a`` is the operator.

    ``T``:       U[beta f(succ) + R | m]
    ``T_tilde``: U[beta c f(succ) + c R_cash | m] / c   (c: calendar discount)
    ``T_alt``:   U[beta f(succ) + R_cash | m]
    """
    f = _check_f(mdp, f)
    fs = _successor_values(mdp, f)
    beta = mdp.beta[:, None, None, None]
    if operator == "T":
        x = beta * fs + mdp.R
    elif operator == "T_alt":
        x = beta * fs + mdp.R_cash
    elif operator == "T_tilde":
        c = mdp.calendar[:, None, None, None]
        x = c * (beta * fs + mdp.R_cash)
    else:
        raise ValueError(f"unknown operator {operator!r}")
    probs = mdp.probs[:, None, None, :]
    q, _ = oce_batch(fam, x, probs, backend=backend)
    if operator == "T_tilde":
        q = q / mdp.calendar[:, None, None]
    return q


def apply_operator(mdp, fam, f, operator="T", backend=None):
    q = action_values(mdp, fam, f, operator, backend)
    return _greedy(q)[0]


def apply_T(mdp: HedgingMDP, fam: UtilityFamily, f, backend=None):
    return apply_operator(mdp, fam, f, "T", backend)


def apply_T_tilde(mdp: HedgingMDP, fam: UtilityFamily, f, backend=None):
    """Cash-value operator with non-discounted cash rewards.

    The successor's calendar discount is ``beta(m) * c(m)``, which is exact on
    calendar-expanded MDPs and turns ``c`` into a per-state scale otherwise.
    """
    return apply_operator(mdp, fam, f, "T_tilde", backend)


def T_alt(mdp: HedgingMDP, fam: UtilityFamily, f, backend=None):
    """Bellman operator of the cash-reward formulation, solved by ``V + B``."""
    return apply_operator(mdp, fam, f, "T_alt", backend)


def greedy_policy(mdp: HedgingMDP, fam: UtilityFamily, V, operator: str = "T", backend=None):
    """Per-state argmax action index, ties to the lowest index."""
    return _greedy(action_values(mdp, fam, V, operator, backend))[1]


def apply_T_multi(mdp: HedgingMDP, fam: UtilityFamily, f, n: int, backend=None):
    """n-step operator: one U over the unrolled tree, sup over per-node actions.

    For ``n = 2`` the second action is any map from the intermediate regime to
    the action grid; all ``A * A^K`` policies are enumerated per state.
    """
    if n == 1:
        return apply_T(mdp, fam, f, backend)
    if n != 2:
        raise ValueError(f"apply_T_multi supports n in {{1, 2}}, got {n}")
    f = _check_f(mdp, f)
    K, L, A = mdp.K, mdp.n_lattice, mdp.n_actions
    W = mdp.nxt.shape[1]
    j = mdp.nxt  # (K, W1) intermediate regimes
    probs = (mdp.probs[:, :, None] * mdp.probs[j]).reshape(K, W * W)
    maps = np.array(list(itertools.product(range(A), repeat=W)))  # (M, W1): second action per intermediate slot
    M = maps.shape[0]
    jj = j[:, None, None, :, None]
    nxt2 = mdp.nxt[j][:, None, None, :, :]  # (K, 1, 1, W1, W2)
    b1 = mdp.beta[:, None, None, None, None]
    b2 = mdp.beta[j][:, None, None, :, None]
    out = np.full((K, L), -np.inf)
    for p in range(L):
        r1 = mdp.R[:, p]  # (K, A, W1)
        p1 = mdp.succ[p]  # (A,) lattice point after the first trade
        p2 = mdp.succ[p1[:, None, None], maps[None, :, :]]  # (A, M, W1) after the second
        r2 = mdp.R[jj, p1[None, :, None, None, None], maps[None, None, :, :, None], np.arange(W)]  # (K, A, M, W1, W2)
        f2 = f[nxt2, p2[None, :, :, :, None]]
        x = r1[:, :, None, :, None] + b1 * (r2 + b2 * f2)
        vals, _ = oce_batch(fam, x.reshape(K, A * M, W * W), probs[:, None, :], backend=backend)
        out[:, p] = vals.max(axis=1)
    return out


def default_max_iter(tol, initial_residual, beta_star):
    if initial_residual <= tol:
        return 50
    return int(math.ceil(math.log(tol / initial_residual) / math.log(beta_star))) + 50


@dataclass
class IterationResult:
    values: np.ndarray
    iterations: int
    residuals: list = field(default_factory=list)
    converged: bool = True

    def __iter__(self):
        return iter((self.values, self.iterations, self.residuals))


def value_iterate(mdp: HedgingMDP, fam: UtilityFamily, f0=None, tol: float = 1e-8, max_iter=None, operator: str = "T", backend=None) -> IterationResult:
    """Fixed-point iteration ``f <- Op f``.

    Stops once ``beta*/(1 - beta*) * residual < tol``, the a-posteriori bound
    on the distance to the fixed point, so independent starts agree within
    ``2 tol``.  Returns the last iterate with ``converged=False`` when
    ``max_iter`` sweeps are exhausted.
    """
    if not tol > 0.0:
        raise ValueError("tol must be positive")
    f = np.zeros((mdp.K, mdp.n_lattice)) if f0 is None else _check_f(mdp, f0).copy()
    bs = mdp.beta_star
    ratio = bs / (1.0 - bs)
    residuals = []
    nxt = apply_operator(mdp, fam, f, operator, backend)
    res = float(np.max(np.abs(nxt - f)))
    residuals.append(res)
    if max_iter is None:
        max_iter = default_max_iter(tol, max(res, tol), bs) + int(math.ceil(max(0.0, math.log(ratio)) / -math.log(bs)))
    it = 1
    f = nxt
    while ratio * res >= tol and res > 0.0:
        if it >= max_iter:
            return IterationResult(f, it, residuals, False)
        nxt = apply_operator(mdp, fam, f, operator, backend)
        res = float(np.max(np.abs(nxt - f)))
        residuals.append(res)
        f = nxt
        it += 1
    return IterationResult(f, it, residuals, True)


class NonConvergenceError(RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


def solve(mdp, fam, operator="T", tol=1e-8, f0=None, max_iter=None, backend=None):
    res = value_iterate(mdp, fam, f0, tol, max_iter, operator, backend)
    if not res.converged:
        raise NonConvergenceError(f"{operator} iteration did not converge in {res.iterations} sweeps (residual {res.residuals[-1]:.3e})", res)
    return res


def verify_cashflow_equivalence(mdp: HedgingMDP, fam: UtilityFamily, tol: float = 1e-6, backend=None) -> dict:
    """Solve ``V = TV`` and ``W = T_alt W`` and check ``W = V + B``."""
    it_tol = min(tol * 1e-2, 1e-8)
    v = solve(mdp, fam, "T", it_tol, backend=backend)
    w = solve(mdp, fam, "T_alt", it_tol, backend=backend)
    gap = float(np.max(np.abs(w.values - v.values - mdp.book)))
    return {
        "family": fam.to_dict(),
        "max_abs_gap": gap,
        "tol": tol,
        "passed": gap < tol,
        "iterations_T": v.iterations,
        "iterations_T_alt": w.iterations,
        "V": v.values,
        "V_cash": w.values,
    }
