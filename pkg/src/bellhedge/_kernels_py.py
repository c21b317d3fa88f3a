"""Pure numpy implementation of the batched OCE kernels.

Mirrors ``_ckernels.pyx`` exactly: same family codes, same bracket, same
bisection stopping rule, so both backends agree to the last few ulps.
"""

import numpy as np

EXPECTATION = 0
WORST_CASE = 1
CVAR = 2
ENTROPY = 3
TRUNCATED_ENTROPY = 4
VICKY = 5
NORMALIZED_QUADRATIC = 6

STATUS_OK = 0
STATUS_RANGE = 1
STATUS_NONFINITE = 2
STATUS_NOCONV = 3

MAX_BISECT = 200
EXP_CAP = 700.0


def u_vec(code, lam, x):
    x = np.asarray(x, dtype=float)
    if code == EXPECTATION:
        return x.copy()
    if code == CVAR:
        return (1.0 + lam) * np.minimum(0.0, x)
    if code == ENTROPY:
        return -np.expm1(-lam * x) / lam
    if code == TRUNCATED_ENTROPY:
        pos = -np.expm1(-lam * np.maximum(x, 0.0)) / lam
        neg = x - 0.5 * lam * x * x
        return np.where(x > 0.0, pos, neg)
    if code == VICKY:
        lx = lam * x
        return x - lam * x * x / (1.0 + np.sqrt(1.0 + lx * lx))
    if code == NORMALIZED_QUADRATIC:
        cap = 1.0 / lam
        return np.where(x < cap, x - 0.5 * lam * x * x, 0.5 / lam)
    raise ValueError(f"no pointwise utility for family code {code}")


def du_vec(code, lam, x):
    x = np.asarray(x, dtype=float)
    if code == EXPECTATION:
        return np.ones_like(x)
    if code == CVAR:
        return np.where(x < 0.0, 1.0 + lam, 0.0)
    if code == ENTROPY:
        return np.exp(-lam * x)
    if code == TRUNCATED_ENTROPY:
        return np.where(x > 0.0, np.exp(-lam * np.maximum(x, 0.0)), 1.0 - lam * x)
    if code == VICKY:
        lx = lam * x
        return 1.0 - lx / np.sqrt(1.0 + lx * lx)
    if code == NORMALIZED_QUADRATIC:
        return np.where(x < 1.0 / lam, 1.0 - lam * x, 0.0)
    raise ValueError(f"no pointwise utility for family code {code}")


def _objective(code, lam, x, p, y):
    # g(y) = E[u(X + y)] - y, row-wise
    with np.errstate(over="ignore", invalid="ignore"):
        terms = p * u_vec(code, lam, x + y[:, None])
    return np.sum(np.where(p > 0.0, terms, 0.0), axis=1) - y


def oce_rows(code, lam, x, p):
    """Row-wise OCE of the discrete laws (x[i], p[i]).

    Returns ``(values, ystar, status)``; ``status`` is 0 on success.
    """
    x = np.ascontiguousarray(x, dtype=float)
    p = np.ascontiguousarray(p, dtype=float)
    n_rows = x.shape[0]
    values = np.zeros(n_rows)
    ystar = np.zeros(n_rows)
    status = np.zeros(n_rows, dtype=np.int64)
    if n_rows == 0:
        return values, ystar, status

    active = p > 0.0
    bad = ~np.all(np.isfinite(np.where(active, x, 0.0)), axis=1)
    status[bad] = STATUS_NONFINITE
    xa = np.where(active & ~bad[:, None], x, 0.0)
    hi_x = np.max(np.where(active, xa, -np.inf), axis=1)
    lo_x = np.min(np.where(active, xa, np.inf), axis=1)

    if code == EXPECTATION:
        values[:] = np.sum(np.where(active, p * xa, 0.0), axis=1)
    elif code == WORST_CASE:
        values[:] = lo_x
        ystar[:] = -lo_x
    elif code == CVAR:
        # concave piecewise-linear in y: the max sits on a breakpoint y = -x_j
        diff = np.minimum(0.0, xa[:, None, :] - xa[:, :, None])
        cand = (1.0 + lam) * np.sum(np.where(active[:, None, :], p[:, None, :] * diff, 0.0), axis=2) + xa
        cand = np.where(active, cand, -np.inf)
        j = np.argmax(cand, axis=1)
        rows = np.arange(n_rows)
        values[:] = cand[rows, j]
        ystar[:] = -xa[rows, j]
    else:
        if code == ENTROPY:
            over = lam * (hi_x - lo_x) > EXP_CAP
            status[over & (status == 0)] = STATUS_RANGE
        lo = -hi_x.copy()
        hi = -lo_x.copy()
        degenerate = hi <= lo
        for _ in range(MAX_BISECT):
            mid = 0.5 * (lo + hi)
            done = (mid <= lo) | (mid >= hi)
            if np.all(done | degenerate):
                break
            with np.errstate(over="ignore", invalid="ignore"):
                terms = p * du_vec(code, lam, xa + mid[:, None])
            phi = np.sum(np.where(active, terms, 0.0), axis=1) - 1.0
            go_up = phi > 0.0
            lo = np.where(go_up & ~done, mid, lo)
            hi = np.where(~go_up & ~done, mid, hi)
        y = 0.5 * (lo + hi)
        y = np.where(degenerate, -lo_x, y)
        ystar[:] = y
        values[:] = _objective(code, lam, xa, p, y)
        values[degenerate] = lo_x[degenerate]

    values[status != 0] = np.nan
    return values, ystar, status
