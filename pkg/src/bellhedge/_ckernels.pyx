# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled batched OCE kernels; see ``_kernels_py`` for the reference twin."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, expm1, sqrt, isfinite, INFINITY, NAN

cnp.import_array()

cdef enum:
    EXPECTATION = 0
    WORST_CASE = 1
    CVAR = 2
    ENTROPY = 3
    TRUNCATED_ENTROPY = 4
    VICKY = 5
    NORMALIZED_QUADRATIC = 6

cdef enum:
    STATUS_OK = 0
    STATUS_RANGE = 1
    STATUS_NONFINITE = 2

cdef enum:
    MAX_BISECT = 200

cdef double EXP_CAP = 700.0


cdef inline double _u(int code, double lam, double x) noexcept nogil:
    cdef double lx
    if code == EXPECTATION:
        return x
    if code == CVAR:
        return (1.0 + lam) * (x if x < 0.0 else 0.0)
    if code == ENTROPY:
        return -expm1(-lam * x) / lam
    if code == TRUNCATED_ENTROPY:
        if x > 0.0:
            return -expm1(-lam * x) / lam
        return x - 0.5 * lam * x * x
    if code == VICKY:
        lx = lam * x
        return x - lam * x * x / (1.0 + sqrt(1.0 + lx * lx))
    if code == NORMALIZED_QUADRATIC:
        if x < 1.0 / lam:
            return x - 0.5 * lam * x * x
        return 0.5 / lam
    return NAN


cdef inline double _du(int code, double lam, double x) noexcept nogil:
    cdef double lx
    if code == EXPECTATION:
        return 1.0
    if code == CVAR:
        return (1.0 + lam) if x < 0.0 else 0.0
    if code == ENTROPY:
        return exp(-lam * x)
    if code == TRUNCATED_ENTROPY:
        if x > 0.0:
            return exp(-lam * x)
        return 1.0 - lam * x
    if code == VICKY:
        lx = lam * x
        return 1.0 - lx / sqrt(1.0 + lx * lx)
    if code == NORMALIZED_QUADRATIC:
        if x < 1.0 / lam:
            return 1.0 - lam * x
        return 0.0
    return NAN


cdef void _row(int code, double lam, const double[:] x, const double[:] p,
               double* value, double* ystar, long* status) noexcept nogil:
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i, j, best_j
    cdef double lo_x = INFINITY
    cdef double hi_x = -INFINITY
    cdef double acc, cand, best, lo, hi, mid, phi, y, d
    cdef int it

    status[0] = STATUS_OK
    for i in range(n):
        if p[i] > 0.0:
            if not isfinite(x[i]):
                status[0] = STATUS_NONFINITE
                value[0] = NAN
                ystar[0] = 0.0
                return
            if x[i] < lo_x:
                lo_x = x[i]
            if x[i] > hi_x:
                hi_x = x[i]

    if code == EXPECTATION:
        acc = 0.0
        for i in range(n):
            if p[i] > 0.0:
                acc = acc + p[i] * x[i]
        value[0] = acc
        ystar[0] = 0.0
        return

    if code == WORST_CASE:
        value[0] = lo_x
        ystar[0] = -lo_x
        return

    if code == CVAR:
        best = -INFINITY
        best_j = 0
        for j in range(n):
            if p[j] > 0.0:
                acc = 0.0
                for i in range(n):
                    if p[i] > 0.0:
                        d = x[i] - x[j]
                        acc = acc + p[i] * (d if d < 0.0 else 0.0)
                cand = (1.0 + lam) * acc + x[j]
                if cand > best:
                    best = cand
                    best_j = j
        value[0] = best
        ystar[0] = -x[best_j]
        return

    if code == ENTROPY and lam * (hi_x - lo_x) > EXP_CAP:
        status[0] = STATUS_RANGE
        value[0] = NAN
        ystar[0] = 0.0
        return

    lo = -hi_x
    hi = -lo_x
    if hi <= lo:
        value[0] = lo_x
        ystar[0] = -lo_x
        return
    for it in range(MAX_BISECT):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        phi = -1.0
        for i in range(n):
            if p[i] > 0.0:
                phi = phi + p[i] * _du(code, lam, x[i] + mid)
        if phi > 0.0:
            lo = mid
        else:
            hi = mid
    y = 0.5 * (lo + hi)
    acc = 0.0
    for i in range(n):
        if p[i] > 0.0:
            acc = acc + p[i] * _u(code, lam, x[i] + y)
    value[0] = acc - y
    ystar[0] = y


def oce_rows(int code, double lam, x, p):
    cdef const double[:, :] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, :] pv = np.ascontiguousarray(p, dtype=np.float64)
    cdef Py_ssize_t n_rows = xv.shape[0]
    values = np.zeros(n_rows)
    ystar = np.zeros(n_rows)
    status = np.zeros(n_rows, dtype=np.int64)
    cdef double[:] vv = values
    cdef double[:] yv = ystar
    cdef long[:] sv = status
    cdef Py_ssize_t r
    with nogil:
        for r in range(n_rows):
            _row(code, lam, xv[r], pv[r], &vv[r], &yv[r], &sv[r])
    return values, ystar, status
