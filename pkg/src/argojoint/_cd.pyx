# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled coordinate-descent sweeps for the L1-penalised least-squares solver."""

import numpy as np

from libc.math cimport fabs

DEF REFRESH = 64


cdef inline double _soft(double x, double t) noexcept nogil:
    if x > t:
        return x - t
    if x < -t:
        return x + t
    return 0.0


def cd_lasso(const double[::1, :] Z, double[::1] r, double[::1] beta,
             const double[::1] col_sq, double lam, double tol,
             long max_sweeps, double[::1] history):
    """Run cyclic coordinate descent in place using covariance updates.

    ``r`` must hold ``y - Z @ beta`` on entry and is consistent on return.
    The gradient ``Z.T @ r / n`` is carried through the Gram matrix, so a
    coordinate update costs O(p) instead of O(n); it is recomputed from the
    residual every ``REFRESH`` sweeps to stop rounding drift. Columns with
    ``col_sq == 0`` are skipped. When ``history`` is non-empty the objective
    after each sweep is written to it.

    Returns ``(n_sweeps, converged)``.
    """
    cdef Py_ssize_t n = Z.shape[0]
    cdef Py_ssize_t p = Z.shape[1]
    cdef Py_ssize_t i, j, k
    cdef long sweep = 0
    cdef long n_hist = history.shape[0]
    cdef double inv_n = 1.0 / n
    cdef double rho, old, new, delta, max_delta, obj, l1, acc
    cdef bint converged = False

    Za = np.asarray(Z)
    cdef double[::1, :] G = np.asfortranarray(Za.T @ Za) * inv_n
    cdef double[::1] g = (Za.T @ np.asarray(r)) * inv_n
    cdef double[::1] start = np.array(beta, dtype=np.float64)
    cdef double[::1] rr = np.empty(n)

    with nogil:
        while sweep < max_sweeps:
            if sweep > 0 and sweep % REFRESH == 0:
                for i in range(n):
                    acc = r[i]
                    for j in range(p):
                        acc = acc - Z[i, j] * (beta[j] - start[j])
                    rr[i] = acc
                for j in range(p):
                    acc = 0.0
                    for i in range(n):
                        acc = acc + Z[i, j] * rr[i]
                    g[j] = acc * inv_n
            max_delta = 0.0
            for j in range(p):
                if col_sq[j] == 0.0:
                    continue
                old = beta[j]
                rho = g[j] + col_sq[j] * old
                new = _soft(rho, lam) / col_sq[j]
                delta = new - old
                if delta != 0.0:
                    for k in range(p):
                        g[k] = g[k] - delta * G[k, j]
                    beta[j] = new
                    if fabs(delta) > max_delta:
                        max_delta = fabs(delta)
            if sweep < n_hist:
                obj = 0.0
                for i in range(n):
                    acc = r[i]
                    for j in range(p):
                        acc = acc - Z[i, j] * (beta[j] - start[j])
                    obj = obj + acc * acc
                l1 = 0.0
                for j in range(p):
                    l1 = l1 + fabs(beta[j])
                history[sweep] = 0.5 * obj * inv_n + lam * l1
            sweep += 1
            if max_delta < tol:
                converged = True
                break
        for i in range(n):
            acc = r[i]
            for j in range(p):
                acc = acc - Z[i, j] * (beta[j] - start[j])
            rr[i] = acc
        for i in range(n):
            r[i] = rr[i]
    return sweep, converged
