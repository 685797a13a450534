"""Pure-Python coordinate descent; same contract as the compiled ``_cd`` module."""

import numpy as np

REFRESH = 64  # sweeps between exact gradient recomputations


def cd_lasso(Z, r, beta, col_sq, lam, tol, max_sweeps, history):
    n, p = Z.shape
    inv_n = 1.0 / n
    n_hist = history.shape[0]
    active = [j for j in range(p) if col_sq[j] != 0.0]
    G = (Z.T @ Z) * inv_n
    g = (Z.T @ r) * inv_n
    start = beta.copy()
    sweep = 0
    converged = False
    while sweep < max_sweeps:
        if sweep and sweep % REFRESH == 0:
            g = (Z.T @ (r - Z @ (beta - start))) * inv_n
        max_delta = 0.0
        for j in active:
            old = beta[j]
            rho = g[j] + col_sq[j] * old
            if rho > lam:
                new = (rho - lam) / col_sq[j]
            elif rho < -lam:
                new = (rho + lam) / col_sq[j]
            else:
                new = 0.0
            delta = new - old
            if delta != 0.0:
                g -= delta * G[:, j]
                beta[j] = new
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        if sweep < n_hist:
            res = r - Z @ (beta - start)
            history[sweep] = 0.5 * float(res @ res) * inv_n + lam * float(np.abs(beta).sum())
        sweep += 1
        if max_delta < tol:
            converged = True
            break
    r -= Z @ (beta - start)
    return sweep, converged
