"""L1-penalised least squares by coordinate descent.

The objective is ``(1/(2n)) * ||y - mu - X theta||^2 + lam * ||theta_std||_1``
where ``theta_std`` are the coefficients of the internally standardised
design (zero mean, unit population variance). Coefficients are reported on
the original column scale; the intercept is never penalised.

Sweeps stop once no standardised coefficient moves by more than ``TOL``,
measured after dividing the centred response by its root mean square so
the rule does not depend on the units of ``y``. KKT residuals are reported
in the same scaled units.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import kernels

TOL = 1e-8
MAX_SWEEPS = 100_000
KKT_TOL = 1e-6
SWEEP_BLOCK = 256


@dataclass(frozen=True, eq=False)
class LassoModel:
    intercept: float
    coef: np.ndarray = field(repr=False)
    lam: float
    names: tuple[str, ...] = ()
    means: np.ndarray = field(default=None, repr=False)
    scales: np.ndarray = field(default=None, repr=False)
    objective: float = float("nan")
    kkt_residual: float = float("nan")
    n_sweeps: int = 0

    def predict(self, X) -> np.ndarray:
        X = np.asarray(getattr(X, "values", X), dtype=np.float64)
        return self.intercept + X @ self.coef

    @property
    def coef_std(self) -> np.ndarray:
        return self.coef * self.scales

    def coefficients(self) -> dict[str, float]:
        return dict(zip(self.names, self.coef.tolist()))


@dataclass(frozen=True)
class CvReport:
    lambdas: tuple[float, ...]
    mean_mse: tuple[float, ...]
    chosen: float
    chosen_index: int
    folds: tuple[tuple[int, int], ...]


def _as_matrix(X):
    names = tuple(getattr(X, "names", ()))
    X = np.asarray(getattr(X, "values", X), dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("design must be two-dimensional")
    return X, names


class _Standardized:
    """Column-standardised copy of a design; constant columns get ``col_sq == 0``."""

    def __init__(self, X, y):
        n = X.shape[0]
        self.means = X.mean(axis=0)
        centered = X - self.means
        scales = np.sqrt((centered * centered).sum(axis=0) / n)
        live = scales > 1e-12 * np.maximum(np.abs(self.means), 1.0)
        self.scales = np.where(live, scales, 1.0)
        self.live = live
        self.Z = np.asfortranarray(np.where(live, centered / self.scales, 0.0))
        self.col_sq = live.astype(np.float64)
        self.ybar = float(y.mean())
        self.yc = y - self.ybar
        self.n = n
        # the solver works on yc / y_scale so its step tolerance is scale-free
        rms = float(np.sqrt(self.yc @ self.yc / n))
        self.y_scale = rms if rms > 0 else 1.0

    def lambda_max(self) -> float:
        if not self.live.any():
            return 0.0
        return float(np.abs(self.Z.T @ self.yc).max() / self.n)


def lambda_max(X, y) -> float:
    """Smallest penalty at which every coefficient is zero."""
    X, _ = _as_matrix(X)
    return _Standardized(X, np.asarray(y, dtype=np.float64)).lambda_max()


def _support_step(Z, r, beta, lam, live):
    """Feature-sign active-set search started from the current point; ``True`` when it solves the LASSO.

    On the current support with fixed signs the KKT equations are solved
    exactly. Between the old and new coefficients, the best of the end
    point and every sign-crossing point is taken (columns reaching zero
    leave the support). Once the signs are consistent, the inactive column
    violating ``|gradient| <= lam`` the most joins with the sign of its
    residual correlation. Singular supports slide along a null direction
    instead. Every accepted move lowers the objective; ``beta`` and ``r``
    are updated in place, and the search gives up after a bounded number of
    moves, leaving the rest to coordinate descent.
    """
    n, p = Z.shape

    def objective(res, coef):
        return 0.5 * float(res @ res) / n + lam * float(np.abs(coef).sum())

    act = np.flatnonzero(beta != 0)
    signs = np.sign(beta[act])
    for _ in range(4 * p + 8):
        if act.size == 0:
            consistent = True
        else:
            ZA = Z[:, act]
            old = beta[act]
            G = ZA.T @ ZA / n
            try:
                factor = cho_factor(G, lower=True, check_finite=False)
            except np.linalg.LinAlgError:
                factor = None
            if factor is None:
                # slide along a null direction (residual fixed, l1 norm not increasing)
                # until a coefficient reaches zero
                _, vecs = np.linalg.eigh(G)
                d = vecs[:, 0] if signs @ vecs[:, 0] <= 0 else -vecs[:, 0]
                hits = np.sign(d) == -signs
                if not hits.any():
                    return False
                frac = np.where(hits, -old / np.where(hits, d, 1.0), np.inf)
                k = int(np.argmin(frac))
                cand = [old + frac[k] * d]
                cand[0][k] = 0.0
            else:
                new = cho_solve(factor, ZA.T @ (r + ZA @ old) / n - lam * signs, check_finite=False)
                if not np.all(np.isfinite(new)):
                    return False
                step = new - old
                crossed = (np.sign(new) != signs) & (step != 0)
                cand = [new]
                for j in np.flatnonzero(crossed & (old != 0)):
                    t = -old[j] / step[j]
                    if 0 < t < 1:
                        x = old + t * step
                        x[j] = 0.0
                        cand.append(x)
            here = objective(r, old)
            best, best_obj, best_r = None, here * (1 + 1e-12), None
            for x in cand:
                rx = r - ZA @ (x - old)
                ox = objective(rx, x)
                if ox < best_obj or (best is None and ox <= best_obj):
                    best, best_obj, best_r = x, ox, rx
            if best is None:
                return False
            consistent = factor is not None and best is cand[0] and not crossed.any()
            beta[act] = best
            r[:] = best_r
            keep = best != 0
            act, signs = act[keep], np.sign(best[keep])
        if not consistent:
            continue
        inactive = np.flatnonzero(live & (beta == 0))
        if inactive.size == 0:
            return True
        corr = Z[:, inactive].T @ r / n
        j = int(np.argmax(np.abs(corr)))
        if abs(corr[j]) <= lam * (1 + 1e-12):
            return True
        act = np.append(act, inactive[j])
        signs = np.append(signs, np.sign(corr[j]))
    return False


def _descend(Z, r, beta, col_sq, lam, tol, max_sweeps, cd, history):
    """Cyclic coordinate descent, with support steps between blocks of sweeps.

    Highly collinear columns make plain coordinate descent crawl; after
    each block the exact solution on the current support is tried, and a
    following sweep confirms convergence under the usual rule.
    """
    done = 0
    live = col_sq != 0
    while done < max_sweeps:
        block = min(SWEEP_BLOCK, max_sweeps - done)
        hist = history[done:] if history.size > done else history[:0]
        sweeps, converged = cd(Z, r, beta, col_sq, lam, tol, block, hist)
        done += sweeps
        if converged:
            return done, True
        _support_step(Z, r, beta, lam, live)
    return done, False


def _solve(std, lam, beta, tol, max_sweeps, cd, history):
    """Coordinate descent on the response-scaled problem; ``beta`` is in scaled units."""
    yc = std.yc / std.y_scale
    r = yc - std.Z @ beta if beta.any() else yc.copy()
    sweeps, converged = _descend(std.Z, r, beta, std.col_sq, float(lam) / std.y_scale, tol, max_sweeps, cd,
                                 history)
    if history.size:
        history *= std.y_scale**2
    return r, sweeps, converged


def _finish(std, beta, r, lam, names, sweeps):
    """Model from scaled ``beta`` and residual ``r``; the KKT residual is in scaled units."""
    coef = np.where(std.live, beta * std.y_scale / std.scales, 0.0)
    intercept = std.ybar - float(coef @ std.means)
    grad = -(std.Z.T @ r) / std.n
    kkt = _kkt(grad, beta, lam / std.y_scale, std.live)
    r = r * std.y_scale
    obj = 0.5 * float(r @ r) / std.n + lam * float(np.abs(beta).sum()) * std.y_scale
    return LassoModel(intercept, coef, float(lam), names, std.means, std.scales, obj, kkt, sweeps)


def _kkt(grad, beta, lam, live):
    nz = beta != 0
    viol = np.where(nz, np.abs(grad + lam * np.sign(beta)), np.maximum(np.abs(grad) - lam, 0.0))
    viol = viol[live]
    return float(viol.max()) if viol.size else 0.0


def fit(X, y, lam, *, tol=TOL, max_sweeps=MAX_SWEEPS, backend=None, history=None,
        warm_start=None) -> LassoModel:
    """Fit at a single penalty ``lam`` (>= 0).

    ``history``, if given, is a float array that receives the objective after
    each sweep (as many sweeps as it has room for).
    """
    X, names = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] < 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"need matching rows >= 2, got X {X.shape} and y {y.shape}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite entries in design or response")
    if lam < 0:
        raise ValueError("penalty must be non-negative")
    std = _Standardized(X, y)
    cd = kernels.get_backend(backend)
    beta = np.zeros(X.shape[1]) if warm_start is None else np.array(warm_start, dtype=np.float64) / std.y_scale
    hist = np.empty(0) if history is None else history
    r, sweeps, converged = _solve(std, lam, beta, tol, max_sweeps, cd, hist)
    if not converged:
        raise RuntimeError(f"coordinate descent did not converge in {max_sweeps} sweeps")
    return _finish(std, beta, r, lam, names, sweeps)


def fit_path(X, y, lambdas, *, tol=TOL, max_sweeps=MAX_SWEEPS, backend=None) -> list[LassoModel]:
    """Fit a decreasing sequence of penalties with warm starts.

    Models are returned in the order of ``lambdas`` as given.
    """
    X, names = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    std = _Standardized(X, y)
    cd = kernels.get_backend(backend)
    order = np.argsort(-np.asarray(lambdas, dtype=np.float64), kind="stable")
    beta = np.zeros(X.shape[1])
    out = [None] * len(lambdas)
    empty = np.empty(0)
    for i in order:
        lam = float(lambdas[i])
        r, sweeps, converged = _solve(std, lam, beta, tol, max_sweeps, cd, empty)
        if not converged:
            raise RuntimeError(f"coordinate descent did not converge at lambda={lam}")
        out[i] = _finish(std, beta.copy(), r, lam, names, sweeps)
    return out


def _path_predictions(Xtr, ytr, Xva, lambdas_desc, tol, max_sweeps, cd):
    """Validation predictions for each penalty (descending), without building models."""
    std = _Standardized(Xtr, ytr)
    beta = np.zeros(Xtr.shape[1])
    r = std.yc / std.y_scale
    Zva = np.where(std.live, (Xva - std.means) / std.scales, 0.0)
    preds = np.empty((len(lambdas_desc), Xva.shape[0]))
    empty = np.empty(0)
    for k, lam in enumerate(lambdas_desc):
        _, converged = _descend(std.Z, r, beta, std.col_sq, float(lam) / std.y_scale, tol, max_sweeps, cd, empty)
        if not converged:
            raise RuntimeError(f"coordinate descent did not converge at lambda={lam}")
        preds[k] = std.ybar + std.y_scale * (Zva @ beta)
    return preds


def contiguous_folds(n: int, k: int) -> list[tuple[int, int]]:
    edges = np.linspace(0, n, k + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def cv_select(X, y, lambda_grid, k_folds=3, *, tol=TOL, max_sweeps=MAX_SWEEPS, backend=None) -> CvReport:
    """Blocked k-fold cross-validation over ``lambda_grid``.

    Folds are contiguous blocks of rows in their given (time) order; each
    block is held out once while the rest trains. The penalty with the lowest
    mean validation MSE wins; ties go to the larger penalty.
    """
    grid = [float(v) for v in lambda_grid]
    if not grid:
        raise ValueError("empty lambda grid")
    if any(v < 0 for v in grid):
        raise ValueError("penalties must be non-negative")
    if k_folds < 2:
        raise ValueError("need at least two folds")
    X, _ = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    if n < 2 * k_folds:
        raise ValueError(f"{n} rows are too few for {k_folds} folds")
    cd = kernels.get_backend(backend)
    desc = sorted(set(grid), reverse=True)
    sse = np.zeros(len(desc))
    folds = contiguous_folds(n, k_folds)
    for a, b in folds:
        train = np.r_[0:a, b:n]
        preds = _path_predictions(X[train], y[train], X[a:b], desc, tol, max_sweeps, cd)
        sse += ((preds - y[a:b]) ** 2).mean(axis=1)
    mean_mse = sse / len(folds)
    best = 0
    for k in range(1, len(desc)):
        if mean_mse[k] < mean_mse[best]:
            best = k
    by_value = dict(zip(desc, mean_mse.tolist()))
    chosen = desc[best]
    return CvReport(tuple(grid), tuple(by_value[v] for v in grid), chosen, grid.index(chosen), tuple(folds))


def kkt_residual(model: LassoModel, X, y) -> float:
    """Largest KKT violation of ``model`` on ``(X, y)`` in standardised, response-scaled units."""
    X, _ = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    std = _Standardized(X, y)
    beta = np.where(std.live, model.coef * std.scales, 0.0) / std.y_scale
    r = std.yc / std.y_scale - std.Z @ beta
    grad = -(std.Z.T @ r) / std.n
    return _kkt(grad, beta, model.lam / std.y_scale, std.live)


def select_and_fit(X, y, ratios, k_folds=3, backend=None) -> tuple[LassoModel, CvReport]:
    """Cross-validate penalties given as fractions of ``lambda_max``, then refit."""
    lmax = lambda_max(X, y)
    grid = [r * lmax for r in ratios]
    if lmax == 0.0:
        return fit(X, y, 0.0, backend=backend), None
    report = cv_select(X, y, grid, k_folds, backend=backend)
    return fit(X, y, report.chosen, backend=backend), report
