"""State-level second step: structured-covariance shrinkage over raw estimates.

For state ``m`` the target is the weekly increment ``Z_tau = y_tau - y_{tau-1}``
and the predictor vector is

    W_tau = (Z_{tau-1},
             {yGT_{tau,m'} - y_{tau-1,m'}} for m' in the region of m,
             yREG_tau - yREG_{tau-1},
             yNAT_tau - yNAT_{tau-1},
             {F_{tau-1,m'}} for m' in the region of m)

where ``F`` is the other disease's weekly increment (%ILI increments for
COVID-19 targets, COVID-19 case increments for %ILI). Means and covariances
come from a trailing window of weeks and are structured before the
shrinkage predictor ``Z = mu_Z + S_ZW/2 (S_WW/2 + D_WW/2)^-1 (W - mu_W)``.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import lasso
from .features import build_ili_design, build_weekly_design, resolve_lag_table
from .imputation import weekly_views
from .memo import memo
from .panel import as_date
from .tables import ForecastTable

log = logging.getLogger(__name__)

JITTER = (0.0, 1e-10, 1e-8, 1e-6)
MAX_CONDITION = 1e14
WEEK = dt.timedelta(days=7)


class SingularCovariance(np.linalg.LinAlgError):
    pass


# -- first step ---------------------------------------------------------------


def raw_estimate(bundle, cfg, geo, target, week, horizon=1, backend=None) -> float:
    """Search-and-AR LASSO estimate of ``target`` at ``week`` from data through ``week - horizon``."""
    week = as_date(week)
    as_of = week - horizon * WEEK

    def compute():
        if target == "ili" and geo == bundle.geography.nation:
            if horizon == 1:
                dm, y = build_ili_design(bundle, geo, as_of, cfg)
            else:
                dm, y = build_weekly_design(bundle, geo, "ili", as_of, horizon, cfg.ili_train_weeks,
                                            cfg.ili_ar_lags, exog_cases=True)
        else:
            table = None if target == "ili" else resolve_lag_table(bundle, cfg, as_of)
            dm, y = build_weekly_design(bundle, geo, target, as_of, horizon, cfg.raw_train_weeks,
                                        cfg.ar_lags_weekly, table)
        if not dm.group("search"):
            raise ValueError(f"no search panel for {geo} ({target})")
        model, _ = lasso.select_and_fit(dm, y, cfg.lambda_grid, cfg.cv_folds, backend=backend)
        return float(model.predict(dm.forecast_row[None, :])[0])

    return memo(bundle.token, ("raw", cfg.cache_key(), geo, target, week, horizon), compute)


@dataclass(frozen=True, eq=False)
class RawEstimates:
    target: str
    level: str
    horizon: int
    weeks: tuple[dt.date, ...]
    values: dict = field(repr=False)

    def get(self, geo, week) -> float:
        return float(self.values[geo][self.weeks.index(as_date(week))])


def level_geos(geography, level) -> list[str]:
    if level == "state":
        return geography.states
    if level == "region":
        return geography.regions
    if level == "nation":
        return [geography.nation]
    raise ValueError(f"unknown level {level!r}")


def first_step_raw(bundle, cfg, T, level, target="cases", horizon=1, weeks=None, backend=None) -> RawEstimates:
    """Raw estimates for every geo of ``level``.

    By default the weeks are the ``cfg.state_train_weeks`` weeks ending at
    ``T`` followed by the forecast week ``T + horizon``.
    """
    T = as_date(T)
    if weeks is None:
        n = cfg.state_train_weeks
        weeks = [T - k * WEEK for k in range(n - 1, -1, -1)] + [T + horizon * WEEK]
    weeks = tuple(as_date(w) for w in weeks)
    geos = level_geos(bundle.geography, level)
    values = {
        g: np.array([raw_estimate(bundle, cfg, g, target, w, horizon, backend) for w in weeks])
        for g in geos
    }
    return RawEstimates(target, level, horizon, weeks, values)


# -- covariance ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CovarianceSpec:
    """Scalars and blocks of the structured covariance for one state.

    ``index`` is the position of the state within its region's sorted member list.
    """

    sigma2_zz: float
    rho: float
    sigma2_ff: float
    sigma2_zf: float
    rho_f: float
    zz_block: np.ndarray = field(repr=False)
    ff_block: np.ndarray = field(repr=False)
    gt_block: np.ndarray = field(repr=False)
    sigma2_reg: float = 0.0
    sigma2_nat: float = 0.0
    mu_z: float = 0.0
    mu_w: np.ndarray = field(default=None, repr=False)
    index: int = 0

    def __post_init__(self):
        k = np.asarray(self.zz_block).shape[0]
        for name in ("zz_block", "ff_block", "gt_block"):
            a = np.atleast_2d(np.asarray(getattr(self, name), dtype=np.float64))
            if a.shape != (k, k):
                raise ValueError(f"{name} must be {k}x{k}")
            object.__setattr__(self, name, (a + a.T) / 2.0)
        for name in ("sigma2_zz", "sigma2_ff", "sigma2_reg", "sigma2_nat"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if abs(self.rho) > 1 or abs(self.rho_f) > 1:
            raise ValueError("correlations must lie in [-1, 1]")
        if self.mu_w is None:
            object.__setattr__(self, "mu_w", np.zeros(2 * k + 3))

    @property
    def n_neighbors(self) -> int:
        return self.zz_block.shape[0]


def _var(x) -> float:
    return float(np.var(x, ddof=1)) if len(x) > 1 else 0.0


def _cov(a, b) -> float:
    return float(np.cov(a, b, ddof=1)[0, 1])


def _block(x) -> np.ndarray:
    return np.atleast_2d(np.cov(x, rowvar=False, ddof=1))


def lag1_autocorrelation(z) -> float:
    z = np.asarray(z, dtype=np.float64)
    c = z - z.mean()
    denom = float(c @ c)
    if denom == 0.0 or z.size < 2:
        return 0.0
    return float(np.clip((c[1:] @ c[:-1]) / denom, -1.0, 1.0))


@dataclass(frozen=True, eq=False)
class CovarianceWindow:
    """Aligned training-window arrays for one state (rows are weeks).

    ``z``: target increments; ``z_neighbors``: increments of every region
    member; ``gt_error``, ``reg_error``, ``nat_error``: raw estimate minus
    truth; ``f``: other-disease increments of the region members in the same
    week; ``f_prev``: the state's own other-disease increment one week
    earlier; ``w``: predictor vectors.
    """

    z: np.ndarray
    z_neighbors: np.ndarray
    gt_error: np.ndarray
    reg_error: np.ndarray
    nat_error: np.ndarray
    f: np.ndarray
    f_prev: np.ndarray
    w: np.ndarray
    index: int


def estimate_covariance(win: CovarianceWindow) -> CovarianceSpec:
    n, k = win.z_neighbors.shape
    if n < k + 5:
        raise ValueError(f"window of {n} weeks is too short for {k} neighbours (need {k + 5})")
    i = win.index
    s_zz = _var(win.z)
    s_zf = _cov(win.z, win.f[:, i])
    rho_f = float(np.clip(_cov(win.z, win.f_prev) / s_zf, -1.0, 1.0)) if s_zf != 0 else 0.0
    return CovarianceSpec(
        sigma2_zz=s_zz,
        rho=lag1_autocorrelation(win.z),
        sigma2_ff=_var(win.f[:, i]),
        sigma2_zf=s_zf,
        rho_f=rho_f,
        zz_block=_block(win.z_neighbors),
        ff_block=_block(win.f),
        gt_block=_block(win.gt_error),
        sigma2_reg=_var(win.reg_error),
        sigma2_nat=_var(win.nat_error),
        mu_z=float(win.z.mean()),
        mu_w=win.w.mean(axis=0),
        index=i,
    )


def assemble_sigma(spec: CovarianceSpec):
    """``(S_ZW, S_WW, D_WW)`` in predictor order Z, GT block, reg, nat, F block.

    Entries pairing the state's increment with a region member's search
    estimate use that member's covariance with the state (row ``index`` of
    the neighbour block), which is ``sigma2_zz`` for the state itself.
    Cross-disease entries are replicated across members.
    """
    k = spec.n_neighbors
    zz, r = spec.sigma2_zz, spec.rho
    c = spec.zz_block[spec.index].copy()
    c[spec.index] = zz
    cross = spec.rho_f * spec.sigma2_zf
    gt = slice(1, 1 + k)
    reg, nat = 1 + k, 2 + k
    fb = slice(3 + k, 3 + 2 * k)
    dim = 2 * k + 3

    s_zw = np.empty(dim)
    s_zw[0] = r * zz
    s_zw[gt] = c
    s_zw[reg] = zz
    s_zw[nat] = zz
    s_zw[fb] = cross

    s = np.empty((dim, dim))
    s[0, 0] = zz
    s[0, gt] = r * c
    s[0, reg] = s[0, nat] = r * zz
    s[0, fb] = spec.sigma2_zf
    s[gt, gt] = spec.zz_block + spec.gt_block
    s[gt, reg] = s[gt, nat] = c
    s[reg, reg] = zz + spec.sigma2_reg
    s[nat, nat] = zz + spec.sigma2_nat
    s[reg, nat] = zz
    s[1:fb.start, fb] = cross
    s[fb, fb] = spec.ff_block
    lower = np.tril_indices(dim, -1)
    s[lower] = s.T[lower]
    return s_zw, s, np.diag(np.diag(s))


def shrinkage_predict(mu_z, mu_w, s_zw, s_ww, d_ww, w) -> float:
    """``mu_z + 1/2 S_ZW (1/2 S_WW + 1/2 D_WW)^-1 (w - mu_w)`` with escalating diagonal jitter."""
    coef = shrinkage_weights(s_zw, s_ww, d_ww)
    return float(mu_z + coef @ (np.asarray(w, dtype=np.float64) - mu_w))


def shrinkage_weights(s_zw, s_ww, d_ww) -> np.ndarray:
    a = 0.5 * np.asarray(s_ww, dtype=np.float64) + 0.5 * np.asarray(d_ww, dtype=np.float64)
    s_zw = np.asarray(s_zw, dtype=np.float64)
    if not s_zw.any():
        return np.zeros_like(s_zw)
    dim = a.shape[0]
    scale = np.trace(a) / dim
    for eps in JITTER:
        m = a + eps * scale * np.eye(dim) if eps else a
        try:
            if np.linalg.cond(m) > MAX_CONDITION:
                continue
            x = np.linalg.solve(m, 0.5 * s_zw)
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(x)):
            return x
    raise SingularCovariance("shrinkage system is singular after maximum jitter")


# -- assembling windows from data ---------------------------------------------


def _other_disease(bundle, target, imputations, geo):
    """Weekly other-disease levels per draw: array ``(n_draws, n_weeks)`` and the first week."""
    if target == "ili":
        s = bundle.weekly("cases", geo)
        return s.values[None, :], s.start
    iset = None if imputations is None else imputations.get(geo)
    if iset is not None and iset.n_weeks:
        return weekly_views(iset), iset.weekly.start
    s = bundle.ili[geo]
    return s.values[None, :], s.start


def _pick(values, start, weeks):
    idx = [(w - start).days // 7 for w in weeks]
    if min(idx) < 0 or max(idx) >= values.shape[-1]:
        raise ValueError(f"other-disease series does not cover {weeks[0]}..{weeks[-1]}")
    return values[..., idx]


def _window_sum(s, first, last) -> float:
    return float(s.values[s.index_of(first) : s.index_of(last) + 1].sum())


class _StateData:
    """Everything the predictor needs for one state at one as-of date.

    Region and nation raw estimates are put on the state's scale by the
    state's share of the aggregate over the ``cfg.share_weeks`` weeks before
    the estimated week.
    """

    def __init__(self, bundle, imputations, cfg, T, target, state, backend):
        geo = bundle.geography
        self.state = state
        self.members = list(geo.neighbors(state))
        self.index = self.members.index(state)
        self.aggregates = [geo.region_of(state), geo.nation]
        self.cfg, self.bundle, self.target, self.backend = cfg, bundle, target, backend
        self.T = T
        L = cfg.state_train_weeks
        self.weeks = [T - k * WEEK for k in range(L - 1, -1, -1)]
        # truth and other-disease levels on weeks s0-2, s0-1, s0, ..., T
        span = [self.weeks[0] - 2 * WEEK, self.weeks[0] - WEEK] + self.weeks
        self.y = {}
        for g in self.members + self.aggregates:
            truth = bundle.weekly(target, g)
            self.y[g] = np.array([truth.value_at(w) for w in span])
        self.raw = {g: self._raw(g, self.weeks, 1) for g in self.members}
        for g in self.aggregates:
            self.raw[g] = self._raw(g, self.weeks, 1) * np.array([self.share(g, w - WEEK) for w in self.weeks])
        self.other = {}
        for g in self.members:
            vals, start = _other_disease(bundle, target, imputations, g)
            self.other[g] = _pick(vals, start, span)

    def _raw(self, g, weeks, h):
        return np.array([raw_estimate(self.bundle, self.cfg, g, self.target, w, h, self.backend) for w in weeks])

    def share(self, g, last) -> float:
        first = last - (self.cfg.share_weeks - 1) * WEEK
        try:
            own = _window_sum(self.bundle.weekly(self.target, self.state), first, last)
            agg = _window_sum(self.bundle.weekly(self.target, g), first, last)
        except KeyError:
            raise ValueError(f"no {self.cfg.share_weeks}-week share history for {self.state} before {last}") from None
        return own / agg if agg > 0 else 0.0

    def n_draws(self):
        return max(v.shape[0] for v in self.other.values())

    def other_draw(self, g, n):
        v = self.other[g]
        return v[min(n, v.shape[0] - 1)]

    def window(self, n):
        """Training window for draw ``n`` and the other-disease increments of every member."""
        y, m, members = self.y, self.state, self.members
        inc = {g: np.diff(y[g]) for g in members}  # inc[g][1 + j]: increment at window week j
        own_prev = y[m][1:-1]  # state's level one week before each window week
        own_now = y[m][2:]
        f_inc = {g: np.diff(self.other_draw(g, n)) for g in members}
        f = np.column_stack([f_inc[g][1:] for g in members])
        f_prev = np.column_stack([f_inc[g][:-1] for g in members])
        reg, nat = (self.raw[g] for g in self.aggregates)
        gt_inc = np.column_stack([self.raw[g] - y[g][1:-1] for g in members])
        w = np.column_stack([inc[m][:-1], gt_inc, reg - own_prev, nat - own_prev, f_prev])
        win = CovarianceWindow(
            z=inc[m][1:],
            z_neighbors=np.column_stack([inc[g][1:] for g in members]),
            gt_error=np.column_stack([self.raw[g] - y[g][2:] for g in members]),
            reg_error=reg - own_now,
            nat_error=nat - own_now,
            f=f,
            f_prev=f_prev[:, self.index],
            w=w,
            index=self.index,
        )
        return win, f_inc

    def forecast(self, horizons, n):
        """Levels for ``horizons`` by iterating the one-step predictor.

        Step ``k`` uses the direct ``k``-week raw estimates, takes the
        previous step's predicted levels as the base of each increment, and
        sets the other-disease block (unknown beyond the as-of date) to its
        window mean.
        """
        win, f_inc = self.window(n)
        spec = estimate_covariance(win)
        weights = shrinkage_weights(*assemble_sigma(spec))
        m, members = self.state, self.members
        shares = [self.share(g, self.T) for g in self.aggregates]
        base = {g: self.y[g][-1] for g in members}
        z_prev = self.y[m][-1] - self.y[m][-2]
        f_now = np.array([f_inc[g][-1] for g in members])
        out = {}
        for k in range(1, max(horizons) + 1):
            week = self.T + k * WEEK
            raw = {g: raw_estimate(self.bundle, self.cfg, g, self.target, week, k, self.backend)
                   for g in members + self.aggregates}
            w = np.concatenate([
                [z_prev],
                [raw[g] - base[g] for g in members],
                [sh * raw[g] - base[m] for sh, g in zip(shares, self.aggregates)],
                f_now if k == 1 else spec.mu_w[3 + len(members):],
            ])
            z_hat = float(spec.mu_z + weights @ (w - spec.mu_w))
            out[k] = base[m] + z_hat
            base = {g: raw[g] for g in members}
            base[m] = out[k]
            z_prev = z_hat
        return {h: out[h] for h in horizons}, spec


def forecast_state(bundle, imputations, cfg, T, target="cases", states=None, backend=None,
                   on_error="raise", specs_out=None) -> ForecastTable:
    """ARGOX-Idv forecasts (method ``argox-idv``) for every state.

    Forecasts are computed per imputation draw and reduced by the median.
    Draws whose weekly ILI views coincide share one computation.
    """
    T = as_date(T)
    horizons = (1,) if target == "ili" else cfg.horizons
    states = bundle.geography.states if states is None else states
    rows = []
    for m in states:
        try:
            data = _StateData(bundle, imputations, cfg, T, target, m, backend)
            keys = _distinct_draws(data)
            per_key = {}
            for key, n in keys.items():
                per_key[key] = data.forecast(horizons, n)
            values = np.array([[per_key[key][0][h] for h in horizons] for key in _draw_keys(data)])
            med = np.median(values, axis=0)
            if specs_out is not None:
                specs_out[(m, target)] = next(iter(per_key.values()))[1]
        except (ValueError, KeyError, np.linalg.LinAlgError) as exc:
            if on_error == "raise":
                raise
            log.warning("argox-idv %s %s as of %s skipped: %s", m, target, T, exc)
            continue
        rows += [(m, T + h * WEEK, h, "argox-idv", float(v)) for h, v in zip(horizons, med)]
    return ForecastTable(rows)


def _draw_keys(data):
    n = data.n_draws()
    return [tuple(data.other_draw(g, i).tobytes() for g in data.members) for i in range(n)]


def _distinct_draws(data):
    first = {}
    for i, key in enumerate(_draw_keys(data)):
        first.setdefault(key, i)
    return first


COVARIANCE_HEADER = ["geo", "target", "parameter", "row", "col", "value"]


def write_covariances(specs: dict, path) -> None:
    """Audit dump of ``{(geo, target): CovarianceSpec}``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COVARIANCE_HEADER)
        for (geo, target) in sorted(specs):
            s = specs[(geo, target)]
            for name in ("sigma2_zz", "rho", "sigma2_ff", "sigma2_zf", "rho_f", "sigma2_reg", "sigma2_nat", "mu_z"):
                w.writerow([geo, target, name, "", "", repr(float(getattr(s, name)))])
            for name in ("zz_block", "ff_block", "gt_block"):
                block = getattr(s, name)
                for i in range(block.shape[0]):
                    for j in range(block.shape[1]):
                        w.writerow([geo, target, name, i, j, repr(float(block[i, j]))])
            for i, v in enumerate(s.mu_w):
                w.writerow([geo, target, "mu_w", i, "", repr(float(v))])
