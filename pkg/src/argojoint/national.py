"""National ARGO-Joint forecasts of daily cases/deaths and weekly %ILI.

For every imputation draw and every day-ahead horizon ``l`` a LASSO is fit
on the daily design; coefficients are then averaged over the horizons
``l-1, l, l+1`` before predicting day ``T+l``. Daily predictions are reduced
by the median across draws, floored at zero and summed into weeks.
"""

from __future__ import annotations

import datetime as dt
import logging
from dataclasses import dataclass, field

import numpy as np

from . import lasso
from .features import build_case_design, build_death_design, build_ili_design, ili_columns, resolve_lag_table
from .panel import SATURDAY, as_date
from .tables import ForecastTable

log = logging.getLogger(__name__)

MAX_DAYS = 28
FAILED_DRAW_LIMIT = 0.10


class ForecastError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class NationalForecast:
    geo: str
    signal: str
    as_of: dt.date
    days: tuple[int, ...]
    per_draw: np.ndarray = field(repr=False)
    daily: np.ndarray = field(repr=False)
    clipped: np.ndarray = field(repr=False)
    weekly: dict = field(default_factory=dict)
    failed_draws: tuple[int, ...] = ()
    method: str = "argo-joint"

    def table(self) -> ForecastTable:
        return ForecastTable(
            (self.geo, self.as_of + dt.timedelta(days=7 * h), h, self.method, v)
            for h, v in self.weekly.items()
        )


def days_for(horizons) -> list[int]:
    return sorted({7 * h - i for h in horizons for i in range(7)})


def smoothing_days(days) -> list[int]:
    return sorted({k for d in days for k in (d - 1, d, d + 1) if 1 <= k <= MAX_DAYS})


def smooth_coefficients(thetas: dict[int, np.ndarray], day: int) -> np.ndarray:
    """Mean of the parameter vectors fit for ``day-1, day, day+1`` that exist."""
    near = [thetas[k] for k in (day - 1, day, day + 1) if k in thetas]
    return np.mean(near, axis=0)


def _check_as_of(T):
    T = as_date(T)
    if T.weekday() != SATURDAY:
        raise ValueError(f"as-of date {T} must be a Saturday")
    return T


def _draw_list(imputations, geo):
    if imputations is None:
        return [None]
    iset = imputations.get(geo) if isinstance(imputations, dict) else imputations
    if iset is None or iset.n_weeks == 0:
        return [None]
    return [iset.draw(n) for n in range(iset.n_draws)]


def _fit_draw(bases, draw, T, cfg, n_rows, fit_days, backend):
    """Parameter vectors ``[intercept, coef...]`` per day for one draw."""
    ratios = {}
    thetas = {}
    for day in fit_days:
        week = (day - 1) // 7 + 1
        if week not in ratios:
            ratios[week] = _cv_ratio(bases, draw, T, cfg, n_rows, 7 * week - 3, backend)
        X, y = _with_draw(bases[day], draw, T, day, n_rows)
        lam = ratios[week] * lasso.lambda_max(X, y)
        model = lasso.fit(X, y, lam, backend=backend)
        thetas[day] = np.concatenate([[model.intercept], model.coef])
    return thetas


def _with_draw(base, draw, T, day, n_rows):
    dm, y = base
    if draw is not None:
        dm = dm.extend(*ili_columns(draw, T, day, n_rows))
    return dm, y


def _cv_ratio(bases, draw, T, cfg, n_rows, day, backend):
    X, y = _with_draw(bases[day], draw, T, day, n_rows)
    lmax = lasso.lambda_max(X, y)
    if lmax == 0.0:
        return 0.0
    grid = [r * lmax for r in cfg.lambda_grid]
    report = lasso.cv_select(X, y, grid, cfg.cv_folds, backend=backend)
    return cfg.lambda_grid[report.chosen_index]


def forecast_national(bundle, imputations, cfg, T, signal="cases", geo=None, lag_table=None,
                      backend=None) -> NationalForecast:
    """ARGO-Joint weekly forecasts for ``cfg.horizons`` made as of Saturday ``T``."""
    if signal not in ("cases", "deaths"):
        raise ValueError(f"signal must be cases or deaths, got {signal!r}")
    T = _check_as_of(T)
    geo = bundle.geography.nation if geo is None else geo
    table = lag_table if lag_table is not None else resolve_lag_table(bundle, cfg, T, geo)
    build = build_case_design if signal == "cases" else build_death_design
    n_rows = cfg.national_train_days
    days = days_for(cfg.horizons)
    fit_days = smoothing_days(days)
    cv_days = {7 * ((d - 1) // 7 + 1) - 3 for d in fit_days}
    bases = {
        d: build(bundle, None, geo, d, table, T, n_rows, cfg.ar_lags_daily)
        for d in sorted(set(fit_days) | cv_days)
    }
    draws = _draw_list(imputations, geo)

    preds, failed = [], []
    for n, draw in enumerate(draws):
        try:
            thetas = _fit_draw(bases, draw, T, cfg, n_rows, fit_days, backend)
        except (RuntimeError, np.linalg.LinAlgError, FloatingPointError) as exc:
            log.warning("%s %s as of %s: draw %d failed: %s", geo, signal, T, n, exc)
            failed.append(n)
            continue
        row = []
        for d in days:
            theta = smooth_coefficients(thetas, d)
            x = _with_draw(bases[d], draw, T, d, n_rows)[0].forecast_row
            row.append(theta[0] + float(x @ theta[1:]))
        preds.append(row)
    if len(failed) > FAILED_DRAW_LIMIT * len(draws):
        raise ForecastError(f"{len(failed)} of {len(draws)} draws failed for {geo} {signal} as of {T}")

    per_draw = np.asarray(preds)
    median = np.median(per_draw, axis=0)
    clipped = median < 0
    daily = np.where(clipped, 0.0, median)
    if clipped.any():
        log.info("%s %s as of %s: %d negative daily forecasts floored at 0", geo, signal, T, clipped.sum())
    by_day = dict(zip(days, daily))
    weekly = {h: float(sum(by_day[7 * h - i] for i in range(7))) for h in cfg.horizons}
    return NationalForecast(geo, signal, T, tuple(days), per_draw, daily, clipped, weekly, tuple(failed))


def forecast_national_ili(bundle, cfg, T, geo=None, backend=None) -> ForecastTable:
    """One-week-ahead %ILI from the weekly ILI design (method ``argo-joint-ili``)."""
    T = _check_as_of(T)
    geo = bundle.geography.nation if geo is None else geo
    value = ili_estimate(bundle, cfg, T, geo, backend)
    return ForecastTable([(geo, T + dt.timedelta(days=7), 1, "argo-joint-ili", value)])


def ili_estimate(bundle, cfg, T, geo, backend=None) -> float:
    dm, y = build_ili_design(bundle, geo, T, cfg)
    model, _ = lasso.select_and_fit(dm, y, cfg.lambda_grid, cfg.cv_folds, backend=backend)
    return float(model.predict(dm.forecast_row[None, :])[0])
