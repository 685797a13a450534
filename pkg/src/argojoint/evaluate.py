"""Accuracy metrics, baseline forecasters and metric reports."""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .panel import as_date
from .tables import ForecastTable

WEEK = dt.timedelta(days=7)


def _pair(yhat, y):
    yhat = np.asarray(yhat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if yhat.shape != y.shape or yhat.ndim != 1:
        raise ValueError(f"length mismatch: {yhat.shape} vs {y.shape}")
    if yhat.size < 1:
        raise ValueError("need at least one pair")
    return yhat, y


def rmse(yhat, y) -> float:
    yhat, y = _pair(yhat, y)
    e = yhat - y
    return math.sqrt(float(e @ e) / e.size)


def mae(yhat, y) -> float:
    yhat, y = _pair(yhat, y)
    return float(np.abs(yhat - y).mean())


def pearson(yhat, y) -> float | None:
    """Pearson correlation, or ``None`` when undefined (fewer than two points or a constant input)."""
    yhat, y = _pair(yhat, y)
    if yhat.size < 2:
        return None
    a = yhat - yhat.mean()
    b = y - y.mean()
    saa, sbb = float(a @ a), float(b @ b)
    if saa == 0.0 or sbb == 0.0:
        return None
    if np.array_equal(yhat, y):
        return 1.0
    return float(np.clip((a @ b) / math.sqrt(saa * sbb), -1.0, 1.0))


# -- baselines ----------------------------------------------------------------


def naive_forecast(truth, T, horizons=(1, 2, 3, 4), method="naive") -> ForecastTable:
    """Persistence: the value of week ``T`` for every horizon."""
    T = as_date(T)
    v = truth.value_at(T)
    return ForecastTable((truth.geo, T + h * WEEK, h, method, v) for h in horizons)


def _lagged(values, p):
    n = values.size - p
    X = np.column_stack([np.ones(n)] + [values[p - k - 1 : p - k - 1 + n] for k in range(p)])
    return X, values[p:]


def ar_forecast(series, T, p=3, n_train=52) -> float:
    """One-step least-squares AR(p) forecast with intercept, fit on ``n_train`` responses ending at ``T``."""
    T = as_date(T)
    end = series.index_of(T)
    if end + 1 < n_train + p:
        raise ValueError(f"AR-{p} needs {n_train + p} weeks through {T}, have {end + 1}")
    vals = series.values[end + 1 - n_train - p : end + 1]
    X, y = _lagged(vals, p)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    x_new = np.concatenate([[1.0], vals[::-1][:p]])
    return float(x_new @ coef)


def ar3_forecast(series, T, n_train=52) -> float:
    return ar_forecast(series, T, 3, n_train)


def var1_forecast(panel: dict, T, n_train=30) -> dict:
    """One-step VAR(1) with intercept, one least-squares regression per equation."""
    T = as_date(T)
    geos = sorted(panel)
    rows = []
    for g in geos:
        s = panel[g]
        end = s.index_of(T)
        if end < n_train:
            raise ValueError(f"VAR-1 needs {n_train + 1} weeks through {T} for {g}")
        rows.append(s.values[end - n_train : end + 1])
    Y = np.vstack(rows).T  # (n_train + 1, k)
    X = np.column_stack([np.ones(n_train), Y[:-1]])
    B, *_ = np.linalg.lstsq(X, Y[1:], rcond=None)
    pred = np.concatenate([[1.0], Y[-1]]) @ B
    return {g: float(v) for g, v in zip(geos, pred)}


# -- reports ------------------------------------------------------------------

METRIC_HEADER = ["geo", "method", "horizon", "rmse", "mae", "corr", "n"]


@dataclass(frozen=True)
class MetricRow:
    geo: str
    method: str
    horizon: int
    rmse: float
    mae: float
    corr: float | None
    n: int


class MetricReport:
    """Per (geo, method, horizon) metrics with cross-geo averages."""

    def __init__(self, rows=()):
        self.rows = tuple(sorted(rows, key=lambda r: (r.geo, r.method, r.horizon)))

    def __len__(self):
        return len(self.rows)

    def get(self, geo, method, horizon) -> MetricRow | None:
        for r in self.rows:
            if (r.geo, r.method, r.horizon) == (geo, method, horizon):
                return r
        return None

    def average(self, method, horizon, geos=None) -> dict:
        """Mean RMSE / MAE over geos and mean correlation over geos where it is defined."""
        sel = [r for r in self.rows if r.method == method and r.horizon == horizon
               and (geos is None or r.geo in geos)]
        if not sel:
            raise KeyError(f"no rows for {method} h={horizon}")
        corrs = [r.corr for r in sel if r.corr is not None]
        return {
            "rmse": float(np.mean([r.rmse for r in sel])),
            "mae": float(np.mean([r.mae for r in sel])),
            "corr": float(np.mean(corrs)) if corrs else None,
            "n_geos": len(sel),
            "n_corr": len(corrs),
        }

    def write(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(METRIC_HEADER)
            for r in self.rows:
                corr = "" if r.corr is None else repr(r.corr)
                w.writerow([r.geo, r.method, r.horizon, repr(r.rmse), repr(r.mae), corr, r.n])


def score(table: ForecastTable, truth) -> MetricReport:
    """Score every (geo, method, horizon) group of ``table``.

    ``truth(geo)`` returns the weekly truth series (or ``None``); forecasts
    whose target week has no truth are skipped.
    """
    groups: dict = {}
    for r in table:
        s = truth(r.geo)
        if s is None:
            continue
        try:
            actual = s.value_at(r.target_week)
        except KeyError:
            continue
        groups.setdefault((r.geo, r.method, r.horizon), []).append((r.value, actual))
    rows = []
    for (geo, method, h), pairs in groups.items():
        yhat, y = np.array(pairs).T
        rows.append(MetricRow(geo, method, h, rmse(yhat, y), mae(yhat, y), pearson(yhat, y), len(pairs)))
    return MetricReport(rows)
