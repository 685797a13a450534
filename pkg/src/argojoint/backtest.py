"""Rolling retrospective backtest.

Each as-of week sees only a truncated view of the data. Constituents run
first for every as-of week the ensemble windows need (in parallel), then the
ensemble and the baselines run for the evaluated weeks, and finally every
forecast is scored against the truth.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .ensemble import (
    RunContext,
    SelectionRecord,
    forecast_ensemble,
    history_as_ofs,
    national_weekly,
    run_constituents,
    target_horizons,
)
from .evaluate import ar3_forecast, naive_forecast, score, var1_forecast
from .imputation import impute_bundle
from .panel import SATURDAY, as_date
from .tables import ForecastTable, write_forecasts

log = logging.getLogger(__name__)

WEEK = dt.timedelta(days=7)
SERIES_HEADER = ["date", "geo", "method", "horizon", "value", "truth"]


@dataclass
class BacktestResult:
    forecasts: dict  # target -> ForecastTable (evaluated as-of weeks only)
    metrics: dict  # target -> MetricReport
    selections: SelectionRecord
    as_ofs: tuple[dt.date, ...] = ()
    coverage: dict = field(default_factory=dict)  # (target, method) -> number of rows

    def write(self, out_dir, bundle) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for target, table in self.forecasts.items():
            p = out / f"forecasts_{target}.csv"
            write_forecasts(table, p)
            written.append(p)
            p = out / f"metrics_{target}.csv"
            self.metrics[target].write(p)
            written.append(p)
            p = out / f"series_{target}.csv"
            write_series(table, lambda g, t=target: _truth(bundle, t, g), p)
            written.append(p)
        p = out / "selections.csv"
        self.selections.write(p)
        written.append(p)
        return written


def _truth(bundle, target, geo):
    try:
        return bundle.weekly(target, geo)
    except KeyError:
        return None


def write_series(table, truth, path) -> None:
    """Long plot-ready rows ``date,geo,method,horizon,value,truth`` (truth empty when unknown)."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_HEADER)
        for r in table:
            s = truth(r.geo)
            try:
                actual = repr(s.value_at(r.target_week)) if s is not None else ""
            except KeyError:
                actual = ""
            w.writerow([r.target_week.isoformat(), r.geo, r.method, r.horizon, repr(r.value), actual])


def as_of_weeks(start, end) -> list[dt.date]:
    start, end = as_date(start), as_date(end)
    if start.weekday() != SATURDAY or end.weekday() != SATURDAY:
        raise ValueError("backtest weeks must be Saturdays")
    if end < start:
        raise ValueError("end week precedes start week")
    return [start + k * WEEK for k in range((end - start).days // 7 + 1)]


def _map(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _baselines(bundle, cfg, T, target, with_naive):
    """AR-3 and VAR-1 state forecasts, national persistence, and state persistence if asked."""
    view = bundle.truncate(T)
    geo = view.geography
    rows = []
    for m in geo.states:
        if with_naive:
            rows += naive_forecast(view.weekly(target, m), T, target_horizons(cfg, target)).rows
        try:
            rows.append((m, T + WEEK, 1, "ar3", ar3_forecast(view.weekly(target, m), T, cfg.ili_train_weeks)))
        except (ValueError, KeyError) as exc:
            log.info("ar3 %s %s as of %s skipped: %s", m, target, T, exc)
    try:
        panel = {m: view.weekly(target, m) for m in geo.states}
        rows += [(m, T + WEEK, 1, "var1", v) for m, v in var1_forecast(panel, T, cfg.state_train_weeks).items()]
    except (ValueError, KeyError) as exc:
        log.info("var1 %s as of %s skipped: %s", target, T, exc)
    rows += naive_forecast(view.weekly(target, geo.nation), T, target_horizons(cfg, target)).rows
    return ForecastTable(rows)


def _national_rows(bundle, cfg, T, target, ctx):
    view = bundle.truncate(T)
    nat = view.geography.nation
    method = "argo-joint-ili" if target == "ili" else "argo-joint"
    try:
        weekly = national_weekly(view, cfg, T, ctx, target)
    except (ValueError, KeyError, RuntimeError) as exc:
        log.warning("national %s as of %s failed: %s", target, T, exc)
        return ForecastTable()
    return ForecastTable((nat, T + h * WEEK, h, method, v) for h, v in weekly.items())


def backtest(registry, bundle, cfg, start_week, end_week, ctx=None) -> BacktestResult:
    """Forecast every as-of week in ``[start_week, end_week]`` and score against the truth.

    Results do not depend on ``cfg.threads``: every computation is keyed by
    its inputs and tables are sorted by key.
    """
    weeks = as_of_weeks(start_week, end_week)
    if ctx is None:
        geos = sorted(set(bundle.ili) & set(bundle.cases))
        ctx = RunContext(impute_bundle(bundle, cfg, geos))
    needed = sorted({a for T in weeks for a in history_as_ofs(cfg, T)})
    log.info("backtest: %d evaluated weeks, %d constituent as-of weeks", len(weeks), len(needed))

    per_as_of = dict(zip(needed, _map(lambda a: run_constituents(registry, bundle, cfg, a, ctx),
                                     needed, cfg.threads)))
    history = {t: ForecastTable(r for a in needed for r in per_as_of[a][t]) for t in cfg.targets}

    def evaluate_week(T):
        out = {}
        for t in cfg.targets:
            ens, sel = forecast_ensemble(registry, bundle, cfg.replace(targets=(t,)), T, ctx, {t: history[t]})
            extra = _baselines(bundle, cfg, T, t, "naive" not in registry) + _national_rows(bundle, cfg, T, t, ctx)
            out[t] = (list(ens[t]) + list(extra), sel)
        return out

    results = _map(evaluate_week, weeks, cfg.threads)

    rows = {t: [] for t in cfg.targets}
    entries = []
    for T, by_target in zip(weeks, results):
        for t, (extra, sel) in by_target.items():
            entries += sel.entries
            rows[t] += list(per_as_of[T][t]) + extra
    forecasts = {t: ForecastTable(r) for t, r in rows.items()}
    selections = SelectionRecord(entries)
    metrics = {t: score(tab, lambda g, t=t: _truth(bundle, t, g)) for t, tab in forecasts.items()}
    coverage = {}
    for t, tab in forecasts.items():
        for r in tab:
            coverage[(t, r.method)] = coverage.get((t, r.method), 0) + 1
    return BacktestResult(forecasts, metrics, selections, tuple(weeks), coverage)

