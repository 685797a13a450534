"""Winner-takes-all ensemble over registered constituent forecasters.

For every (state, target, horizon) the constituent with the lowest mean
squared error over the trailing window of target weeks supplies the
forecast verbatim. Ties go to the constituent registered first.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .evaluate import naive_forecast
from .memo import memo
from .national import forecast_national, forecast_national_ili
from .panel import as_date
from .state import forecast_state, raw_estimate
from .tables import ForecastTable

log = logging.getLogger(__name__)

WEEK = dt.timedelta(days=7)
METHOD = "argox-joint-ensemble"
PLUGGABLE = ("argox-2step", "argox-natconstraint")


def target_horizons(cfg, target) -> tuple[int, ...]:
    return (1,) if target == "ili" else cfg.horizons


@dataclass
class RunContext:
    """Shared inputs for constituents: full-data imputations (truncated on use) and the LASSO backend."""

    imputations: dict | None = None
    backend: str | None = None

    def imputations_at(self, as_of) -> dict | None:
        if self.imputations is None:
            return None
        return {g: s.truncate(as_of) for g, s in self.imputations.items()}


class ConstituentRegistry:
    """Ordered, name-unique collection of forecasters ``fn(bundle, cfg, T, ctx) -> ForecastTable``.

    A forecaster returns rows for every state, target in ``cfg.targets`` and
    horizon; the registry relabels them with the constituent's name.
    """

    def __init__(self, items=()):
        self._items: OrderedDict = OrderedDict()
        for name, fn in items:
            self.register(name, fn)

    def register(self, name, fn) -> None:
        if name in self._items:
            raise ValueError(f"constituent {name!r} already registered")
        if name == METHOD:
            raise ValueError(f"{METHOD!r} is reserved for the ensemble output")
        self._items[name] = fn

    @property
    def names(self) -> list[str]:
        return list(self._items)

    def __len__(self):
        return len(self._items)

    def __contains__(self, name):
        return name in self._items

    def run(self, name, bundle, cfg, T, ctx) -> ForecastTable:
        rows = self._items[name](bundle, cfg, T, ctx)
        return ForecastTable((g, w, h, name, v) for g, w, h, _, v in rows)

    @classmethod
    def default(cls, extra=()) -> ConstituentRegistry:
        """Built-ins in tie-break order, then any ``(name, fn)`` plug-ins (e.g. ``argox-2step``)."""
        reg = cls([
            ("argo-national-disagg", national_disaggregated),
            ("argox-idv", argox_idv),
            ("naive", naive),
            ("state-gt-raw", state_gt_raw),
        ])
        for name, fn in extra:
            reg.register(name, fn)
        return reg


# -- built-in constituents ----------------------------------------------------


def national_weekly(bundle, cfg, T, ctx, target) -> dict[int, float]:
    """National forecasts by horizon: ARGO-Joint for cases/deaths, the weekly ILI model for %ILI."""
    T = as_date(T)

    def compute():
        if target == "ili":
            row = forecast_national_ili(bundle, cfg, T, backend=ctx.backend).rows[0]
            return {1: row.value}
        imps = ctx.imputations_at(T)
        nat = bundle.geography.nation
        fc = forecast_national(bundle, imps.get(nat) if imps else None, cfg, T, target, backend=ctx.backend)
        return dict(fc.weekly)

    return memo(bundle.token, ("national", cfg.cache_key(), target, T), compute)


def national_disaggregated(bundle, cfg, T, ctx):
    """National forecast scaled by each state's share of the last ``cfg.share_weeks`` weeks."""
    T = as_date(T)
    geo = bundle.geography
    rows = []
    for target in cfg.targets:
        nat_fc = national_weekly(bundle, cfg, T, ctx, target)
        nat = bundle.weekly(target, geo.nation).window(T - (cfg.share_weeks - 1) * WEEK, T)
        denom = float(nat.values.sum())
        for m in geo.states:
            s = bundle.weekly(target, m).window(T - (cfg.share_weeks - 1) * WEEK, T)
            share = float(s.values.sum()) / denom if denom > 0 else 1.0 / len(geo.states)
            rows += [(m, T + h * WEEK, h, "", share * nat_fc[h]) for h in target_horizons(cfg, target)]
    return ForecastTable(rows)


def argox_idv(bundle, cfg, T, ctx):
    out = ForecastTable()
    for target in cfg.targets:
        out = out + forecast_state(bundle, ctx.imputations_at(T), cfg, T, target, backend=ctx.backend,
                                   on_error="skip")
    return out


def naive(bundle, cfg, T, ctx):
    out = ForecastTable()
    for target in cfg.targets:
        for m in bundle.geography.states:
            out = out + naive_forecast(bundle.weekly(target, m), T, target_horizons(cfg, target))
    return out


def state_gt_raw(bundle, cfg, T, ctx):
    T = as_date(T)
    rows = []
    for target in cfg.targets:
        for m in bundle.geography.states:
            for h in target_horizons(cfg, target):
                v = raw_estimate(bundle, cfg, m, target, T + h * WEEK, h, ctx.backend)
                rows.append((m, T + h * WEEK, h, "", v))
    return ForecastTable(rows)


# -- selection ----------------------------------------------------------------


@dataclass(frozen=True)
class SelectionEntry:
    geo: str
    target: str
    horizon: int
    chosen: str
    mse: dict = field(default_factory=dict)
    window_start: dt.date | None = None
    window_end: dt.date | None = None


SELECTION_HEADER = ["geo", "target", "horizon", "chosen", "method", "mse", "window_start", "window_end"]


class SelectionRecord:
    def __init__(self, entries=()):
        self.entries = tuple(sorted(entries, key=lambda e: (e.window_end, e.geo, e.target, e.horizon)))

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __add__(self, other):
        return SelectionRecord(self.entries + tuple(other))

    def write(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SELECTION_HEADER)
            for e in self.entries:
                for method, mse in e.mse.items():
                    w.writerow([e.geo, e.target, e.horizon, e.chosen, method, repr(mse),
                                e.window_start.isoformat(), e.window_end.isoformat()])

    def shares(self) -> pd.DataFrame:
        """Percent of selections won by each method, per target and horizon."""
        if not self.entries:
            return pd.DataFrame(columns=["target", "horizon", "method", "percent"])
        df = pd.DataFrame([(e.target, e.horizon, e.chosen) for e in self.entries],
                          columns=["target", "horizon", "method"])
        counts = df.groupby(["target", "horizon", "method"]).size()
        totals = df.groupby(["target", "horizon"]).size()
        pct = (100.0 * counts / totals.reindex(counts.index.droplevel("method")).to_numpy()).rename("percent")
        return pct.reset_index()


def window_weeks(T, window) -> list[dt.date]:
    T = as_date(T)
    return [T - k * WEEK for k in range(window - 1, -1, -1)]


def select(history: ForecastTable, truth, geo, horizon, T, window, methods, target="",
           require=None) -> SelectionEntry:
    """Pick the method with the least MSE over the ``window`` target weeks ending at ``T``.

    ``truth`` is the weekly truth series for ``geo``. Methods missing any
    window forecast, or missing from ``require`` (forecasts needed at ``T``),
    are excluded with a warning. Ties go to the earlier entry of ``methods``.
    """
    weeks = window_weeks(T, window)
    try:
        actual = np.array([truth.value_at(w) for w in weeks])
    except KeyError as exc:
        raise ValueError(f"truth for {geo} does not cover the selection window: {exc}") from None
    mses = {}
    for method in methods:
        preds = [history.get(geo, w, horizon, method) for w in weeks]
        if any(p is None for p in preds) or (require is not None and method not in require):
            log.warning("%s %s h=%d as of %s: %s excluded (missing forecasts)", geo, target, horizon, T, method)
            continue
        e = np.asarray(preds) - actual
        mses[method] = float(e @ e) / e.size
    if not mses:
        raise ValueError(f"no constituent has complete forecasts for {geo} {target} h={horizon} as of {T}")
    chosen = None
    for method, v in mses.items():
        if chosen is None or v < mses[chosen]:
            chosen = method
    return SelectionEntry(geo, target, horizon, chosen, mses, weeks[0], weeks[-1])


def history_as_ofs(cfg, T) -> list[dt.date]:
    """As-of dates whose constituent forecasts an ensemble at ``T`` needs."""
    T = as_date(T)
    back = cfg.ensemble_window_weeks - 1 + max(max(target_horizons(cfg, t)) for t in cfg.targets)
    return [T - k * WEEK for k in range(back, -1, -1)]


def forecast_ensemble(registry, bundle, cfg, T, ctx=None, history=None):
    """Ensemble tables at ``T`` keyed by target, and the selection entries behind them.

    ``history`` maps target to a ForecastTable of constituent forecasts made
    at earlier as-of dates; it is computed from truncated bundles when absent.
    """
    ctx = ctx or RunContext()
    T = as_date(T)
    if history is None:
        history = {t: ForecastTable() for t in cfg.targets}
        for a in history_as_ofs(cfg, T):
            for t, tab in run_constituents(registry, bundle, cfg, a, ctx).items():
                history[t] = history[t] + tab
    view = bundle.truncate(T)
    tables, entries = {}, []
    for target in cfg.targets:
        hist = history[target]
        rows = []
        for m in bundle.geography.states:
            truth = view.weekly(target, m)
            for h in target_horizons(cfg, target):
                now = {meth for meth in registry.names if hist.get(m, T + h * WEEK, h, meth) is not None}
                entry = select(hist, truth, m, h, T, cfg.ensemble_window_weeks, registry.names, target, now)
                entries.append(entry)
                rows.append((m, T + h * WEEK, h, METHOD, hist.get(m, T + h * WEEK, h, entry.chosen)))
        tables[target] = ForecastTable(rows)
    return tables, SelectionRecord(entries)


def run_constituents(registry, bundle, cfg, T, ctx) -> dict[str, ForecastTable]:
    """Constituent forecasts at ``T`` keyed by target."""
    T = as_date(T)
    view = bundle.truncate(T)
    out = {}
    for target in cfg.targets:
        sub = cfg.replace(targets=(target,))
        tab = ForecastTable()
        for name in registry.names:
            try:
                tab = tab + registry.run(name, view, sub, T, ctx)
            except (ValueError, KeyError, RuntimeError, np.linalg.LinAlgError) as exc:
                log.warning("constituent %s (%s) failed as of %s: %s", name, target, T, exc)
        out[target] = tab
    return out
