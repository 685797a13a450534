"""Design matrices for the ARGO-style regressions and search-lag selection.

Every column is described by the signal it reads and its lag, counted in
steps (days for daily designs, weeks for weekly ones) back from the response
date. A design built as of ``T`` for horizon ``l`` only uses lags ``>= l``,
so its forecast row never touches data after ``T``.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .panel import DailySeries, WeeklySeries, as_date

log = logging.getLogger(__name__)

WEEKLY_SLOTS = (7, 14, 21, 28)


class InsufficientHistory(ValueError):
    pass


@dataclass(frozen=True)
class LagTable:
    """Per-term optimal delay (days) against cases and against deaths."""

    lags: dict

    def __post_init__(self):
        clean = {}
        for term, (c, d) in dict(self.lags).items():
            if int(c) < 1 or int(d) < 1:
                raise ValueError(f"lags for {term!r} must be >= 1")
            clean[str(term)] = (int(c), int(d))
        object.__setattr__(self, "lags", clean)

    @property
    def terms(self) -> list[str]:
        return list(self.lags)

    def __len__(self):
        return len(self.lags)

    def case_lag(self, term) -> int:
        return self.lags[term][0]

    def death_lag(self, term) -> int:
        return self.lags[term][1]

    def lag_for(self, term, target) -> int:
        return self.lags[term][0 if target == "cases" else 1]

    @classmethod
    def read(cls, path) -> LagTable:
        with Path(path).open(newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["term", "case_lag", "death_lag"]:
                raise ValueError(f"{path}: expected header term,case_lag,death_lag")
            return cls({r["term"]: (int(r["case_lag"]), int(r["death_lag"])) for r in reader})

    def write(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["term", "case_lag", "death_lag"])
            for term, (c, d) in self.lags.items():
                w.writerow([term, c, d])

    @classmethod
    def default(cls) -> LagTable:
        ref = resources.files("argojoint") / "data" / "lag_table_default.csv"
        with resources.as_file(ref) as p:
            return cls.read(p)


@dataclass(frozen=True)
class Column:
    name: str
    group: str
    source: str
    lag: int


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Training rows (one per response date) plus the forecast row."""

    columns: tuple[Column, ...]
    values: np.ndarray = field(repr=False)
    response_dates: tuple[dt.date, ...]
    forecast_row: np.ndarray = field(repr=False)
    forecast_date: dt.date
    as_of: dt.date
    step: int

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    @property
    def shape(self):
        return self.values.shape

    def group(self, name) -> list[Column]:
        return [c for c in self.columns if c.group == name]

    def extend(self, columns, values, forecast_row) -> DesignMatrix:
        return DesignMatrix(
            self.columns + tuple(columns),
            np.hstack([self.values, values]),
            self.response_dates,
            np.concatenate([self.forecast_row, forecast_row]),
            self.forecast_date,
            self.as_of,
            self.step,
        )

    def source_dates(self, column: Column) -> list[dt.date]:
        """Dates the column reads for each training row (audit helper)."""
        off = column.lag * self.step
        return [d - dt.timedelta(days=off) for d in self.response_dates]


def _gather(series, col: Column, resp_ord: np.ndarray, as_of_ord: int, step: int) -> np.ndarray:
    src_ord = resp_ord - col.lag * step
    if src_ord.max() > as_of_ord:
        raise AssertionError(f"column {col.name} would read past the as-of date")
    idx = src_ord - series.start_ord
    if idx.min() < 0:
        need = dt.date.fromordinal(int(src_ord.min()))
        raise InsufficientHistory(
            f"column {col.name} (lag {col.lag}) needs {col.source} from {need}, "
            f"series {series.geo}/{series.signal} starts {series.start}"
        )
    if step > 1:
        if np.any(idx % step):
            raise ValueError(f"{col.name}: dates off the weekly grid")
        idx = idx // step
    if idx.max() >= len(series):
        need = dt.date.fromordinal(int(src_ord.max()))
        raise InsufficientHistory(f"column {col.name} needs {col.source} through {need}, series ends {series.end}")
    return series.values[idx]


def _assemble(specs, target, T, n_rows, horizon, step):
    """``specs``: list of (Column, series-or-None); ``None`` means weekday indicator."""
    T = as_date(T)
    t_ord = T.toordinal()
    resp = t_ord - step * np.arange(n_rows - 1, -1, -1)
    fc_ord = t_ord + step * horizon
    all_ord = np.append(resp, fc_ord)
    cols = []
    for col, series in specs:
        if col.lag < horizon and series is not None:
            raise AssertionError(f"column {col.name} lag {col.lag} < horizon {horizon}")
        if series is None:
            weekday = np.array([dt.date.fromordinal(int(o)).weekday() for o in all_ord])
            cols.append((weekday == _WEEKDAY[col.name]).astype(np.float64))
        else:
            cols.append(_gather(series, col, all_ord, t_ord, step))
    mat = np.column_stack(cols) if cols else np.empty((n_rows + 1, 0))
    y = _gather(target, Column("response", "response", target.signal, 0), resp, t_ord, step)
    dm = DesignMatrix(
        tuple(c for c, _ in specs),
        np.ascontiguousarray(mat[:-1]),
        tuple(dt.date.fromordinal(int(o)) for o in resp),
        mat[-1].copy(),
        dt.date.fromordinal(int(fc_ord)),
        T,
        step,
    )
    return dm, y


# Monday=1 .. Saturday=6 as in the regression; Sunday is the omitted level.
_WEEKDAY = {f"dow_{r}": r - 1 for r in range(1, 7)}


def weekday_columns():
    return [(Column(f"dow_{r}", "weekday", "calendar", 0), None) for r in range(1, 7)]


def _search_specs(bundle, geo, lag_table, target, horizon):
    specs = []
    for term in lag_table.terms:
        s = bundle.trends.get((geo, term))
        if s is None:
            continue
        if not isinstance(s, DailySeries):
            raise ValueError(f"term {term!r} must be daily for the daily design")
        lag = max(lag_table.lag_for(term, target), horizon)
        specs.append((Column(f"search:{term}", "search", f"term:{term}", lag), s))
    return specs


def ili_columns(draw: DailySeries, T, horizon: int, n_rows: int):
    """ILI block for one imputation draw: lags ``max(h, l)`` for h in 7, 14, 21, 28 days."""
    T = as_date(T)
    t_ord = T.toordinal()
    all_ord = np.append(t_ord - np.arange(n_rows - 1, -1, -1), t_ord + horizon)
    cols, vals = [], []
    for q, base in enumerate(WEEKLY_SLOTS, start=1):
        c = Column(f"ili_wk{q}", "ili", "ili", max(base, horizon))
        cols.append(c)
        vals.append(_gather(draw, c, all_ord, t_ord, 1))
    mat = np.column_stack(vals)
    return cols, mat[:-1], mat[-1]


def _daily_design(bundle, draw, geo, horizon, lag_table, T, n_rows, ar_lags, ar_signal, target):
    if horizon < 1:
        raise ValueError("horizon must be >= 1 day")
    cases = bundle.cases[geo]
    ar_src = bundle.panel(ar_signal)[geo]
    specs = [(Column(f"{ar_signal}_ar{i}", "ar", ar_signal, horizon + i), ar_src) for i in range(ar_lags + 1)]
    specs += [
        (Column(f"cases_wk{q}", "weekly", "cases", max(base, horizon)), cases)
        for q, base in enumerate(WEEKLY_SLOTS, start=1)
    ]
    specs += _search_specs(bundle, geo, lag_table, target, horizon)
    specs += weekday_columns()
    dm, y = _assemble(specs, bundle.panel(target)[geo], T, n_rows, horizon, 1)
    if draw is not None:
        cols, vals, row = ili_columns(draw, T, horizon, n_rows)
        dm = dm.extend(cols, vals, row)
    return dm, y


def build_case_design(bundle, draw, geo, horizon, lag_table, T, n_rows=56, ar_lags=6):
    """Daily design for ``horizon``-day-ahead incident cases as of ``T``.

    Groups, in order: case lags ``l..l+ar_lags``; case lags ``max(7q, l)``;
    each search term at ``max(case_lag, l)``; Monday..Saturday indicators of
    the response day; the imputed-ILI draw at ``max(7q, l)`` (omitted when
    ``draw`` is None).
    """
    return _daily_design(bundle, draw, geo, horizon, lag_table, T, n_rows, ar_lags, "cases", "cases")


def build_death_design(bundle, draw, geo, horizon, lag_table, T, n_rows=56, ar_lags=6):
    """As :func:`build_case_design` for deaths: death lags, case weekly lags, death search lags."""
    return _daily_design(bundle, draw, geo, horizon, lag_table, T, n_rows, ar_lags, "deaths", "deaths")


def weekly_search_lag(daily_lag: int, horizon: int) -> int:
    return max(horizon, daily_lag // 7)


def build_weekly_design(bundle, geo, target, T, horizon=1, n_rows=30, ar_lags=3, lag_table=None,
                        exog_cases=False):
    """Weekly design for ``target`` (cases, deaths or ili) ``horizon`` weeks ahead.

    Columns: target lags ``h..h+ar_lags-1``; search terms (daily COVID terms
    summed per week at ``max(h, lag // 7)`` for cases/deaths, weekly flu
    terms at lag ``h`` for ili); optionally weekly cases at lag ``h``.
    """
    y_series = bundle.weekly(target, geo)
    specs = [(Column(f"{target}_ar{a}", "ar", target, horizon + a), y_series) for a in range(ar_lags)]
    if target == "ili":
        for term in bundle.flu_terms:
            if (geo, term) in bundle.trends:
                specs.append((Column(f"search:{term}", "search", f"term:{term}", horizon),
                               bundle.weekly(f"term:{term}", geo)))
    else:
        terms = lag_table.terms if lag_table is not None else bundle.covid_terms
        for term in terms:
            if (geo, term) not in bundle.trends:
                continue
            lag = weekly_search_lag(lag_table.lag_for(term, target), horizon) if lag_table else horizon
            specs.append((Column(f"search:{term}", "search", f"term:{term}", lag),
                          bundle.weekly(f"term:{term}", geo)))
    if exog_cases:
        specs.append((Column("cases_exog", "exog", "cases", horizon), bundle.weekly("cases", geo)))
    return _assemble(specs, y_series, T, n_rows, horizon, 7)


def build_ili_design(bundle, geo, T, cfg):
    """Weekly %ILI design with lagged weekly COVID cases as exogenous input."""
    return build_weekly_design(bundle, geo, "ili", T, 1, cfg.ili_train_weeks, cfg.ili_ar_lags, exog_cases=True)


def select_optimal_lag(term, target, candidate_lags, window=None, min_rows=10) -> int:
    """Lag of ``term`` whose one-variable regression on ``target`` has the least MSE.

    All candidates are scored on the same target dates: those inside
    ``window`` (inclusive date pair) for which every candidate lag is
    available. Ties go to the smaller lag.
    """
    lags = sorted(set(int(k) for k in candidate_lags))
    if not lags:
        raise ValueError("no candidate lags")
    if type(term) is not type(target):
        raise ValueError("term and target must share a frequency")
    step = target.STEP
    lo = max(target.start_ord, term.start_ord + step * lags[-1])
    hi = min(target.end.toordinal(), term.end.toordinal() + step * lags[0])
    if window is not None:
        lo = max(lo, as_date(window[0]).toordinal())
        hi = min(hi, as_date(window[1]).toordinal())
    if hi < lo:
        raise ValueError("no overlap between term and target for the candidate lags")
    sub = target.window(dt.date.fromordinal(lo), dt.date.fromordinal(hi))
    if sub is None or len(sub) < min_rows:
        raise ValueError(f"only {0 if sub is None else len(sub)} rows for lag selection (need {min_rows})")
    y = sub.values
    resp = np.array([d.toordinal() for d in sub.dates])
    best, best_mse = None, np.inf
    for k in lags:
        idx = (resp - step * k - term.start_ord) // step
        x = term.values[idx]
        xc = x - x.mean()
        yc = y - y.mean()
        sxx = float(xc @ xc)
        resid = yc - (float(xc @ yc) / sxx) * xc if sxx > 0 else yc
        mse = float(resid @ resid) / y.size
        if mse < best_mse:
            best, best_mse = k, mse
    return best


def build_lag_table(bundle, geo, window, candidates=range(1, 36), terms=None) -> LagTable:
    """Select case and death lags for every daily search term at ``geo``."""
    terms = bundle.covid_terms if terms is None else terms
    out = {}
    for term in terms:
        s = bundle.trends[(geo, term)]
        out[term] = (
            select_optimal_lag(s, bundle.cases[geo], candidates, window),
            select_optimal_lag(s, bundle.deaths[geo], candidates, window),
        )
    return LagTable(out)


def resolve_lag_table(bundle, cfg, as_of, geo=None) -> LagTable:
    """Lag table for the daily search terms of ``bundle`` as seen on ``as_of``.

    Configured lags win, then the shipped default table; any remaining term
    has its lags selected on the ``cfg.lag_selection_weeks`` weeks of data
    ending at ``as_of`` (at ``geo``, by default the nation).
    """
    from .memo import memo

    as_of = as_date(as_of)
    geo = bundle.geography.nation if geo is None else geo
    terms = [t for t in bundle.covid_terms if (geo, t) in bundle.trends]

    def compute():
        known = dict(_default_lags())
        known.update(cfg.lag_table)
        out = {t: known[t] for t in terms if t in known}
        todo = [t for t in terms if t not in out]
        if todo:
            window = (as_of - dt.timedelta(days=7 * cfg.lag_selection_weeks - 1), as_of)
            lo, hi = cfg.lag_candidates
            picked = build_lag_table(bundle.truncate(as_of), geo, window, range(lo, hi + 1), todo)
            out.update(picked.lags)
        return LagTable({t: out[t] for t in terms})

    key = ("lag_table", geo, as_of, tuple(terms), tuple(sorted(cfg.lag_table.items())),
           cfg.lag_selection_weeks, cfg.lag_candidates)
    return memo(bundle.token, key, compute)


_DEFAULT = None


def _default_lags():
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = LagTable.default().lags
    return _DEFAULT
