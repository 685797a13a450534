"""Dataset bundle: every input panel of one run, plus CSV ingestion and export."""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from collections import defaultdict
from pathlib import Path
from types import MappingProxyType

import numpy as np

from .memo import Token
from .panel import (
    SATURDAY,
    DailySeries,
    Geography,
    GeoUnit,
    Level,
    WeeklySeries,
    aggregate_daily_to_weekly,
    as_date,
)

log = logging.getLogger(__name__)

CASES_HEADER = ["date", "geo", "cases", "deaths"]
ILI_HEADER = ["week_ending", "geo", "ili_pct"]
TRENDS_HEADER = ["date", "geo", "term", "value"]
GEOGRAPHY_HEADER = ["geo", "level", "region"]

HHS_REGIONS = {
    "R1": ["CT", "ME", "MA", "NH", "RI", "VT"],
    "R2": ["NJ", "NY", "NYC", "PR", "VI"],
    "R3": ["DE", "DC", "MD", "PA", "VA", "WV"],
    "R4": ["AL", "FL", "GA", "KY", "MS", "NC", "SC", "TN"],
    "R5": ["IL", "IN", "MI", "MN", "OH", "WI"],
    "R6": ["AR", "LA", "NM", "OK", "TX"],
    "R7": ["IA", "KS", "MO", "NE"],
    "R8": ["CO", "MT", "ND", "SD", "UT", "WY"],
    "R9": ["AZ", "CA", "HI", "NV", "AS", "GU", "MP"],
    "R10": ["AK", "ID", "OR", "WA"],
}


class SchemaError(ValueError):
    """Input file rejected; carries the offending location."""

    def __init__(self, path, line, column, message):
        self.path, self.line, self.column = str(path), line, column
        where = f"{path}:{line}" + (f" [{column}]" if column else "")
        super().__init__(f"{where}: {message}")


class DatasetBundle:
    """Immutable collection of panels.

    ``trends`` is keyed by ``(geo, term)``; a term's frequency (daily or
    weekly) is uniform across geographies.
    """

    def __init__(self, cases, deaths, ili, trends, geography, as_of=None, token=None):
        self.cases = MappingProxyType(dict(cases))
        self.deaths = MappingProxyType(dict(deaths))
        self.ili = MappingProxyType(dict(ili))
        self.trends = MappingProxyType(dict(trends))
        self.geography = geography
        self.as_of = as_date(as_of) if as_of is not None else None
        self.token = token if token is not None else Token()
        self._weekly = {}
        self._validate()

    def _validate(self):
        for name, panel in (("cases", self.cases), ("deaths", self.deaths), ("ili", self.ili)):
            for geo, s in panel.items():
                if geo not in self.geography:
                    raise ValueError(f"{name} series for unknown geo {geo!r}")
                want = WeeklySeries if name == "ili" else DailySeries
                if not isinstance(s, want):
                    raise ValueError(f"{name}/{geo} must be {want.__name__}")
        freq = {}
        for (geo, term), s in self.trends.items():
            if geo not in self.geography:
                raise ValueError(f"trend {term!r} for unknown geo {geo!r}")
            if freq.setdefault(term, type(s)) is not type(s):
                raise ValueError(f"term {term!r} mixes daily and weekly series")
        self._term_freq = freq

    # -- views -------------------------------------------------------------

    @property
    def covid_terms(self) -> list[str]:
        return sorted(t for t, f in self._term_freq.items() if f is DailySeries)

    @property
    def flu_terms(self) -> list[str]:
        return sorted(t for t, f in self._term_freq.items() if f is WeeklySeries)

    def panel(self, signal):
        return {"cases": self.cases, "deaths": self.deaths, "ili": self.ili}[signal]

    def daily(self, signal, geo) -> DailySeries:
        if signal.startswith("term:"):
            return self.trends[(geo, signal[5:])]
        return self.panel(signal)[geo]

    def weekly(self, signal, geo) -> WeeklySeries:
        """Weekly view of any signal; daily panels are summed over Saturday weeks."""
        key = (signal, geo)
        hit = self._weekly.get(key)
        if hit is None:
            if signal == "ili":
                hit = self.ili[geo]
            else:
                s = self.daily(signal, geo)
                hit = s if isinstance(s, WeeklySeries) else aggregate_daily_to_weekly(s)
            self._weekly[key] = hit
        return hit

    def truncate(self, as_of) -> DatasetBundle:
        """Bundle restricted to data dated on or before ``as_of``."""
        as_of = as_date(as_of)

        def cut(panel):
            out = {}
            for k, s in panel.items():
                t = s.truncate(as_of)
                if t is not None:
                    out[k] = t
            return out

        return DatasetBundle(cut(self.cases), cut(self.deaths), cut(self.ili), cut(self.trends),
                             self.geography, as_of=as_of, token=self.token)

    def with_aggregates(self) -> DatasetBundle:
        """Fill missing region and nation series from their member states.

        Counts and search volumes are summed; %ILI is averaged.
        """
        geo = self.geography
        groups = {r: list(geo.members(r)) for r in geo.regions}
        groups[geo.nation] = geo.states
        cases, deaths, ili = dict(self.cases), dict(self.deaths), dict(self.ili)
        trends = dict(self.trends)
        for agg, members in groups.items():
            for panel, how in ((cases, "sum"), (deaths, "sum"), (ili, "mean")):
                if agg not in panel:
                    s = _combine([panel[m] for m in members if m in panel], agg, how)
                    if s is not None:
                        panel[agg] = s
            for term in self._term_freq:
                if (agg, term) not in trends:
                    s = _combine([trends[(m, term)] for m in members if (m, term) in trends], agg, "sum")
                    if s is not None:
                        trends[(agg, term)] = s
        return DatasetBundle(cases, deaths, ili, trends, geo, as_of=self.as_of, token=self.token)

    def row_counts(self) -> dict:
        return {
            "cases": sum(len(s) for s in self.cases.values()),
            "deaths": sum(len(s) for s in self.deaths.values()),
            "ili": sum(len(s) for s in self.ili.values()),
            "trends": sum(len(s) for s in self.trends.values()),
        }

    def __eq__(self, other):
        if not isinstance(other, DatasetBundle):
            return NotImplemented
        return (
            self.geography == other.geography
            and dict(self.cases) == dict(other.cases)
            and dict(self.deaths) == dict(other.deaths)
            and dict(self.ili) == dict(other.ili)
            and dict(self.trends) == dict(other.trends)
        )


def _combine(series, geo, how):
    if not series:
        return None
    first = max(s.start_ord for s in series)
    last = min(s.end.toordinal() for s in series)
    if last < first:
        return None
    lo, hi = dt.date.fromordinal(first), dt.date.fromordinal(last)
    stack = np.vstack([s.window(lo, hi).values for s in series])
    vals = stack.sum(axis=0) if how == "sum" else stack.mean(axis=0)
    ref = series[0].window(lo, hi)
    return ref.replace(geo=geo, values=vals)


# -- CSV ingestion ------------------------------------------------------------


def _rows(path, header):
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise SchemaError(path, 1, None, "empty file") from None
        if [h.strip() for h in got] != header:
            raise SchemaError(path, 1, None, f"expected header {','.join(header)}, got {','.join(got)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise SchemaError(path, lineno, None, f"expected {len(header)} fields, got {len(row)}")
            yield lineno, dict(zip(header, (c.strip() for c in row)))


def _parse_date(path, lineno, col, text):
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise SchemaError(path, lineno, col, f"bad ISO date {text!r}") from None


def _parse_float(path, lineno, col, text, nonneg=False):
    try:
        v = float(text)
    except ValueError:
        raise SchemaError(path, lineno, col, f"not a number: {text!r}") from None
    if not math.isfinite(v):
        raise SchemaError(path, lineno, col, f"non-finite value {text!r}")
    if nonneg and v < 0:
        raise SchemaError(path, lineno, col, f"negative value {text!r}")
    return v


def _assemble(path, points, cls, signal, geo, step):
    """``points``: list of (date, value, lineno), duplicates already rejected."""
    points.sort()
    for (d0, _, _), (d1, _, ln) in zip(points, points[1:]):
        if (d1 - d0).days != step:
            raise SchemaError(path, ln, "date", f"{geo}/{signal}: gap between {d0} and {d1}")
    return cls(geo, signal, points[0][0], [v for _, v, _ in points])


def read_geography(path) -> Geography:
    rows = []
    for lineno, r in _rows(path, GEOGRAPHY_HEADER):
        try:
            Level(r["level"])
        except ValueError:
            raise SchemaError(path, lineno, "level", f"unknown level {r['level']!r}") from None
        rows.append((r["geo"], r["level"], r["region"]))
    try:
        return Geography.from_rows(rows)
    except ValueError as exc:
        raise SchemaError(path, 0, None, str(exc)) from None


def default_geography(geos) -> Geography:
    """HHS-region geography covering ``geos`` (state postal codes, R1..R10, US)."""
    lookup = {s: r for r, members in HHS_REGIONS.items() for s in members}
    units = [GeoUnit("US", Level.NATION)]
    used_regions = set()
    for g in sorted(set(geos)):
        if g == "US" or g in HHS_REGIONS:
            continue
        if g not in lookup:
            raise ValueError(f"geo {g!r} is not a known state; supply geography.csv")
        units.append(GeoUnit(g, Level.STATE, lookup[g]))
        used_regions.add(lookup[g])
    used_regions |= {g for g in geos if g in HHS_REGIONS}
    units += [GeoUnit(r, Level.REGION) for r in sorted(used_regions)]
    return Geography(units)


def load_bundle(paths, cfg=None) -> DatasetBundle:
    """Read and validate the input CSVs.

    ``paths`` is a directory holding ``cases.csv``, ``ili.csv``, ``trends.csv``
    and optionally ``geography.csv``, or a mapping with those keys (without
    extension). Region and nation series missing from the files are derived
    from member states.
    """
    if isinstance(paths, (str, Path)):
        root = Path(paths)
        paths = {k: root / f"{k}.csv" for k in ("cases", "ili", "trends", "geography")}
        if not paths["geography"].exists():
            del paths["geography"]
        if not paths["trends"].exists():
            del paths["trends"]
    paths = {k: Path(v) for k, v in paths.items()}
    for k in ("cases", "ili"):
        if k not in paths or not paths[k].exists():
            raise FileNotFoundError(f"missing {k} file")

    seen = set()
    daily = defaultdict(list)
    p = paths["cases"]
    for ln, r in _rows(p, CASES_HEADER):
        d = _parse_date(p, ln, "date", r["date"])
        if not r["geo"]:
            raise SchemaError(p, ln, "geo", "empty geo")
        if (d, r["geo"]) in seen:
            raise SchemaError(p, ln, "date", f"duplicate row for ({d}, {r['geo']})")
        seen.add((d, r["geo"]))
        c = _parse_float(p, ln, "cases", r["cases"], nonneg=True)
        dd = _parse_float(p, ln, "deaths", r["deaths"], nonneg=True)
        daily[r["geo"]].append((d, c, dd, ln))
    cases, deaths = {}, {}
    for geo, pts in daily.items():
        cases[geo] = _assemble(p, [(d, c, ln) for d, c, _, ln in pts], DailySeries, "cases", geo, 1)
        deaths[geo] = _assemble(p, [(d, x, ln) for d, _, x, ln in pts], DailySeries, "deaths", geo, 1)

    seen = set()
    weekly = defaultdict(list)
    p = paths["ili"]
    for ln, r in _rows(p, ILI_HEADER):
        d = _parse_date(p, ln, "week_ending", r["week_ending"])
        if d.weekday() != SATURDAY:
            raise SchemaError(p, ln, "week_ending", f"{d} is not a Saturday")
        if (d, r["geo"]) in seen:
            raise SchemaError(p, ln, "week_ending", f"duplicate row for ({d}, {r['geo']})")
        seen.add((d, r["geo"]))
        weekly[r["geo"]].append((d, _parse_float(p, ln, "ili_pct", r["ili_pct"], nonneg=True), ln))
    ili = {geo: _assemble(p, pts, WeeklySeries, "ili", geo, 7) for geo, pts in weekly.items()}

    trends = {}
    if "trends" in paths:
        p = paths["trends"]
        seen = set()
        by_key = defaultdict(list)
        for ln, r in _rows(p, TRENDS_HEADER):
            d = _parse_date(p, ln, "date", r["date"])
            if not r["term"]:
                raise SchemaError(p, ln, "term", "empty term")
            key = (r["geo"], r["term"])
            if (d,) + key in seen:
                raise SchemaError(p, ln, "date", f"duplicate row for ({d}, {r['geo']}, {r['term']})")
            seen.add((d,) + key)
            by_key[key].append((d, _parse_float(p, ln, "value", r["value"]), ln))
        by_term = defaultdict(list)
        for key, pts in by_key.items():
            by_term[key[1]].append(key)
        for term, keys in by_term.items():
            pts_all = [pt for k in keys for pt in by_key[k]]
            is_weekly = all(d.weekday() == SATURDAY for d, _, _ in pts_all) and all(
                len(by_key[k]) == 1 or min(
                    (b[0] - a[0]).days for a, b in zip(sorted(by_key[k]), sorted(by_key[k])[1:])
                ) == 7
                for k in keys
            )
            cls, step = (WeeklySeries, 7) if is_weekly else (DailySeries, 1)
            for k in keys:
                trends[k] = _assemble(p, by_key[k], cls, f"term:{term}", k[0], step)

    geos = set(cases) | set(ili) | {g for g, _ in trends}
    if "geography" in paths:
        geography = read_geography(paths["geography"])
        for g in sorted(geos):
            if g not in geography:
                raise SchemaError(paths["geography"], 0, "geo", f"geo {g!r} used in data but not declared")
    else:
        geography = default_geography(geos)
    bundle = DatasetBundle(cases, deaths, ili, trends, geography).with_aggregates()
    log.info("loaded bundle: %s", bundle.row_counts())
    return bundle


def _fmt(v: float) -> str:
    return repr(float(v))


def write_bundle(bundle: DatasetBundle, out_dir, states_only=True):
    """Write the bundle in the ingestion schema (round-trips through load_bundle)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    geo = bundle.geography
    keep = set(geo.states) if states_only else set(geo.units)
    with (out / "cases.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CASES_HEADER)
        for g in sorted(set(bundle.cases) & keep):
            c, d = bundle.cases[g], bundle.deaths[g]
            for day, cv, dv in zip(c.dates, c.values, d.window(c.start, c.end).values):
                w.writerow([day.isoformat(), g, _fmt(cv), _fmt(dv)])
    with (out / "ili.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ILI_HEADER)
        for g in sorted(set(bundle.ili) & keep):
            s = bundle.ili[g]
            for day, v in zip(s.dates, s.values):
                w.writerow([day.isoformat(), g, _fmt(v)])
    with (out / "trends.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRENDS_HEADER)
        for (g, term) in sorted(k for k in bundle.trends if k[0] in keep):
            s = bundle.trends[(g, term)]
            for day, v in zip(s.dates, s.values):
                w.writerow([day.isoformat(), g, term, _fmt(v)])
    with (out / "geography.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GEOGRAPHY_HEADER)
        for row in geo.rows():
            w.writerow(row)
