"""Multi-geography daily/weekly series, calendar alignment and differencing.

Dates are handled as :class:`datetime.date` at the API surface and as integer
day ordinals internally. Weeks always end on Saturday.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import pandas as pd

SATURDAY = 5  # datetime.date.weekday()


class Level(str, Enum):
    STATE = "state"
    REGION = "region"
    NATION = "nation"


def as_date(value) -> dt.date:
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, dt.date):
        return value
    if isinstance(value, np.datetime64):
        return dt.date.fromisoformat(str(value.astype("datetime64[D]")))
    return dt.date.fromisoformat(str(value))


def is_saturday(d) -> bool:
    return as_date(d).weekday() == SATURDAY


def week_ending(d) -> dt.date:
    """Saturday closing the week that contains ``d``."""
    d = as_date(d)
    return d + dt.timedelta(days=(SATURDAY - d.weekday()) % 7)


@dataclass(frozen=True)
class GeoUnit:
    id: str
    level: Level
    region_of: str | None = None
    neighbors: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.id:
            raise ValueError("empty geo id")
        if self.level is Level.STATE and not self.region_of:
            raise ValueError(f"state {self.id!r} has no region")
        if self.level is not Level.STATE and self.region_of is not None:
            raise ValueError(f"{self.level.value} {self.id!r} cannot belong to a region")


class Geography:
    """Nation / region / state hierarchy.

    Each state's ``neighbors`` are all states of its region (itself included),
    in sorted order.
    """

    def __init__(self, units):
        units = list(units)
        ids = [u.id for u in units]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate geo ids")
        nations = [u for u in units if u.level is Level.NATION]
        if len(nations) > 1:
            raise ValueError("at most one nation")
        regions = {u.id for u in units if u.level is Level.REGION}
        members: dict[str, list[str]] = {r: [] for r in regions}
        for u in units:
            if u.level is Level.STATE:
                if u.region_of not in regions:
                    raise ValueError(f"state {u.id!r} references unknown region {u.region_of!r}")
                members[u.region_of].append(u.id)
        self.nation = nations[0].id if nations else "US"
        self._members = {r: tuple(sorted(m)) for r, m in members.items()}
        built = {}
        for u in units:
            if u.level is Level.STATE:
                u = GeoUnit(u.id, u.level, u.region_of, self._members[u.region_of])
            built[u.id] = u
        if self.nation not in built:
            built[self.nation] = GeoUnit(self.nation, Level.NATION)
        self.units = dict(sorted(built.items()))

    @classmethod
    def from_rows(cls, rows):
        """Build from ``(geo, level, region)`` tuples; ``region`` may be empty."""
        return cls(GeoUnit(g, Level(lv), r or None) for g, lv, r in rows)

    def __getitem__(self, geo) -> GeoUnit:
        return self.units[geo]

    def __contains__(self, geo):
        return geo in self.units

    @property
    def states(self) -> list[str]:
        return [g for g, u in self.units.items() if u.level is Level.STATE]

    @property
    def regions(self) -> list[str]:
        return [g for g, u in self.units.items() if u.level is Level.REGION]

    def members(self, region) -> tuple[str, ...]:
        return self._members[region]

    def region_of(self, state) -> str:
        return self.units[state].region_of

    def neighbors(self, state) -> tuple[str, ...]:
        return self.units[state].neighbors

    def rows(self):
        return [(u.id, u.level.value, u.region_of or "") for u in self.units.values()]

    def __eq__(self, other):
        return isinstance(other, Geography) and self.units == other.units


@dataclass(frozen=True, eq=False)
class _Series:
    geo: str
    signal: str
    start: dt.date
    values: np.ndarray = field(repr=False)

    STEP = 1

    def __post_init__(self):
        start = as_date(self.start)
        object.__setattr__(self, "start", start)
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size < 1:
            raise ValueError(f"{self.geo}/{self.signal}: values must be a non-empty vector")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"{self.geo}/{self.signal}: non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        return (
            type(self) is type(other)
            and (self.geo, self.signal, self.start) == (other.geo, other.signal, other.start)
            and np.array_equal(self.values, other.values)
        )

    @property
    def start_ord(self) -> int:
        return self.start.toordinal()

    @property
    def end(self) -> dt.date:
        return dt.date.fromordinal(self.start_ord + self.STEP * (len(self) - 1))

    @property
    def dates(self) -> list[dt.date]:
        s = self.start_ord
        return [dt.date.fromordinal(s + self.STEP * i) for i in range(len(self))]

    def index_of(self, d) -> int:
        off = as_date(d).toordinal() - self.start_ord
        if off % self.STEP:
            raise KeyError(f"{d} is not on the {self.geo}/{self.signal} grid")
        i = off // self.STEP
        if not 0 <= i < len(self):
            raise KeyError(f"{d} outside {self.start}..{self.end} for {self.geo}/{self.signal}")
        return i

    def value_at(self, d) -> float:
        return float(self.values[self.index_of(d)])

    def window(self, first, last):
        """Sub-series over ``[first, last]`` clipped to the available range."""
        first = max(as_date(first).toordinal(), self.start_ord)
        last = min(as_date(last).toordinal(), self.end.toordinal())
        i0 = -(-(first - self.start_ord) // self.STEP)
        i1 = (last - self.start_ord) // self.STEP
        if i1 < i0:
            return None
        return self.replace(start=dt.date.fromordinal(self.start_ord + self.STEP * i0),
                            values=self.values[i0 : i1 + 1])

    def truncate(self, as_of):
        """Everything dated on or before ``as_of``; ``None`` when nothing is left."""
        return self.window(self.start, as_of)

    def replace(self, **changes):
        kw = dict(geo=self.geo, signal=self.signal, start=self.start, values=self.values)
        kw.update(changes)
        return type(self)(**kw)

    def to_series(self) -> pd.Series:
        return pd.Series(self.values, index=pd.DatetimeIndex(self.dates), name=f"{self.geo}/{self.signal}")


class DailySeries(_Series):
    STEP = 1


class WeeklySeries(_Series):
    """Values indexed by Saturday week endings."""

    STEP = 7

    def __post_init__(self):
        super().__post_init__()
        if self.start.weekday() != SATURDAY:
            raise ValueError(f"{self.geo}/{self.signal}: week ending {self.start} is not a Saturday")

    @property
    def week_endings(self) -> list[dt.date]:
        return self.dates


@dataclass(frozen=True, eq=False)
class Increment:
    base: WeeklySeries
    deltas: np.ndarray = field(repr=False)

    def reconstruct(self) -> np.ndarray:
        out = np.empty(len(self.base))
        out[0] = self.base.values[0]
        out[1:] = self.base.values[0] + np.cumsum(self.deltas)
        return out


def aggregate_daily_to_weekly(s: DailySeries, anchor=None) -> WeeklySeries:
    """Sum complete Saturday-ending weeks of a daily series.

    ``anchor`` is the last week ending to keep (a Saturday); by default the
    last Saturday covered by ``s``. Partial weeks at either end are dropped.
    """
    first_sat = s.start_ord + 6
    first_sat += (SATURDAY - dt.date.fromordinal(first_sat).weekday()) % 7
    last_sat = s.end.toordinal()
    last_sat -= (dt.date.fromordinal(last_sat).weekday() - SATURDAY) % 7
    if anchor is not None:
        anchor = as_date(anchor)
        if anchor.weekday() != SATURDAY:
            raise ValueError(f"anchor {anchor} is not a Saturday")
        last_sat = min(last_sat, anchor.toordinal())
    if last_sat < first_sat:
        raise ValueError(f"{s.geo}/{s.signal}: no complete Saturday-ending week")
    n_weeks = (last_sat - first_sat) // 7 + 1
    i0 = first_sat - 6 - s.start_ord
    block = s.values[i0 : i0 + 7 * n_weeks].reshape(n_weeks, 7)
    return WeeklySeries(s.geo, s.signal, dt.date.fromordinal(first_sat), block.sum(axis=1))


def lag(s, k: int):
    """Shift values forward by ``k`` steps: ``out[t] = s[t - k]``."""
    if k < 0:
        raise ValueError("lag must be non-negative")
    if k >= len(s):
        raise ValueError(f"lag {k} needs more than {len(s)} observations")
    if k == 0:
        return s
    return s.replace(start=dt.date.fromordinal(s.start_ord + s.STEP * k), values=s.values[: len(s) - k])


def increment(s: WeeklySeries) -> Increment:
    if len(s) < 2:
        raise ValueError("increment needs at least two weeks")
    return Increment(s, np.diff(s.values))


def align(*series) -> pd.DataFrame:
    """Join series on their common dates; columns keep the input order."""
    if not series:
        raise ValueError("align needs at least one series")
    kinds = {type(s) for s in series}
    if len(kinds) != 1:
        raise ValueError("cannot align series of different frequencies")
    first = max(s.start_ord for s in series)
    last = min(s.end.toordinal() for s in series)
    if last < first:
        raise ValueError("series do not overlap")
    cols = {}
    for s in series:
        name = f"{s.geo}/{s.signal}"
        if name in cols:
            raise ValueError(f"duplicate column {name}")
        cols[name] = s.window(dt.date.fromordinal(first), dt.date.fromordinal(last)).values
    index = pd.DatetimeIndex(series[0].window(dt.date.fromordinal(first), dt.date.fromordinal(last)).dates)
    return pd.DataFrame(cols, index=index)
