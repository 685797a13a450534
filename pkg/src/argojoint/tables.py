"""Forecast table: ``(geo, target_week, horizon, method) -> value``."""

from __future__ import annotations

import csv
import datetime as dt
import math
from pathlib import Path
from typing import NamedTuple

import pandas as pd

from .panel import as_date

FORECAST_HEADER = ["geo", "target_week", "horizon", "method", "value"]


class ForecastRow(NamedTuple):
    geo: str
    target_week: dt.date
    horizon: int
    method: str
    value: float

    @property
    def key(self):
        return (self.geo, self.target_week, self.horizon, self.method)


class ForecastTable:
    """Sorted, key-unique collection of point forecasts."""

    def __init__(self, rows=()):
        by_key = {}
        for r in rows:
            r = ForecastRow(str(r[0]), as_date(r[1]), int(r[2]), str(r[3]), float(r[4]))
            if not math.isfinite(r.value):
                raise ValueError(f"non-finite forecast for {r.key}")
            if r.key in by_key:
                raise ValueError(f"duplicate forecast key {r.key}")
            by_key[r.key] = r
        self.rows = tuple(by_key[k] for k in sorted(by_key))
        self._index = {r.key: r.value for r in self.rows}

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def __eq__(self, other):
        return isinstance(other, ForecastTable) and self.rows == other.rows

    def __add__(self, other):
        return ForecastTable(self.rows + tuple(other))

    def get(self, geo, target_week, horizon, method, default=None):
        return self._index.get((geo, as_date(target_week), horizon, method), default)

    @property
    def methods(self) -> list[str]:
        return sorted({r.method for r in self.rows})

    def filter(self, **where) -> ForecastTable:
        def ok(r):
            return all(getattr(r, k) == v for k, v in where.items())

        return ForecastTable(r for r in self.rows if ok(r))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=FORECAST_HEADER)


def write_forecasts(table: ForecastTable, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FORECAST_HEADER)
        for r in table.rows:
            w.writerow([r.geo, r.target_week.isoformat(), r.horizon, r.method, repr(r.value)])


def read_forecasts(path) -> ForecastTable:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != FORECAST_HEADER:
            raise ValueError(f"{path}: expected header {','.join(FORECAST_HEADER)}")
        return ForecastTable((g, w, int(h), m, float(v)) for g, w, h, m, v in reader)
