"""Daily ILI imputation from weekly ILI using past COVID-19 weekly case profiles.

For every draw and every week a donor week is picked uniformly among the
weeks seen so far; the donor's seven daily case counts, normalised to sum to
one, spread the week's ILI over its days. Weekly totals are preserved exactly
(up to rounding).
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .panel import DailySeries, WeeklySeries, as_date


def _geo_key(geo: str) -> int:
    return int.from_bytes(hashlib.blake2b(geo.encode(), digest_size=8).digest(), "little")


def substream(seed: int, geo: str, week: dt.date) -> np.random.Generator:
    """Counter-based stream for one (geo, week); draw ``n`` is its ``n``-th output.

    Streams never overlap and do not depend on which other weeks or geos are
    generated, so results are independent of processing order.
    """
    key = np.array([seed, _geo_key(geo)], dtype=np.uint64)
    counter = np.array([0, 0, as_date(week).toordinal(), 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def impute_week(donor_cases, weekly_ili):
    """Spread ``weekly_ili`` over seven days in proportion to ``donor_cases``.

    Returns ``(values, used_fallback)``. An all-zero donor with positive ILI
    falls back to the flat profile ``weekly_ili / 7``.
    """
    donor = np.asarray(donor_cases, dtype=np.float64)
    if donor.shape != (7,) or np.any(donor < 0):
        raise ValueError("donor must be seven non-negative values")
    if weekly_ili < 0:
        raise ValueError("weekly ILI must be non-negative")
    total = donor.sum()
    if total == 0:
        return np.full(7, weekly_ili / 7.0), weekly_ili > 0
    return donor * (weekly_ili / total), False


@dataclass(frozen=True, eq=False)
class ImputationSet:
    """``draws[n]`` is the daily series of draw ``n`` starting on ``start``.

    ``source_weeks[n, k]`` is the day ordinal of the Saturday ending the donor
    week used for imputed week ``k`` of draw ``n``.
    """

    geo: str
    weekly: WeeklySeries | None
    draws: np.ndarray = field(repr=False)
    source_weeks: np.ndarray = field(repr=False)
    fallback: np.ndarray = field(repr=False)

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]

    @property
    def n_weeks(self) -> int:
        return self.source_weeks.shape[1]

    @property
    def start(self) -> dt.date | None:
        return None if self.weekly is None else self.weekly.start - dt.timedelta(days=6)

    def draw(self, n: int) -> DailySeries:
        return DailySeries(self.geo, "ili", self.start, self.draws[n])

    def truncate(self, as_of) -> ImputationSet:
        if self.weekly is None:
            return self
        w = self.weekly.truncate(as_of)
        k = 0 if w is None else len(w)
        return ImputationSet(self.geo, w, self.draws[:, : 7 * k], self.source_weeks[:, :k], self.fallback[:, :k])


def impute_area(weekly_ili: WeeklySeries, daily_cases: DailySeries, n_draws: int, seed: int,
                inclusive: bool = True, first_week=None) -> ImputationSet:
    """Impute ``n_draws`` daily ILI sequences for one area.

    The candidate weeks are the ILI weeks fully covered by ``daily_cases`` and
    ending on or after ``first_week``. Candidate week ``k`` (0-based) draws its
    donor from candidates ``0..k`` when ``inclusive``; otherwise from
    ``0..k-1``, in which case candidate 0 only serves as a donor.
    """
    if n_draws < 1:
        raise ValueError("need at least one draw")
    lo = daily_cases.start + dt.timedelta(days=6)
    if first_week is not None:
        lo = max(lo, as_date(first_week))
    pool = weekly_ili.window(lo, daily_cases.end)
    skip = 0 if inclusive else 1
    if pool is None or len(pool) <= skip:
        raise ValueError(f"{weekly_ili.geo}: no eligible donor week")

    i0 = daily_cases.index_of(pool.start - dt.timedelta(days=6))
    profiles = daily_cases.values[i0 : i0 + 7 * len(pool)].reshape(len(pool), 7)
    totals = profiles.sum(axis=1)

    weeks = pool.window(pool.dates[skip], pool.end)
    n_weeks = len(weeks)
    source = np.empty((n_draws, n_weeks), dtype=np.int64)
    for k, week in enumerate(weeks.dates, start=skip):
        u = substream(seed, weekly_ili.geo, week).random(n_draws)
        size = k + 1 - skip
        source[:, k - skip] = np.minimum((u * size).astype(np.int64), size - 1)

    ili = weeks.values
    donor_tot = totals[source]
    zero = donor_tot == 0
    scale = np.where(zero, 0.0, ili[None, :] / np.where(zero, 1.0, donor_tot))
    daily = profiles[source] * scale[..., None]
    daily[zero] = np.broadcast_to(ili / 7.0, zero.shape)[zero][:, None]
    fallback = zero & (ili[None, :] > 0)
    donor_weeks = np.asarray([d.toordinal() for d in pool.dates], dtype=np.int64)[source]
    return ImputationSet(weekly_ili.geo, weeks, daily.reshape(n_draws, 7 * n_weeks), donor_weeks, fallback)


def weekly_views(iset: ImputationSet) -> np.ndarray:
    """Weekly sums of every draw, shape ``(n_draws, n_weeks)``."""
    return iset.draws.reshape(iset.n_draws, iset.n_weeks, 7).sum(axis=2)


def weekly_view(iset: ImputationSet, draw: int = 0) -> WeeklySeries | None:
    if iset.n_weeks == 0:
        return None
    return WeeklySeries(iset.geo, "ili", iset.weekly.start, weekly_views(iset)[draw])


def impute_bundle(bundle, cfg, geos=None) -> dict[str, ImputationSet]:
    """Impute every geography that has both ILI and daily cases."""
    geos = sorted(set(bundle.ili) & set(bundle.cases)) if geos is None else list(geos)
    return {
        g: impute_area(bundle.ili[g], bundle.cases[g], cfg.imputation_draws, cfg.seed,
                       inclusive=cfg.donor_inclusive)
        for g in geos
    }


def write_imputations(sets, path) -> None:
    """Audit dump: ``draw,date,geo,value,donor_week``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["draw", "date", "geo", "value", "donor_week"])
        for geo in sorted(sets):
            s = sets[geo]
            if s.n_weeks == 0:
                continue
            days = [s.start + dt.timedelta(days=i) for i in range(7 * s.n_weeks)]
            for n in range(s.n_draws):
                for i, day in enumerate(days):
                    donor = dt.date.fromordinal(int(s.source_weeks[n, i // 7]))
                    w.writerow([n, day.isoformat(), geo, repr(float(s.draws[n, i])), donor.isoformat()])
