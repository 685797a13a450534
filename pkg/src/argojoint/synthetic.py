"""Seeded twin-epidemic generator with planted search leads.

Each state has a smooth latent COVID-19 intensity built from waves shared
with the nation plus a state-specific wave. Daily cases are the latent
intensity times a weekday profile and lognormal noise; deaths follow cases
with a fixed delay. Search term ``k`` at day ``t`` reads the latent at
``t + lag_k`` (with lognormal noise), so it leads cases by ``lag_k`` days. Weekly %ILI mixes
standardised weekly cases with an independent seasonal flu component so
that, without noise, its correlation with weekly cases equals ``coupling``.
Weekly flu terms lead %ILI by one week.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from .bundle import DatasetBundle
from .panel import DailySeries, Geography, GeoUnit, Level, WeeklySeries, as_date

DEATH_DELAY = 7
# common across states, so summed (region, nation) terms track summed intensity
SEARCH_SCALE = 0.02
DEFAULT_WEEKDAY = (1.1, 1.1, 1.05, 1.0, 1.0, 0.85, 0.9)  # Monday .. Sunday


@dataclass(frozen=True)
class SyntheticScenario:
    n_states: int = 10
    weeks: int = 120
    search_lags: tuple[int, ...] = (7, 14, 21, 28)
    coupling: float = 0.6
    weekday_weights: tuple[float, ...] = DEFAULT_WEEKDAY
    case_noise: float = 0.1
    death_noise: float = 0.15
    search_noise: float = 0.2
    ili_noise: float = 0.05
    flu_terms: int = 2
    states_per_region: int = 3
    case_fatality: float = 0.02
    start: dt.date = dt.date(2020, 3, 1)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "start", as_date(self.start))
        object.__setattr__(self, "search_lags", tuple(int(x) for x in self.search_lags))
        object.__setattr__(self, "weekday_weights", tuple(float(x) for x in self.weekday_weights))
        if self.start.weekday() != 6:
            raise ValueError("start must be a Sunday so weeks end on Saturdays")
        if self.n_states < 1 or self.weeks < 2 or self.states_per_region < 1:
            raise ValueError("need at least one state and two weeks")
        if any(x < 0 for x in self.search_lags):
            raise ValueError("search lags must be non-negative")
        w = self.weekday_weights
        if len(w) != 7 or min(w) <= 0 or abs(sum(w) - 7.0) > 1e-9:
            raise ValueError("weekday weights must be 7 positive values summing to 7")
        if not -1.0 <= self.coupling <= 1.0:
            raise ValueError("coupling must lie in [-1, 1]")
        for name in ("case_noise", "death_noise", "search_noise", "ili_noise"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in uint64")

    @property
    def states(self) -> list[str]:
        return [f"S{i:02d}" for i in range(1, self.n_states + 1)]

    @property
    def term_names(self) -> list[str]:
        return [f"search_{k:02d}" for k in range(len(self.search_lags))]

    def geography(self) -> Geography:
        units = [GeoUnit("US", Level.NATION)]
        n_regions = -(-self.n_states // self.states_per_region)
        units += [GeoUnit(f"R{r}", Level.REGION) for r in range(1, n_regions + 1)]
        units += [GeoUnit(s, Level.STATE, f"R{i // self.states_per_region + 1}") for i, s in enumerate(self.states)]
        return Geography(units)


def _bumps(t, centers, widths, heights):
    return (heights[:, None] * np.exp(-0.5 * ((t[None, :] - centers[:, None]) / widths[:, None]) ** 2)).sum(axis=0)


def _standardize(x, n=None):
    """Centre and scale ``x`` by the mean and standard deviation of its first ``n`` entries."""
    head = x[:n]
    x = x - head.mean()
    sd = head.std()
    return x / sd if sd > 0 else x


def _smooth_noise(rng, n, span):
    kernel = np.exp(-0.5 * (np.arange(-3 * span, 3 * span + 1) / span) ** 2)
    raw = rng.standard_normal(n + kernel.size - 1)
    return _standardize(np.convolve(raw, kernel / kernel.sum(), mode="valid"))


def generate_synthetic(sc: SyntheticScenario) -> DatasetBundle:
    """Deterministic bundle of state series; region and nation series are derived."""
    rng = np.random.Generator(np.random.Philox(key=sc.seed))
    n_days = 7 * sc.weeks
    lead = max(sc.search_lags, default=0)
    extra = 7  # one more week so flu terms can look one week ahead
    # day index relative to sc.start, covering the death delay and the search leads
    t = np.arange(-DEATH_DELAY, n_days + extra + lead, dtype=np.float64)
    n_waves = max(2, sc.weeks // 12)
    centers = np.sort(rng.uniform(0.05, 0.95, n_waves)) * n_days
    widths = rng.uniform(18.0, 40.0, n_waves)
    heights = rng.uniform(1.0, 2.2, n_waves)
    weekday = np.asarray(sc.weekday_weights)
    dow = (np.arange(n_days + extra) + sc.start.weekday()) % 7

    ends = [sc.start + dt.timedelta(days=7 * w + 6) for w in range(sc.weeks + 1)]
    phase = np.array([(e - dt.date(e.year, 1, 25)).days for e in ends], dtype=np.float64)
    phase = (phase + 182.0) % 365.0 - 182.0
    flu_national = np.exp(-0.5 * (phase / 35.0) ** 2)

    cases, deaths, ili, trends = {}, {}, {}, {}
    term_gain = rng.uniform(0.5, 1.5, len(sc.search_lags))
    flu_gain = rng.uniform(0.5, 1.5, sc.flu_terms)
    for state in sc.states:
        shift = rng.uniform(-7.0, 7.0)
        own_c = rng.uniform(0.1, 0.9) * n_days
        own = _bumps(t, np.array([own_c]), np.array([rng.uniform(15.0, 35.0)]), np.array([rng.uniform(0.5, 1.5)]))
        log_latent = (np.log(rng.uniform(40.0, 400.0)) + _bumps(t - shift, centers, widths,
                      heights * rng.uniform(0.7, 1.3, n_waves)) + own)
        latent = np.exp(log_latent)

        def at(offset, latent=latent):
            return latent[DEATH_DELAY + offset : DEATH_DELAY + offset + n_days + extra]

        daily = at(0) * weekday[dow] * np.exp(sc.case_noise * rng.standard_normal(n_days + extra))
        dead = sc.case_fatality * at(-DEATH_DELAY) * weekday[dow] * np.exp(
            sc.death_noise * rng.standard_normal(n_days + extra))
        cases[state] = DailySeries(state, "cases", sc.start, daily[:n_days])
        deaths[state] = DailySeries(state, "deaths", sc.start, dead[:n_days])

        for name, d, g in zip(sc.term_names, sc.search_lags, term_gain):
            signal = g * SEARCH_SCALE * at(d)[:n_days]
            noisy = signal * np.exp(sc.search_noise * rng.standard_normal(n_days))
            trends[(state, name)] = DailySeries(state, f"term:{name}", sc.start, noisy)

        weekly_cases = daily.reshape(-1, 7).sum(axis=1)
        z_cases = _standardize(weekly_cases, sc.weeks)
        flu = flu_national * rng.uniform(0.7, 1.3) + 0.3 * _smooth_noise(rng, sc.weeks + 1, 3)
        head = slice(0, sc.weeks)
        flu = flu - flu[head].mean()
        flu = _standardize(flu - (flu[head] @ z_cases[head]) / (z_cases[head] @ z_cases[head]) * z_cases, sc.weeks)
        c = sc.coupling
        level = 2.5 + 0.8 * (c * z_cases + np.sqrt(1.0 - c * c) * flu)
        level = level + sc.ili_noise * rng.standard_normal(level.size)
        level = np.maximum(level, 0.05)
        first_sat = sc.start + dt.timedelta(days=6)
        ili[state] = WeeklySeries(state, "ili", first_sat, level[: sc.weeks])
        for j in range(sc.flu_terms):
            ahead = flu_gain[j] * 20.0 * level[1:]
            noise = sc.search_noise * ahead.std() * rng.standard_normal(sc.weeks)
            trends[(state, f"flu_{j:02d}")] = WeeklySeries(state, f"term:flu_{j:02d}", first_sat, ahead + noise)

    bundle = DatasetBundle(cases, deaths, ili, trends, sc.geography())
    return bundle.with_aggregates()
