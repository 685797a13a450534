import datetime as dt

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from argojoint.panel import (
    DailySeries,
    Geography,
    GeoUnit,
    Level,
    WeeklySeries,
    aggregate_daily_to_weekly,
    align,
    increment,
    lag,
    week_ending,
)

SUN = dt.date(2021, 1, 3)
SAT = dt.date(2021, 1, 9)

finite = st.floats(-1e6, 1e6, allow_nan=False)


def daily(values, start=SUN, geo="CA", signal="cases"):
    return DailySeries(geo, signal, start, values)


def weekly(values, start=SAT, geo="CA", signal="ili"):
    return WeeklySeries(geo, signal, start, values)


class TestAggregate:
    def test_constant_two_weeks(self):
        w = aggregate_daily_to_weekly(daily(np.ones(14)), anchor=SAT + dt.timedelta(days=7))
        assert w.values.tolist() == [7.0, 7.0]
        assert w.start == SAT

    def test_hand_sum(self):
        w = aggregate_daily_to_weekly(daily(list(range(1, 8)) + [0] * 7))
        assert w.values.tolist() == [28.0, 0.0]

    def test_six_days_rejected(self):
        with pytest.raises(ValueError):
            aggregate_daily_to_weekly(daily(np.ones(6)))

    def test_partial_weeks_dropped(self):
        # starts on a Wednesday, ends on a Tuesday: one complete week inside
        s = daily(np.arange(14.0), start=dt.date(2021, 1, 6))
        w = aggregate_daily_to_weekly(s)
        assert w.start == dt.date(2021, 1, 16)
        assert w.values.tolist() == [float(sum(range(4, 11)))]

    def test_anchor_must_be_saturday(self):
        with pytest.raises(ValueError):
            aggregate_daily_to_weekly(daily(np.ones(14)), anchor=dt.date(2021, 1, 13))

    @given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=20))
    def test_uniform_spread_round_trip(self, vals):
        spread = np.repeat(np.asarray(vals) / 7.0, 7)
        back = aggregate_daily_to_weekly(daily(spread)).values
        np.testing.assert_allclose(back, vals, rtol=1e-12, atol=1e-300)


class TestLag:
    def test_zero_is_identity(self):
        s = weekly([1.0, 2.0, 3.0])
        assert lag(s, 0) == s

    def test_shift(self):
        s = weekly([1.0, 2.0, 3.0])
        out = lag(s, 1)
        assert out.values.tolist() == [1.0, 2.0]
        assert out.dates == s.dates[1:]

    def test_too_long(self):
        with pytest.raises(ValueError):
            lag(weekly([5.0]), 1)

    @given(st.lists(finite, min_size=3, max_size=30), st.integers(0, 10), st.integers(0, 10))
    def test_composition(self, vals, a, b):
        s = daily(vals)
        if a + b >= len(s):
            return
        np.testing.assert_array_equal(lag(lag(s, a), b).values, lag(s, a + b).values)
        assert lag(lag(s, a), b).start == lag(s, a + b).start


class TestIncrement:
    def test_constant(self):
        assert increment(weekly([3.0, 3.0, 3.0])).deltas.tolist() == [0.0, 0.0]

    def test_hand(self):
        assert increment(weekly([1.0, 4.0, 2.0])).deltas.tolist() == [3.0, -2.0]

    def test_single_week(self):
        with pytest.raises(ValueError):
            increment(weekly([7.0]))

    @given(st.lists(finite, min_size=2, max_size=40))
    def test_reconstruction(self, vals):
        inc = increment(weekly(vals))
        assert len(inc.deltas) == len(vals) - 1
        scale = max(1.0, float(np.abs(vals).max()))
        np.testing.assert_allclose(inc.reconstruct(), vals, rtol=1e-12, atol=1e-12 * scale * len(vals))


class TestAlign:
    def test_intersection(self):
        a = weekly(np.arange(10.0), geo="A")
        b = weekly(np.arange(8.0), start=SAT + dt.timedelta(days=28), geo="B")
        df = align(a, b)
        assert len(df) == 6
        assert df.index[0].date() == SAT + dt.timedelta(days=28)
        assert list(df.columns) == ["A/ili", "B/ili"]
        assert df["A/ili"].tolist() == [4.0, 5.0, 6.0, 7.0, 8.0, 9.0]

    def test_identity(self):
        a = weekly([1.0, 2.0])
        assert align(a)["CA/ili"].tolist() == [1.0, 2.0]

    def test_mixed_frequency(self):
        with pytest.raises(ValueError):
            align(daily(np.ones(7)), weekly([1.0]))

    def test_disjoint(self):
        a = weekly([1.0], geo="A")
        b = weekly([1.0], start=SAT + dt.timedelta(days=7), geo="B")
        with pytest.raises(ValueError):
            align(a, b)


class TestSeries:
    def test_weekly_requires_saturday(self):
        with pytest.raises(ValueError):
            WeeklySeries("CA", "ili", dt.date(2021, 1, 6), [1.0])

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            daily([1.0, float("nan")])

    def test_immutable(self):
        s = daily([1.0, 2.0])
        with pytest.raises(ValueError):
            s.values[0] = 5.0

    def test_window_and_truncate(self):
        s = daily(np.arange(10.0))
        assert s.truncate(SUN + dt.timedelta(days=3)).values.tolist() == [0.0, 1.0, 2.0, 3.0]
        assert s.truncate(SUN - dt.timedelta(days=1)) is None

    def test_week_ending(self):
        assert week_ending(dt.date(2021, 1, 6)) == SAT
        assert week_ending(SAT) == SAT


class TestGeography:
    def test_neighbors_share_region(self):
        g = Geography([
            GeoUnit("US", Level.NATION), GeoUnit("R1", Level.REGION), GeoUnit("R2", Level.REGION),
            GeoUnit("MA", Level.STATE, "R1"), GeoUnit("CT", Level.STATE, "R1"), GeoUnit("NY", Level.STATE, "R2"),
        ])
        assert g.neighbors("MA") == ("CT", "MA")
        assert g.neighbors("NY") == ("NY",)
        for s in g.states:
            assert all(g.region_of(n) == g.region_of(s) for n in g.neighbors(s))
        assert g["US"].region_of is None

    def test_state_needs_region(self):
        with pytest.raises(ValueError):
            GeoUnit("MA", Level.STATE)

    def test_unknown_region(self):
        with pytest.raises(ValueError):
            Geography([GeoUnit("MA", Level.STATE, "R9")])
