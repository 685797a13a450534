import datetime as dt

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from argojoint.config import RunConfig
from argojoint.features import (
    InsufficientHistory,
    LagTable,
    build_case_design,
    build_death_design,
    build_ili_design,
    build_weekly_design,
    resolve_lag_table,
    select_optimal_lag,
)
from argojoint.imputation import impute_area
from argojoint.panel import DailySeries, WeeklySeries
from argojoint.synthetic import SyntheticScenario, generate_synthetic
from conftest import week

T = week(40)
TABLE = LagTable({"search_00": (4, 9), "search_01": (12, 30), "search_02": (21, 3), "search_03": (40, 40)})


@pytest.fixture(scope="module")
def draw(small_bundle):
    return impute_area(small_bundle.ili["US"], small_bundle.cases["US"], 1, seed=0).draw(0)


def all_lags_at_least(dm, horizon):
    return all(c.lag >= horizon for c in dm.columns if c.group != "weekday")


class TestCaseDesign:
    @pytest.mark.parametrize("l", [1, 3, 7, 14, 21, 28])
    def test_shape_and_lags(self, small_bundle, draw, l):
        dm, y = build_case_design(small_bundle, draw, "US", l, TABLE, T)
        assert dm.shape[0] == 56 == len(y)
        assert dm.response_dates[-1] == T
        assert dm.forecast_date == T + dt.timedelta(days=l)
        assert all_lags_at_least(dm, l)
        assert [c.group for c in dm.columns] == sorted(
            (c.group for c in dm.columns), key=["ar", "weekly", "search", "weekday", "ili"].index)

    def test_group_sizes(self, small_bundle, draw):
        dm, _ = build_case_design(small_bundle, draw, "US", 1, TABLE, T)
        sizes = {g: len(dm.group(g)) for g in ("ar", "weekly", "search", "weekday", "ili")}
        assert sizes == {"ar": 7, "weekly": 4, "search": 4, "weekday": 6, "ili": 4}

    def test_search_lag_max_rule(self, small_bundle, draw):
        dm, _ = build_case_design(small_bundle, draw, "US", 7, TABLE, T)
        lags = {c.name: c.lag for c in dm.group("search")}
        assert lags["search:search_00"] == 7  # O_k = 4 < l
        assert lags["search:search_01"] == 12
        assert [c.lag for c in dm.group("ar")] == list(range(7, 14))

    def test_weekday_indicators(self, small_bundle, draw):
        dm, _ = build_case_design(small_bundle, draw, "US", 5, TABLE, T)
        idx = [i for i, c in enumerate(dm.columns) if c.group == "weekday"]
        block = dm.values[:, idx]
        sums = block.sum(axis=1)
        assert set(sums.tolist()) <= {0.0, 1.0}
        for d, row in zip(dm.response_dates, block):
            if d.weekday() == 6:
                assert not row.any()
            else:
                assert row[d.weekday()] == 1.0

    def test_values_read_the_right_dates(self, small_bundle, draw):
        dm, y = build_case_design(small_bundle, draw, "US", 3, TABLE, T)
        cases = small_bundle.cases["US"]
        for j, c in enumerate(dm.columns):
            if c.group == "weekday":
                continue
            src = {"cases": cases, "ili": draw}.get(c.source) or small_bundle.daily(c.source, "US")
            for i, d in enumerate(dm.source_dates(c)):
                assert dm.values[i, j] == src.value_at(d)
        assert y.tolist() == [cases.value_at(d) for d in dm.response_dates]

    def test_without_draw(self, small_bundle):
        dm, _ = build_case_design(small_bundle, None, "US", 1, TABLE, T)
        assert not dm.group("ili")

    def test_insufficient_history(self, small_bundle, draw):
        with pytest.raises(InsufficientHistory, match="lag"):
            build_case_design(small_bundle, draw, "US", 28, TABLE, week(10))


class TestDeathDesign:
    def test_column_audit(self, small_bundle, draw):
        dm, _ = build_death_design(small_bundle, draw, "US", 1, TABLE, T)
        assert {c.source for c in dm.group("ar")} == {"deaths"}
        assert {c.source for c in dm.group("weekly")} == {"cases"}
        assert {c.name: c.lag for c in dm.group("search")}["search:search_01"] == 30

    def test_horizon_28(self, small_bundle, draw):
        dm, _ = build_death_design(small_bundle, draw, "US", 28, TABLE, T)
        assert [c.lag for c in dm.group("weekly")] == [28] * 4
        assert [c.lag for c in dm.group("ili")] == [28] * 4
        assert dm.shape[0] == 56


class TestIliDesign:
    def test_rows_and_exog(self, small_bundle):
        cfg = RunConfig()
        dm, y = build_ili_design(small_bundle, "US", T + dt.timedelta(days=7 * 20), cfg)
        assert dm.shape[0] == 52 == len(y)
        exog = dm.group("exog")
        assert len(exog) == 1 and exog[0].source == "cases" and exog[0].lag == 1
        assert all_lags_at_least(dm, 1)

    def test_zero_covid_history_drops_exog(self, small_bundle):
        from argojoint import lasso
        from argojoint.bundle import DatasetBundle

        zeroed = {g: s.replace(values=np.zeros(len(s))) for g, s in small_bundle.cases.items()}
        b = DatasetBundle(zeroed, small_bundle.deaths, small_bundle.ili, small_bundle.trends,
                          small_bundle.geography)
        dm, y = build_ili_design(b, "US", week(70), RunConfig())
        j = dm.names.index("cases_exog")
        assert not dm.values[:, j].any()
        m = lasso.fit(dm, y, 0.0)
        assert m.coef[j] == 0.0


@given(k=st.integers(62, 99), l=st.integers(1, 28), geo=st.sampled_from(["US", "S01", "R1"]))
def test_no_leakage(small_bundle, k, l, geo):
    T = week(k)
    draw = impute_area(small_bundle.ili[geo], small_bundle.cases[geo], 1, seed=1).truncate(T).draw(0)
    full, y_full = build_case_design(small_bundle, draw, geo, l, TABLE, T)
    cut, y_cut = build_case_design(small_bundle.truncate(T), draw, geo, l, TABLE, T)
    np.testing.assert_array_equal(full.values, cut.values)
    np.testing.assert_array_equal(full.forecast_row, cut.forecast_row)
    np.testing.assert_array_equal(y_full, y_cut)
    for c in full.columns:
        if c.group == "weekday":
            continue
        assert max(full.source_dates(c)) <= T
        assert full.forecast_date - dt.timedelta(days=c.lag) <= T


@given(k=st.integers(40, 99), h=st.integers(1, 4), target=st.sampled_from(["cases", "deaths", "ili"]))
def test_weekly_design_no_leakage(small_bundle, k, h, target):
    T = week(k)
    full, _ = build_weekly_design(small_bundle, "S02", target, T, h, 30, 3, TABLE)
    cut, _ = build_weekly_design(small_bundle.truncate(T), "S02", target, T, h, 30, 3, TABLE)
    np.testing.assert_array_equal(full.forecast_row, cut.forecast_row)
    assert all_lags_at_least(full, h)


def test_deterministic(small_bundle, draw):
    a, ya = build_case_design(small_bundle, draw, "US", 9, TABLE, T)
    b, yb = build_case_design(small_bundle, draw, "US", 9, TABLE, T)
    assert a.names == b.names
    np.testing.assert_array_equal(a.values, b.values)


class TestOptimalLag:
    START = dt.date(2020, 4, 1)

    def shifted(self, d, noise=0.0, n=200, seed=0):
        """Random-walk term and a target equal to it ``d`` days later (plus noise at the given SNR)."""
        rng = np.random.default_rng(seed)
        x = np.cumsum(rng.normal(size=n)) + 0.5 * rng.normal(size=n)
        y = np.concatenate([np.full(d, x[0]), x[: n - d]])
        y = y + noise * y.std() * rng.normal(size=n)
        return DailySeries("US", "term:x", self.START, x), DailySeries("US", "cases", self.START, y)

    @pytest.mark.parametrize("d", [3, 11, 24])
    def test_planted_shift(self, d):
        term, target = self.shifted(d)
        assert select_optimal_lag(term, target, range(1, 36)) == d

    def test_two_candidates(self):
        term, target = self.shifted(9, noise=0.3)
        x, y = term.values, target.values
        sse = {}
        for k in (3, 9):  # brute force on the dates where both lags exist
            A = np.column_stack([np.ones(200 - 9), x[9 - k : 200 - k]])
            r = y[9:] - A @ np.linalg.lstsq(A, y[9:], rcond=None)[0]
            sse[k] = r @ r
        assert min(sse, key=sse.get) == 9
        assert select_optimal_lag(term, target, [3, 9]) == 9

    def test_ties_prefer_smaller(self):
        term = DailySeries("US", "term:x", self.START, np.ones(60))
        target = DailySeries("US", "cases", self.START, np.arange(60.0))
        assert select_optimal_lag(term, target, [5, 2, 8]) == 2

    def test_errors(self):
        term, target = self.shifted(3)
        with pytest.raises(ValueError):
            select_optimal_lag(term, target, [])
        with pytest.raises(ValueError):
            select_optimal_lag(term, WeeklySeries("US", "ili", dt.date(2020, 4, 4), [1.0] * 30), [1])
        with pytest.raises(ValueError):
            select_optimal_lag(term, target, [1], window=(self.START, self.START + dt.timedelta(days=3)))

    def test_window_restricts_rows(self):
        term, target = self.shifted(11)
        win = (self.START + dt.timedelta(days=60), self.START + dt.timedelta(days=150))
        assert select_optimal_lag(term, target, range(1, 36), window=win) == 11


class TestLagTable:
    def test_default_rows(self):
        t = LagTable.default()
        assert len(t) == 23
        assert (t.case_lag("loss of taste"), t.death_lag("loss of taste")) == (11, 24)
        assert (t.case_lag("coronavirus vaccine"), t.death_lag("coronavirus vaccine")) == (4, 5)
        assert (t.case_lag("symptoms of the covid 19"), t.death_lag("symptoms of the covid 19")) == (16, 21)

    def test_csv_round_trip(self, tmp_path):
        p = tmp_path / "lags.csv"
        TABLE.write(p)
        assert LagTable.read(p) == TABLE

    def test_lags_positive(self):
        with pytest.raises(ValueError):
            LagTable({"x": (0, 1)})

    def test_resolve_recovers_planted_leads(self):
        b = generate_synthetic(SyntheticScenario(n_states=2, weeks=40, search_lags=(5, 17), seed=1))
        cfg = RunConfig(lag_selection_weeks=13)
        t = resolve_lag_table(b, cfg, week(30))
        assert t.case_lag("search_00") == 5 and t.case_lag("search_01") == 17
        forced = resolve_lag_table(b, cfg.replace(lag_table={"search_00": (2, 2)}), week(30))
        assert forced.case_lag("search_00") == 2
