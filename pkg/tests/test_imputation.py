import csv
import datetime as dt

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from argojoint.config import RunConfig
from argojoint.imputation import (
    ImputationSet,
    impute_area,
    impute_bundle,
    impute_week,
    substream,
    weekly_view,
    weekly_views,
    write_imputations,
)
from argojoint.panel import DailySeries, WeeklySeries

SUN = dt.date(2020, 4, 5)
SAT = SUN + dt.timedelta(days=6)


def area(n_weeks, rng, zero_weeks=()):
    cases = rng.poisson(50, size=7 * n_weeks).astype(float)
    for k in zero_weeks:
        cases[7 * k : 7 * k + 7] = 0.0
    ili = WeeklySeries("CA", "ili", SAT, rng.uniform(0.5, 4.0, n_weeks))
    return ili, DailySeries("CA", "cases", SUN, cases)


def rel_err(iset):
    sums = weekly_views(iset)
    w = iset.weekly.values
    return np.abs(sums - w) / np.maximum(w, 1.0)


class TestImputeWeek:
    def test_uniform(self):
        out, fb = impute_week([1] * 7, 7.0)
        assert out.tolist() == [1.0] * 7 and not fb

    def test_point_mass(self):
        out, _ = impute_week([0, 0, 7, 0, 0, 0, 0], 14.0)
        assert out.tolist() == [0, 0, 14, 0, 0, 0, 0]

    def test_hand_normalisation(self):
        out, _ = impute_week([2, 1, 1, 0, 0, 0, 0], 8.0)
        assert out.tolist() == [4, 2, 2, 0, 0, 0, 0]

    def test_zero_donor_fallback(self):
        out, fb = impute_week([0] * 7, 3.5)
        assert fb
        assert out.sum() == pytest.approx(3.5, rel=1e-15)
        np.testing.assert_allclose(out, 0.5)

    def test_zero_donor_zero_ili_not_flagged(self):
        out, fb = impute_week([0] * 7, 0.0)
        assert not fb and not out.any()

    @pytest.mark.parametrize("donor,ili", [([1] * 6, 1.0), ([-1] + [1] * 6, 1.0), ([1] * 7, -1.0)])
    def test_invalid(self, donor, ili):
        with pytest.raises(ValueError):
            impute_week(donor, ili)

    @given(st.lists(st.floats(0, 1e6), min_size=7, max_size=7), st.floats(0, 1e3))
    def test_conservation_and_sign(self, donor, ili):
        out, _ = impute_week(donor, ili)
        assert np.all(out >= 0)
        assert abs(out.sum() - ili) <= 1e-12 * max(ili, 1.0)


class TestImputeArea:
    def test_first_week_donates_to_itself(self, rng):
        ili, cases = area(6, rng)
        iset = impute_area(ili, cases, 50, seed=1)
        assert np.all(iset.source_weeks[:, 0] == SAT.toordinal())

    def test_mass_conservation(self, rng):
        ili, cases = area(40, rng)
        iset = impute_area(ili, cases, 100, seed=7)
        assert iset.draws.shape == (100, 280)
        assert rel_err(iset).max() < 1e-9
        assert np.all(iset.draws >= 0)

    def test_deterministic(self, rng):
        ili, cases = area(20, rng)
        a = impute_area(ili, cases, 30, seed=5)
        b = impute_area(ili, cases, 30, seed=5)
        np.testing.assert_array_equal(a.source_weeks, b.source_weeks)
        np.testing.assert_array_equal(a.draws, b.draws)
        c = impute_area(ili, cases, 30, seed=6)
        assert not np.array_equal(a.source_weeks, c.source_weeks)

    def test_donors_never_from_the_future(self, rng):
        ili, cases = area(25, rng)
        iset = impute_area(ili, cases, 40, seed=2)
        weeks = np.array([d.toordinal() for d in iset.weekly.dates])
        assert np.all(iset.source_weeks <= weeks[None, :])
        assert np.all(iset.source_weeks >= weeks[0])

    def test_exclusive_pool(self, rng):
        ili, cases = area(10, rng)
        iset = impute_area(ili, cases, 40, seed=2, inclusive=False)
        weeks = np.array([d.toordinal() for d in iset.weekly.dates])
        assert iset.weekly.start == SAT + dt.timedelta(days=7)
        assert np.all(iset.source_weeks < weeks[None, :])
        assert rel_err(iset).max() < 1e-9

    def test_first_week_option(self, rng):
        ili, cases = area(10, rng)
        first = SAT + dt.timedelta(days=21)
        iset = impute_area(ili, cases, 5, seed=2, first_week=first)
        assert iset.weekly.start == first
        assert iset.source_weeks.min() >= first.toordinal()

    def test_no_eligible_week(self, rng):
        ili, cases = area(3, rng)
        late = ili.replace(start=SAT + dt.timedelta(days=70))
        with pytest.raises(ValueError, match="donor"):
            impute_area(late, cases, 5, seed=1)
        with pytest.raises(ValueError):
            impute_area(ili, cases, 0, seed=1)

    def test_zero_donor_weeks_flagged_and_exact(self, rng):
        ili, cases = area(8, rng, zero_weeks=(0, 1))
        iset = impute_area(ili, cases, 200, seed=3)
        assert iset.fallback.any()
        used_zero = np.isin(iset.source_weeks, [SAT.toordinal(), SAT.toordinal() + 7])
        np.testing.assert_array_equal(iset.fallback, used_zero)
        assert rel_err(iset).max() < 1e-9

    def test_truncation_consistent(self, rng):
        ili, cases = area(30, rng)
        full = impute_area(ili, cases, 20, seed=4)
        cut = SAT + dt.timedelta(days=7 * 17)
        short = impute_area(ili.truncate(cut), cases.truncate(cut), 20, seed=4)
        tr = full.truncate(cut)
        np.testing.assert_array_equal(short.source_weeks, tr.source_weeks)
        np.testing.assert_array_equal(short.draws, tr.draws)

    @given(st.integers(1, 12), st.integers(1, 8), st.integers(0, 2**32))
    def test_conservation_property(self, n_weeks, n_draws, seed):
        rng = np.random.default_rng(seed)
        ili, cases = area(n_weeks, rng, zero_weeks=[k for k in range(n_weeks) if rng.random() < 0.2])
        iset = impute_area(ili, cases, n_draws, seed=seed)
        assert rel_err(iset).max() < 1e-9
        assert np.all(iset.draws >= 0)


def test_donor_uniformity():
    rng = np.random.default_rng(0)
    ili, cases = area(5, rng)
    iset = impute_area(ili, cases, 10_000, seed=123)
    donors = iset.source_weeks[:, 4]
    counts = np.array([(donors == SAT.toordinal() + 7 * k).sum() for k in range(5)])
    assert counts.sum() == 10_000
    assert stats.chisquare(counts).pvalue > 0.01


def test_substream_independent_of_order():
    a = substream(9, "CA", SAT).random(5)
    substream(9, "NY", SAT).random(100)
    b = substream(9, "CA", SAT).random(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, substream(9, "CA", SAT + dt.timedelta(days=7)).random(5))


class TestViews:
    def test_any_draw_reproduces_weekly(self, rng):
        ili, cases = area(12, rng)
        iset = impute_area(ili, cases, 10, seed=1)
        for n in range(10):
            v = weekly_view(iset, n)
            np.testing.assert_allclose(v.values, ili.values, rtol=1e-9)
            assert v.dates == ili.dates

    def test_empty(self, rng):
        ili, cases = area(4, rng)
        iset = impute_area(ili, cases, 3, seed=1).truncate(SAT - dt.timedelta(days=7))
        assert iset.n_weeks == 0
        assert weekly_view(iset) is None

    def test_bundle_and_dump(self, small_bundle, tmp_path):
        cfg = RunConfig(imputation_draws=3)
        sets = impute_bundle(small_bundle, cfg, ["S01", "US"])
        assert set(sets) == {"S01", "US"}
        assert all(isinstance(s, ImputationSet) and s.n_draws == 3 for s in sets.values())
        p = tmp_path / "imp.csv"
        write_imputations(sets, p)
        with p.open() as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["draw", "date", "geo", "value", "donor_week"]
        n = sum(7 * s.n_weeks * s.n_draws for s in sets.values())
        assert len(rows) == n + 1
