import csv
import datetime as dt
import json

import numpy as np
import pytest

from argojoint.bundle import SchemaError, load_bundle, write_bundle
from argojoint.config import RunConfig
from argojoint.synthetic import SyntheticScenario, generate_synthetic
from argojoint.tables import ForecastTable, read_forecasts, write_forecasts

START = dt.date(2021, 1, 3)  # Sunday


def _write(path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


@pytest.fixture
def fixture_dir(tmp_path):
    states = ["CA", "NY", "TX"]
    days = [START + dt.timedelta(days=i) for i in range(28)]
    _write(tmp_path / "cases.csv", ["date", "geo", "cases", "deaths"],
           [(d.isoformat(), s, 10 + i, 1) for s in states for i, d in enumerate(days)])
    sats = [START + dt.timedelta(days=6 + 7 * k) for k in range(4)]
    _write(tmp_path / "ili.csv", ["week_ending", "geo", "ili_pct"],
           [(d.isoformat(), s, 1.5) for s in states for d in sats])
    _write(tmp_path / "trends.csv", ["date", "geo", "term", "value"],
           [(d.isoformat(), s, "fever", 3.0) for s in states for d in days]
           + [(d.isoformat(), s, "flu", 2.0) for s in states for d in sats])
    return tmp_path


class TestLoad:
    def test_three_states(self, fixture_dir):
        b = load_bundle(fixture_dir)
        assert b.geography.states == ["CA", "NY", "TX"]
        assert b.row_counts()["ili"] >= 12
        assert b.covid_terms == ["fever"]
        assert b.flu_terms == ["flu"]
        # derived nation series sums the states
        assert b.cases["US"].values[0] == 30.0

    def test_wednesday_ili_rejected(self, fixture_dir):
        with (fixture_dir / "ili.csv").open("a") as fh:
            fh.write("2021-02-03,CA,1.0\n")
        with pytest.raises(SchemaError) as err:
            load_bundle(fixture_dir)
        assert err.value.column == "week_ending"
        assert err.value.line == 14

    def test_duplicate_row_rejected(self, fixture_dir):
        with (fixture_dir / "cases.csv").open("a") as fh:
            fh.write("2021-01-03,CA,1,0\n")
        with pytest.raises(SchemaError, match="duplicate"):
            load_bundle(fixture_dir)

    def test_bad_header(self, fixture_dir):
        (fixture_dir / "ili.csv").write_text("week,geo,ili\n")
        with pytest.raises(SchemaError) as err:
            load_bundle(fixture_dir)
        assert err.value.line == 1

    def test_bad_number_location(self, fixture_dir):
        rows = (fixture_dir / "cases.csv").read_text().splitlines()
        rows[5] = rows[5].rsplit(",", 1)[0] + ",abc"
        (fixture_dir / "cases.csv").write_text("\n".join(rows) + "\n")
        with pytest.raises(SchemaError) as err:
            load_bundle(fixture_dir)
        assert (err.value.line, err.value.column) == (6, "deaths")

    def test_gap_rejected(self, fixture_dir):
        rows = (fixture_dir / "cases.csv").read_text().splitlines()
        del rows[10]
        (fixture_dir / "cases.csv").write_text("\n".join(rows) + "\n")
        with pytest.raises(SchemaError, match="gap"):
            load_bundle(fixture_dir)

    def test_negative_cases_rejected(self, fixture_dir):
        with (fixture_dir / "cases.csv").open("a") as fh:
            fh.write("2021-01-31,CA,-1,0\n")
        with pytest.raises(SchemaError, match="negative"):
            load_bundle(fixture_dir)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_bundle(tmp_path)

    def test_round_trip(self, tmp_path):
        b = generate_synthetic(SyntheticScenario(n_states=3, weeks=10, seed=5))
        write_bundle(b, tmp_path)
        assert load_bundle(tmp_path) == b


class TestForecastCsv:
    def test_empty_is_header_only(self, tmp_path):
        p = tmp_path / "f.csv"
        write_forecasts(ForecastTable(), p)
        assert p.read_text() == "geo,target_week,horizon,method,value\n"

    def test_one_row_two_lines(self, tmp_path):
        p = tmp_path / "f.csv"
        write_forecasts(ForecastTable([("CA", "2021-01-09", 1, "naive", 0.1)]), p)
        assert len(p.read_text().splitlines()) == 2

    def test_fixpoint(self, tmp_path, rng):
        rows = [(g, dt.date(2021, 1, 9) + dt.timedelta(days=7 * k), h, m, float(rng.normal()))
                for g in ("TX", "CA") for k in range(3) for h in (1, 2) for m in ("b", "a")]
        t = ForecastTable(rows)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_forecasts(t, p1)
        back = read_forecasts(p1)
        assert back == t
        write_forecasts(back, p2)
        assert p1.read_bytes() == p2.read_bytes()
        keys = [r.key for r in back]
        assert keys == sorted(keys)

    def test_duplicate_key(self):
        with pytest.raises(ValueError):
            ForecastTable([("CA", "2021-01-09", 1, "x", 1.0), ("CA", "2021-01-09", 1, "x", 2.0)])


class TestSynthetic:
    def test_deterministic(self, tmp_path):
        sc = SyntheticScenario(n_states=3, weeks=20, seed=11)
        write_bundle(generate_synthetic(sc), tmp_path / "a")
        write_bundle(generate_synthetic(sc), tmp_path / "b")
        for name in ("cases.csv", "ili.csv", "trends.csv", "geography.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_seed_matters(self):
        a = generate_synthetic(SyntheticScenario(n_states=2, weeks=10, seed=1))
        b = generate_synthetic(SyntheticScenario(n_states=2, weeks=10, seed=2))
        assert a != b

    def test_zero_coupling_uncorrelated(self):
        sc = SyntheticScenario(n_states=3, weeks=100, coupling=0.0, case_noise=0.0, death_noise=0.0,
                               search_noise=0.0, ili_noise=0.0, seed=4)
        b = generate_synthetic(sc)
        for s in sc.states:
            cases = b.weekly("cases", s).window(b.ili[s].start, b.ili[s].end).values
            assert abs(np.corrcoef(b.ili[s].values, cases)[0, 1]) < 0.3

    def test_coupling_recovered_without_noise(self):
        sc = SyntheticScenario(n_states=3, weeks=100, coupling=0.6, case_noise=0.0, ili_noise=0.0, seed=4)
        b = generate_synthetic(sc)
        for s in sc.states:
            cases = b.weekly("cases", s).window(b.ili[s].start, b.ili[s].end).values
            assert np.corrcoef(b.ili[s].values, cases)[0, 1] == pytest.approx(0.6, abs=1e-12)

    @pytest.mark.parametrize("d", [3, 11, 24])
    def test_planted_lead(self, d):
        sc = SyntheticScenario(n_states=1, weeks=60, search_lags=(d,), case_noise=0.0, search_noise=0.0,
                               weekday_weights=(1.0,) * 7, seed=9)
        b = generate_synthetic(sc)
        term = b.trends[("S01", "search_00")].values
        cases = b.cases["S01"].values

        def corr(k):
            return np.corrcoef(term[: term.size - k], cases[k:])[0, 1]

        assert max(range(36), key=corr) == d

    def test_weekday_profile(self):
        w = (1.4, 1.2, 1.0, 1.0, 0.9, 0.7, 0.8)
        sc = SyntheticScenario(n_states=1, weeks=40, weekday_weights=w, case_noise=0.0, seed=2)
        c = generate_synthetic(sc).cases["S01"]
        ratios = [c.values[i + 1] / c.values[i] for i in range(6)]  # Sunday -> Monday first
        days = [(c.start + dt.timedelta(days=i)).weekday() for i in range(7)]
        for i, r in enumerate(ratios):
            expect = w[days[i + 1]] / w[days[i]]
            assert r == pytest.approx(expect, rel=0.1)

    @pytest.mark.parametrize("kw", [dict(search_lags=(-1,)), dict(weekday_weights=(1.0,) * 6),
                                    dict(weekday_weights=(2.0,) * 7), dict(coupling=1.5),
                                    dict(start=dt.date(2020, 3, 2)), dict(case_noise=-0.1)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SyntheticScenario(**kw)


class TestConfig:
    def test_defaults(self):
        cfg = RunConfig()
        assert (cfg.imputation_draws, cfg.national_train_days, cfg.state_train_weeks,
                cfg.ensemble_window_weeks) == (100, 56, 30, 15)

    def test_json_round_trip(self, tmp_path):
        cfg = RunConfig(horizons=(2, 1), seed=9, lag_table={"x": (3, 4)})
        p = tmp_path / "c.json"
        p.write_text(json.dumps(cfg.to_dict()))
        back = RunConfig.from_json(p)
        assert back == cfg
        assert back.horizons == (1, 2)

    def test_digest_ignores_threads(self):
        assert RunConfig(threads=1).digest() == RunConfig(threads=8).digest()
        assert RunConfig(seed=1).digest() != RunConfig(seed=2).digest()

    @pytest.mark.parametrize("kw", [dict(horizons=(5,)), dict(horizons=()), dict(imputation_draws=0),
                                    dict(national_train_days=27), dict(lambda_grid=(0.5, 0.1)),
                                    dict(lambda_grid=()), dict(seed=-1), dict(targets=("flu",)),
                                    dict(lag_table={"x": (0, 3)}), dict(cv_folds=1)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            RunConfig(**kw)

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown"):
            RunConfig.from_dict({"nope": 1})
