import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from optsurv.survival_core import (
    CovariateMatrix,
    DataError,
    Dataset,
    Feature,
    IngestConfig,
    StepFunction,
    SurvivalObservation,
    censoring_km,
    from_arrays,
    kaplan_meier,
    load_dataset,
    load_schema,
    nelson_aalen,
)

from . import oracles

FIXTURE = [SurvivalObservation(1, True), SurvivalObservation(2, False),
           SurvivalObservation(3, True), SurvivalObservation(4, True)]


@st.composite
def outcomes(draw, max_n=30):
    n = draw(st.integers(1, max_n))
    # a small time alphabet forces ties between deaths and censorings
    time = draw(st.lists(st.sampled_from([0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.5]), min_size=n, max_size=n))
    event = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    return np.array(time), np.array(event)


class TestObservation:
    def test_rejects_negative_time(self):
        with pytest.raises(DataError):
            SurvivalObservation(-1.0, True)

    def test_rejects_infinite_time(self):
        with pytest.raises(DataError):
            SurvivalObservation(math.inf, False)


class TestStepFunction:
    def test_right_continuous(self):
        f = StepFunction([1.0, 2.0], [0.3, 0.7], 0.1)
        assert f(0.999) == 0.1
        assert f(1.0) == 0.3
        assert f(1.5) == 0.3
        assert f(2.0) == 0.7
        assert f(50.0) == 0.7

    def test_vectorised(self):
        f = StepFunction([1.0], [2.0], 0.0)
        np.testing.assert_array_equal(f(np.array([0.0, 1.0, 3.0])), [0.0, 2.0, 2.0])

    def test_knots_must_increase(self):
        with pytest.raises(ValueError):
            StepFunction([2.0, 1.0], [0.0, 1.0])

    def test_dict_round_trip(self):
        f = StepFunction([0.5, 1.5], [0.9, 0.4], 1.0)
        assert StepFunction.from_dict(f.to_dict()) == f


class TestNelsonAalen:
    def test_single_death(self):
        f = nelson_aalen([SurvivalObservation(1, True)])
        assert f(0.99) == 0.0
        assert f(1.0) == 1.0

    def test_no_deaths(self):
        f = nelson_aalen([1, 2, 3], [0, 0, 0])
        assert f(0.0) == f(10.0) == 0.0

    def test_fixture(self):
        f = nelson_aalen(FIXTURE)
        assert f(1) == pytest.approx(1 / 4, abs=1e-15)
        assert f(3) == pytest.approx(1 / 4 + 1 / 2, abs=1e-15)
        assert f(4) == pytest.approx(1 / 4 + 1 / 2 + 1, abs=1e-15)

    def test_empty(self):
        with pytest.raises(DataError, match="empty dataset"):
            nelson_aalen([], [])

    def test_tied_deaths(self):
        # two deaths at t=1 among 3 at risk contribute 2/3
        f = nelson_aalen([1, 1, 2], [1, 1, 0])
        assert f(1) == pytest.approx(2 / 3, abs=1e-15)

    @settings(max_examples=60, deadline=None)
    @given(outcomes())
    def test_matches_oracle(self, data):
        time, event = data
        f = nelson_aalen(time, event)
        for t in np.unique(np.concatenate([time, time + 0.25])):
            assert f(t) == pytest.approx(oracles.nelson_aalen(time, event, t), abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(outcomes())
    def test_nondecreasing_and_zero_before_first_death(self, data):
        time, event = data
        f = nelson_aalen(time, event)
        assert np.all(np.diff(f.values) >= 0)
        if event.any():
            first = time[event == 1].min()
            assert f(np.nextafter(first, -np.inf)) == 0.0


class TestKaplanMeier:
    def test_no_deaths(self):
        f = kaplan_meier([SurvivalObservation(5, False)])
        assert f(0) == f(100) == 1.0

    def test_two_deaths(self):
        f = kaplan_meier([1, 2], [1, 1])
        assert (f(0.5), f(1), f(1.5), f(2), f(9)) == (1.0, 0.5, 0.5, 0.0, 0.0)

    def test_fixture(self):
        f = kaplan_meier(FIXTURE)
        assert f(1) == pytest.approx(3 / 4, abs=1e-15)
        assert f(3) == pytest.approx(3 / 8, abs=1e-15)
        assert f(4) == 0.0

    @settings(max_examples=60, deadline=None)
    @given(outcomes())
    def test_matches_oracle_and_bounds(self, data):
        time, event = data
        f = kaplan_meier(time, event)
        assert f(0.0 - 1e-9) == 1.0
        assert np.all(np.diff(f.values) <= 0)
        assert np.all((f.values >= 0) & (f.values <= 1))
        for t in np.unique(np.concatenate([time, time + 0.25])):
            assert f(t) == pytest.approx(oracles.kaplan_meier(time, event, t), abs=1e-12)


class TestCensoringKM:
    def test_no_censoring(self):
        f = censoring_km([SurvivalObservation(5, True)])
        assert f(0) == f(10) == 1.0

    def test_all_censored(self):
        f = censoring_km([1, 2], [0, 0])
        assert f(1) == 0.5
        assert f(2) == 0.0

    def test_death_then_censoring(self):
        f = censoring_km([1, 2], [1, 0])
        assert f(1.999) == 1.0
        assert f(2) == 0.0

    @settings(max_examples=60, deadline=None)
    @given(outcomes())
    def test_matches_oracle(self, data):
        time, event = data
        f = censoring_km(time, event)
        for t in np.unique(time):
            assert f(t) == pytest.approx(oracles.censoring_km(time, event, t), abs=1e-12)

    def test_changes_only_at_own_event_times(self):
        rng = np.random.default_rng(4)
        time = rng.permutation(np.arange(1, 41, dtype=float))
        event = rng.integers(0, 2, 40)
        km, g = kaplan_meier(time, event), censoring_km(time, event)
        moved_km = set(km.knots[np.diff(np.r_[1.0, km.values]) != 0])
        moved_g = set(g.knots[np.diff(np.r_[1.0, g.values]) != 0])
        assert moved_km <= set(time[event == 1])
        assert moved_g <= set(time[event == 0])


class TestIngestion:
    def test_three_rows(self):
        ds = load_dataset(b"time,event,x1\n1.0,1,0.2\n2.5,0,0.4\n3,1,0.9\n")
        assert ds.n == 3
        assert ds.X.shape == (3, 1)
        np.testing.assert_array_equal(ds.time, [1.0, 2.5, 3.0])

    def test_bad_event_flag(self):
        with pytest.raises(DataError, match="invalid event flag"):
            load_dataset(b"time,event,x1\n1.0,2,0.2\n")

    def test_missing_covariate(self):
        with pytest.raises(DataError, match="missing value at row 2, column x1"):
            load_dataset(b"time,event,x1\n1.0,1,0.2\n2.0,0,\n")

    def test_negative_time(self):
        with pytest.raises(DataError, match="invalid time"):
            load_dataset(b"time,event,x1\n-1.0,1,0.2\n")

    def test_categorical_schema(self):
        schema = load_schema('{"g": {"kind": "categorical", "levels": ["lo", "mid", "hi"], "ordered": true}}')
        ds = load_dataset(io.BytesIO(b"g,t,d\nhi,1,1\nlo,2,0\n"), IngestConfig("t", "d", schema))
        np.testing.assert_array_equal(ds.X[:, 0], [2, 0])
        assert ds.features[0].is_categorical and ds.features[0].ordered

    def test_unknown_level(self):
        schema = load_schema('{"g": {"kind": "categorical", "levels": ["a", "b"]}}')
        with pytest.raises(DataError, match="unknown level"):
            load_dataset("g,time,event\nc,1,1\n", IngestConfig(categorical=schema))

    def test_empty(self):
        with pytest.raises(DataError, match="empty dataset"):
            load_dataset(b"time,event,x\n")


class TestContainers:
    def test_categorical_cell_bound(self):
        f = (Feature("g", "categorical", ("a", "b")),)
        with pytest.raises(DataError):
            CovariateMatrix(np.array([[2.0]]), f)

    def test_level_count(self):
        with pytest.raises(DataError):
            Feature("g", "categorical", ("a",))

    def test_row_mismatch(self):
        cov = CovariateMatrix(np.zeros((2, 1)), (Feature("x"),))
        with pytest.raises(DataError):
            Dataset(cov, np.ones(3), np.ones(3, dtype=np.int8))

    def test_take(self):
        ds = from_arrays(np.arange(6.0).reshape(3, 2), [1, 2, 3], [1, 0, 1])
        sub = ds.take([2, 0])
        np.testing.assert_array_equal(sub.time, [3, 1])
        np.testing.assert_array_equal(sub.X, [[4, 5], [0, 1]])
