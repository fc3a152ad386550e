import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from support import neighborhood, synthetic
from vbess.exceptions import ValidationError
from vbess.forecast import ForecastWindow, get_forecaster, naive_forecast, oracle_forecast

SPD = 48


def _daily(values, ev=None):
    """One home whose load is ``values[d]`` for every step of day ``d``."""
    load = np.repeat(np.asarray(values, float), SPD)
    return neighborhood(load[None, :], ev=None if ev is None else ev[None, :])


class TestNaive:
    def test_mean_of_four_previous_days(self):
        data = _daily([4, 6, 8, 10, 99])
        f = naive_forecast(data, (4 * SPD, 5 * SPD))
        np.testing.assert_allclose(f.load_kw, 7.0)

    def test_uses_only_most_recent_four(self):
        data = _daily([100, 4, 6, 8, 10, 99])
        np.testing.assert_allclose(naive_forecast(data, (5 * SPD, 6 * SPD)).load_kw, 7.0)

    def test_falls_back_to_available_days(self):
        data = _daily([2, 6, 99])
        np.testing.assert_allclose(naive_forecast(data, (2 * SPD, 3 * SPD)).load_kw, 4.0)

    def test_constant_history(self):
        data = _daily([3.5] * 6)
        np.testing.assert_allclose(naive_forecast(data, (SPD + 7, 5 * SPD)).load_kw, 3.5)

    def test_needs_one_day_of_history(self):
        data = _daily([1, 1, 1])
        with pytest.raises(ValidationError, match="warm-up"):
            naive_forecast(data, (SPD - 1, SPD + 4))
        with pytest.raises(ValidationError):
            naive_forecast(data, (SPD, 4 * SPD))

    def test_never_looks_inside_the_window(self):
        # days 4 and 5 are unusual; a two-day window starting on day 4 must not see them
        data = _daily([1, 2, 3, 4, 50, 60])
        f = naive_forecast(data, (4 * SPD, 6 * SPD))
        np.testing.assert_allclose(f.load_kw, 2.5)

    def test_ev_passes_through(self):
        ev = np.zeros(3 * SPD)
        ev[2 * SPD + 5] = 7.2
        data = _daily([1, 1, 1], ev=ev)
        f = naive_forecast(data, (2 * SPD, 3 * SPD))
        np.testing.assert_array_equal(f.ev_kw[0], ev[2 * SPD:])

    def test_empty_window(self):
        data = _daily([1, 1])
        assert len(naive_forecast(data, (SPD, SPD))) == 0


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), start=st.integers(SPD, 3 * SPD), length=st.integers(1, 2 * SPD))
def test_periodic_history_is_reproduced(seed, start, length):
    day = np.random.default_rng(seed).uniform(0, 5, (2, SPD))
    load = np.tile(day, (1, 6))
    data = neighborhood(load, solar=0.5 * load)
    f = naive_forecast(data, (start, start + length))
    np.testing.assert_allclose(f.load_kw, load[:, start:start + length], atol=1e-12)
    np.testing.assert_allclose(f.solar_kw, 0.5 * load[:, start:start + length], atol=1e-12)


class TestOracle:
    def test_slices_actuals(self):
        data = synthetic(2, n_homes=3, days=2)
        f = oracle_forecast(data, range(10, 30))
        np.testing.assert_array_equal(f.load_kw, data.stack("load_kw")[:, 10:30])
        np.testing.assert_array_equal(f.solar_kw, data.stack("solar_kw")[:, 10:30])

    def test_bounds(self):
        data = synthetic(2, n_homes=1, days=1)
        assert len(oracle_forecast(data, (5, 5))) == 0
        with pytest.raises(ValidationError):
            oracle_forecast(data, (40, 60))
        with pytest.raises(ValidationError):
            oracle_forecast(data, (10, 5))


def test_window_shape_checks_and_lookup():
    with pytest.raises(ValidationError):
        ForecastWindow(np.zeros((1, 3)), np.zeros((1, 2)), np.zeros((1, 3)))
    with pytest.raises(ValidationError):
        ForecastWindow(np.zeros((1, 2)), -np.ones((1, 2)), np.zeros((1, 2)))
    assert get_forecaster("naive") is naive_forecast
    with pytest.raises(ValidationError):
        get_forecaster("arima")
