"""Per-home forecasts of load and solar over a control window.

EV charging is treated as known ahead of time, so both forecasters pass the
actual EV series through.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError
from .timeseries import NeighborhoodData

HISTORY_DAYS = 4


@dataclass(frozen=True)
class ForecastWindow:
    load_kw: np.ndarray  # (n, T_w)
    solar_kw: np.ndarray
    ev_kw: np.ndarray

    def __post_init__(self):
        shapes = {np.shape(self.load_kw), np.shape(self.solar_kw), np.shape(self.ev_kw)}
        if len(shapes) != 1:
            raise ValidationError(f"forecast series shapes differ: {shapes}")
        if np.any(np.asarray(self.solar_kw) < 0):
            raise ValidationError("forecast solar must be >= 0")

    def __len__(self):
        return np.shape(self.load_kw)[-1]


def _window(window):
    start, stop = (window.start, window.stop) if isinstance(window, range) else window
    if stop < start:
        raise ValidationError(f"bad window [{start}, {stop})")
    return int(start), int(stop)


def oracle_forecast(data: NeighborhoodData, window) -> ForecastWindow:
    """Actual future values (perfect foresight)."""
    start, stop = _window(window)
    if not 0 <= start <= stop <= data.grid.num_steps:
        raise ValidationError(f"window [{start}, {stop}) outside the data")
    return ForecastWindow(
        data.stack("load_kw")[:, start:stop],
        data.stack("solar_kw")[:, start:stop],
        data.stack("ev_kw")[:, start:stop],
    )


def _history_mean(series: np.ndarray, start: int, stop: int, spd: int) -> np.ndarray:
    """Mean of the same time-of-day value over up to four most recent past days.

    Only steps before ``start`` count as history; for steps more than a day
    ahead the lag grows until it reaches the past.
    """
    out = np.empty((series.shape[0], stop - start))
    for k, s in enumerate(range(start, stop)):
        d_min = -(-(s - start + 1) // spd)  # smallest d with s - d*spd < start
        lags = [s - d * spd for d in range(d_min, d_min + HISTORY_DAYS) if s - d * spd >= 0]
        out[:, k] = series[:, lags].mean(axis=1)
    return out


def naive_forecast(data: NeighborhoodData, window) -> ForecastWindow:
    """Average of the previous four days at the same time of day.

    With fewer than four days of history the mean uses whatever days exist;
    at least one full day before the window start is required.
    """
    start, stop = _window(window)
    spd = data.grid.steps_per_day
    if start < spd:
        raise ValidationError(
            f"naive forecast at step {start} has no full day of history; "
            f"start control at step >= {spd} (1-day warm-up)"
        )
    if stop > data.grid.num_steps:
        raise ValidationError(f"window [{start}, {stop}) outside the data")
    load = np.clip(_history_mean(data.stack("load_kw"), start, stop, spd), 0.0, None)
    solar = np.clip(_history_mean(data.stack("solar_kw"), start, stop, spd), 0.0, None)
    ev = data.stack("ev_kw")[:, start:stop]
    return ForecastWindow(load, solar, ev)


FORECASTERS = {"naive": naive_forecast, "oracle": oracle_forecast}


def get_forecaster(name: str):
    try:
        return FORECASTERS[name]
    except KeyError:
        raise ValidationError(f"unknown forecaster {name!r}; expected one of {sorted(FORECASTERS)}") from None
