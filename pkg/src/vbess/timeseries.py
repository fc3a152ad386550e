"""Domain data model: home profiles and tariffs on a shared time grid, plus device specs.

Also holds profile CSV ingestion and a seeded synthetic neighborhood
generator for when no measured profiles are available.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .exceptions import IngestionError, ValidationError

PROFILE_COLUMNS = ("step", "home_id", "load_kw", "solar_kw", "ev_kw")
SLOTS_PER_DAY = 48
SLOT_HOURS = 0.5


def _is_integral(x: float, tol: float = 1e-9) -> bool:
    return abs(x - round(x)) < tol


@dataclass(frozen=True)
class TimeGrid:
    delta_t: float = 0.5
    num_steps: int = 1344
    start: datetime = datetime(2018, 7, 2)

    def __post_init__(self):
        if not self.delta_t > 0:
            raise ValidationError(f"delta_t must be positive, got {self.delta_t}")
        if self.num_steps < 1:
            raise ValidationError(f"num_steps must be >= 1, got {self.num_steps}")
        if not (_is_integral(1.0 / self.delta_t) or _is_integral(self.delta_t)):
            raise ValidationError(
                f"delta_t={self.delta_t} h neither divides nor is a multiple of 1 h"
            )

    @property
    def steps_per_day(self) -> int:
        spd = 24.0 / self.delta_t
        if not _is_integral(spd):
            raise ValidationError(f"delta_t={self.delta_t} h does not tile a day")
        return int(round(spd))

    @property
    def hours(self) -> float:
        return self.num_steps * self.delta_t

    def time_of(self, step: int) -> datetime:
        return self.start + timedelta(hours=step * self.delta_t)

    def window(self, start: int, stop: int) -> "TimeGrid":
        """Sub-grid covering steps ``[start, stop)``."""
        if not 0 <= start < stop <= self.num_steps:
            raise ValidationError(f"window [{start}, {stop}) outside grid of {self.num_steps}")
        return TimeGrid(self.delta_t, stop - start, self.time_of(start))


@dataclass(frozen=True)
class HomeProfile:
    home_id: str
    load_kw: np.ndarray
    solar_kw: np.ndarray
    ev_kw: np.ndarray

    def __post_init__(self):
        for name in ("load_kw", "solar_kw", "ev_kw"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = len(self.load_kw)
        if len(self.solar_kw) != n or len(self.ev_kw) != n:
            raise ValidationError(f"home {self.home_id}: series lengths differ")
        for name in ("load_kw", "solar_kw", "ev_kw"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"home {self.home_id}: {name} has non-finite values")
            if np.any(arr < 0):
                step = int(np.argmax(arr < 0))
                raise ValidationError(f"home {self.home_id}: negative {name} at step {step}")

    def __len__(self):
        return len(self.load_kw)

    @property
    def net_kw(self) -> np.ndarray:
        """Meter reading with no battery: load - solar + EV."""
        return self.load_kw - self.solar_kw + self.ev_kw

    def slice(self, start: int, stop: int) -> "HomeProfile":
        return HomeProfile(
            self.home_id,
            self.load_kw[start:stop],
            self.solar_kw[start:stop],
            self.ev_kw[start:stop],
        )


@dataclass(frozen=True)
class TariffSchedule:
    """Half-hourly $/kWh prices for weekdays and weekends."""

    name: str
    weekday_prices: tuple
    weekend_prices: tuple

    def __post_init__(self):
        for attr in ("weekday_prices", "weekend_prices"):
            prices = tuple(float(p) for p in getattr(self, attr))
            if len(prices) != SLOTS_PER_DAY:
                raise ValidationError(f"tariff {self.name}: {attr} needs {SLOTS_PER_DAY} entries")
            if any(p < 0 or not math.isfinite(p) for p in prices):
                raise ValidationError(f"tariff {self.name}: {attr} must be finite and >= 0")
            object.__setattr__(self, attr, prices)

    @classmethod
    def constant(cls, price: float, name: str = "flat") -> "TariffSchedule":
        return cls(name, (price,) * SLOTS_PER_DAY, (price,) * SLOTS_PER_DAY)

    @classmethod
    def from_periods(cls, name, weekday, weekend=None) -> "TariffSchedule":
        """Build from ``[(start_hour, end_hour, price), ...]`` period lists."""

        def expand(periods):
            out = [None] * SLOTS_PER_DAY
            for lo, hi, price in periods:
                for slot in range(int(round(lo * 2)), int(round(hi * 2))):
                    out[slot] = price
            if any(p is None for p in out):
                raise ValidationError(f"tariff {name}: periods do not cover the day")
            return tuple(out)

        wd = expand(weekday)
        return cls(name, wd, expand(weekend) if weekend is not None else wd)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "weekday_prices": list(self.weekday_prices),
            "weekend_prices": list(self.weekend_prices),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TariffSchedule":
        missing = {"name", "weekday_prices", "weekend_prices"} - set(obj)
        if missing:
            raise IngestionError(f"tariff missing keys: {sorted(missing)}")
        return cls(obj["name"], obj["weekday_prices"], obj["weekend_prices"])


def load_tariff(path) -> TariffSchedule:
    with open(path) as fh:
        return TariffSchedule.from_json(json.load(fh))


def save_tariff(tariff: TariffSchedule, path) -> None:
    with open(path, "w") as fh:
        json.dump(tariff.to_json(), fh, indent=2)


# Illustrative shapes loosely modelled on PG&E plans; the prices are NOT the
# published rates and should be replaced by real schedules for any study.
EXAMPLE_TARIFFS: Dict[str, TariffSchedule] = {
    "EV2-A": TariffSchedule.from_periods(
        "EV2-A",
        [(0, 15, 0.25), (15, 16, 0.45), (16, 21, 0.55), (21, 24, 0.45)],
    ),
    "EV-B": TariffSchedule.from_periods(
        "EV-B",
        [(0, 7, 0.24), (7, 14, 0.40), (14, 21, 0.60), (21, 23, 0.40), (23, 24, 0.24)],
        [(0, 15, 0.24), (15, 19, 0.60), (19, 24, 0.24)],
    ),
    "TOU-D": TariffSchedule.from_periods(
        "TOU-D",
        [(0, 17, 0.38), (17, 20, 0.50), (20, 24, 0.38)],
        [(0, 24, 0.38)],
    ),
}


def expand_tariff(tariff: TariffSchedule, grid: TimeGrid) -> np.ndarray:
    """Price vector of length ``grid.num_steps`` in $/kWh.

    Each step must fall inside a single half-hour slot, so ``delta_t`` has to
    divide 30 minutes and the grid start has to sit on a step boundary.
    """
    per_slot = SLOT_HOURS / grid.delta_t
    if not _is_integral(per_slot):
        raise ValidationError(
            f"delta_t={grid.delta_t} h is incompatible with half-hour tariff slots"
        )
    day0 = datetime(grid.start.year, grid.start.month, grid.start.day)
    offset_h = (grid.start - day0).total_seconds() / 3600.0
    if not _is_integral(offset_h / grid.delta_t):
        raise ValidationError("grid start is not aligned to a step boundary")
    first = int(round(offset_h / grid.delta_t))
    per_slot = int(round(per_slot))
    spd = grid.steps_per_day

    k = first + np.arange(grid.num_steps)
    day = k // spd
    slot = (k % spd) // per_slot
    weekday0 = day0.weekday()
    is_weekend = ((weekday0 + day) % 7) >= 5
    wd = np.asarray(tariff.weekday_prices)
    we = np.asarray(tariff.weekend_prices)
    return np.where(is_weekend, we[slot], wd[slot])


@dataclass(frozen=True)
class BatterySpec:
    e_max: float = 13.5
    p_chg_max: float = 5.0
    p_dischg_max: float = 5.0
    eta: float = 0.9487
    e_init: Optional[float] = None  # defaults to half capacity

    def __post_init__(self):
        if self.e_init is None:
            object.__setattr__(self, "e_init", 0.5 * self.e_max)
        if not 0 < self.eta <= 1:
            raise ValidationError(f"eta must be in (0, 1], got {self.eta}")
        if self.e_max < 0:
            raise ValidationError("e_max must be >= 0")
        if not 0 <= self.e_init <= self.e_max:
            raise ValidationError(f"e_init={self.e_init} outside [0, {self.e_max}]")
        if self.p_chg_max <= 0 or self.p_dischg_max <= 0:
            raise ValidationError("power limits must be positive")


@dataclass(frozen=True)
class TransformerSpec:
    k_rated: float = 25.0
    dtheta_to_rated: float = 65.0
    tau_to_rated: float = 8.738
    loss_ratio: float = 3.625
    dtheta_h_rated: float = 15.0
    exp_n: float = 0.8
    exp_m: float = 0.8
    ambient_c: float = 25.0
    lifetime_h: float = 180000.0
    tau_unit: str = "hours"

    def __post_init__(self):
        if self.k_rated <= 0:
            raise ValidationError("k_rated must be positive")
        if self.tau_to_rated <= 0:
            raise ValidationError("tau_to_rated must be positive")
        if self.lifetime_h <= 0:
            raise ValidationError("lifetime_h must be positive")
        for name in ("exp_n", "exp_m"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValidationError(f"{name} must be in (0, 1], got {v}")
        if self.tau_unit not in ("hours", "seconds"):
            raise ValidationError(f"tau_unit must be 'hours' or 'seconds', got {self.tau_unit!r}")

    @property
    def tau_hours(self) -> float:
        return self.tau_to_rated if self.tau_unit == "hours" else self.tau_to_rated / 3600.0


@dataclass(frozen=True)
class NeighborhoodData:
    grid: TimeGrid
    homes: tuple
    tariff_of_home: dict
    shared_tariff: TariffSchedule
    transformer: TransformerSpec = field(default_factory=TransformerSpec)
    battery: BatterySpec = field(default_factory=BatterySpec)

    def __post_init__(self):
        homes = tuple(self.homes)
        object.__setattr__(self, "homes", homes)
        if not homes:
            raise ValidationError("neighborhood needs at least one home")
        ids = [h.home_id for h in homes]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate home ids")
        for h in homes:
            if len(h) != self.grid.num_steps:
                raise ValidationError(
                    f"home {h.home_id}: {len(h)} steps, grid has {self.grid.num_steps}"
                )
            if h.home_id not in self.tariff_of_home:
                raise ValidationError(f"home {h.home_id} has no tariff")

    @classmethod
    def with_shared_tariff(cls, grid, homes, tariff, **kw) -> "NeighborhoodData":
        homes = tuple(homes)
        return cls(grid, homes, {h.home_id: tariff for h in homes}, tariff, **kw)

    @property
    def n_homes(self) -> int:
        return len(self.homes)

    def stack(self, attr: str) -> np.ndarray:
        """(n_homes, T) array of one profile attribute."""
        return np.vstack([getattr(h, attr) for h in self.homes])

    def home_prices(self) -> np.ndarray:
        cache = {}
        rows = []
        for h in self.homes:
            t = self.tariff_of_home[h.home_id]
            if t.name not in cache:
                cache[t.name] = expand_tariff(t, self.grid)
            rows.append(cache[t.name])
        return np.vstack(rows)

    def shared_prices(self) -> np.ndarray:
        return expand_tariff(self.shared_tariff, self.grid)


# --------------------------------------------------------------------------
# CSV ingestion


def load_profiles(path, grid: TimeGrid) -> List[HomeProfile]:
    """Read a ``step,home_id,load_kw,solar_kw,ev_kw`` CSV into dense profiles."""
    T = grid.num_steps
    data: Dict[str, np.ndarray] = {}
    seen: Dict[str, np.ndarray] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(c.strip() for c in header) != PROFILE_COLUMNS:
            raise IngestionError(f"{path}: header must be {','.join(PROFILE_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise IngestionError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            try:
                step = int(row[0])
                values = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise IngestionError(f"{path}:{lineno}: {exc}") from None
            hid = row[1].strip()
            if not 0 <= step < T:
                raise IngestionError(f"{hid} step {step} outside grid of {T} steps")
            if hid not in data:
                data[hid] = np.zeros((3, T))
                seen[hid] = np.zeros(T, dtype=bool)
            if seen[hid][step]:
                raise IngestionError(f"{hid} duplicate step {step}")
            for name, v in zip(PROFILE_COLUMNS[2:], values):
                if v < 0:
                    raise ValidationError(f"{hid} negative {name} at step {step}")
            data[hid][:, step] = values
            seen[hid][step] = True

    profiles = []
    for hid, arr in data.items():
        if not seen[hid].all():
            missing = int(np.argmin(seen[hid]))
            raise IngestionError(f"{hid} missing step {missing}")
        profiles.append(HomeProfile(hid, arr[0], arr[1], arr[2]))
    return profiles


def write_profiles(profiles: Sequence[HomeProfile], path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROFILE_COLUMNS)
        for h in profiles:
            for t in range(len(h)):
                w.writerow([t, h.home_id, repr(float(h.load_kw[t])),
                            repr(float(h.solar_kw[t])), repr(float(h.ev_kw[t]))])
    tmp.replace(path)


# --------------------------------------------------------------------------
# Synthetic data

SEASON_SOLAR_FACTOR = {"summer": 1.0, "winter": 0.4}
SEASON_COOLING_KW = {"summer": 1.2, "winter": 0.0}


@dataclass(frozen=True)
class SynthesisParams:
    season: str = "summer"
    solar_factor: Optional[float] = None  # overrides the season default
    ev_penetration: float = 1.0
    ev_power_kw: float = 7.2
    ev_session_hours: tuple = (1.5, 4.0)
    ev_start_hours: tuple = (17.0, 22.0)
    ev_daily_probability: float = 0.7
    base_load_kw: tuple = (0.4, 0.9)
    evening_peak_kw: tuple = (1.0, 2.2)
    solar_capacity_kw: tuple = (3.0, 7.0)

    def __post_init__(self):
        if self.season not in SEASON_SOLAR_FACTOR:
            raise ValidationError(f"unknown season {self.season!r}")
        if not 0 <= self.ev_penetration <= 1:
            raise ValidationError("ev_penetration must be in [0, 1]")
        if self.solar_factor is not None and self.solar_factor < 0:
            raise ValidationError("solar_factor must be >= 0")

    @property
    def seasonal_solar(self) -> float:
        if self.solar_factor is not None:
            return self.solar_factor
        return SEASON_SOLAR_FACTOR[self.season]


def _bump(hours, center, width):
    return np.exp(-0.5 * ((hours - center) / width) ** 2)


def synthesize_neighborhood(
    seed: int,
    n_homes: int,
    grid: TimeGrid,
    params: SynthesisParams = SynthesisParams(),
) -> List[HomeProfile]:
    """Deterministic synthetic load/solar/EV profiles for ``n_homes`` homes.

    Loads have morning and evening peaks, plus afternoon cooling in summer.
    Solar is a clipped midday sine scaled by the seasonal factor and a daily
    cloudiness draw. EV homes charge in contiguous evening blocks at a fixed
    Level-2 power.
    """
    if n_homes < 1:
        raise ValidationError("n_homes must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
    T = grid.num_steps
    dt = grid.delta_t
    day0 = datetime(grid.start.year, grid.start.month, grid.start.day)
    abs_h = (grid.start - day0).total_seconds() / 3600.0 + dt * np.arange(T)
    hod = np.mod(abs_h, 24.0)
    day_idx = np.floor(abs_h / 24.0).astype(int)
    n_days = int(day_idx[-1]) + 1

    n_ev = int(round(params.ev_penetration * n_homes))
    ev_homes = set(rng.permutation(n_homes)[:n_ev].tolist())
    cooling = SEASON_COOLING_KW[params.season]
    solar_shape = np.clip(np.sin(np.pi * (hod - 6.0) / 13.0), 0.0, None)
    solar_shape[(hod < 6.0) | (hod > 19.0)] = 0.0

    homes = []
    for i in range(n_homes):
        base = rng.uniform(*params.base_load_kw)
        peak = rng.uniform(*params.evening_peak_kw)
        morning = rng.uniform(0.4, 1.0)
        evening_center = rng.uniform(18.0, 20.5)
        shape = (
            base
            + morning * _bump(hod, 7.5, 1.0)
            + peak * _bump(hod, evening_center, 1.6)
            + cooling * rng.uniform(0.5, 1.5) * _bump(hod, 16.0, 2.5)
        )
        day_scale = rng.uniform(0.8, 1.2, size=n_days)[day_idx]
        noise = rng.lognormal(0.0, 0.2, size=T)
        load = np.clip(shape * day_scale * noise, 0.0, None)

        cap = rng.uniform(*params.solar_capacity_kw)
        clouds = rng.uniform(0.55, 1.0, size=n_days)[day_idx]
        solar = params.seasonal_solar * cap * solar_shape * clouds

        ev = np.zeros(T)
        if i in ev_homes:
            for d in range(n_days):
                go = rng.random() < params.ev_daily_probability
                start_h = rng.uniform(*params.ev_start_hours)
                n_steps = max(1, int(round(rng.uniform(*params.ev_session_hours) / dt)))
                if go:
                    t0 = max(0, int(round((d * 24.0 + start_h - abs_h[0]) / dt)))
                    ev[t0:t0 + n_steps] = params.ev_power_kw
            if not ev.any():
                # guarantee at least one session inside the grid
                ev[max(0, T - n_steps):] = params.ev_power_kw
        homes.append(HomeProfile(f"h{i:03d}", load, solar, ev))
    return homes


def days_grid(days: int, delta_t: float = 0.5, start: datetime = datetime(2018, 7, 2)) -> TimeGrid:
    return TimeGrid(delta_t, int(round(days * 24.0 / delta_t)), start)
