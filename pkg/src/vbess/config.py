"""Run configuration: JSON schema with defaults, plus validation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime
from importlib import resources
from pathlib import Path
from typing import List, Optional

import numpy as np

from .exceptions import ValidationError
from .schemes import SCHEME_NAMES, SchemeConfig, SchemeKind
from .timeseries import (
    EXAMPLE_TARIFFS,
    BatterySpec,
    TariffSchedule,
    TimeGrid,
    TransformerSpec,
    load_tariff,
)

# Named sub-streams of the master seed.
STREAM_TRIAL = 0x7121
STREAM_SYNTHESIS = 0x5E
STREAM_SAMPLING = 0x5A
STREAM_TARIFFS = 0x7A

DEFAULT_SCHEMES = ["individual", "uneven", "joint", "hybrid", "dynamic"]


@dataclass
class RunConfig:
    """Everything a study run needs.  Unknown keys are rejected on load."""

    seed: int = 2018
    trials: int = 50
    days: int = 28
    warmup_days: int = 1
    delta_t: float = 0.5
    start: str = "2018-07-01T00:00:00"
    season: str = "summer"
    pool_size: int = 48
    ev_penetration: float = 0.5
    profiles_csv: Optional[str] = None
    tariff: str = "EV2-A"
    home_tariffs: List[str] = field(default_factory=list)
    schemes: List[str] = field(default_factory=lambda: list(DEFAULT_SCHEMES))
    controller: str = "foresight"
    forecaster: str = "naive"
    mpc_horizon: int = 48
    hybrid_w: float = 0.5
    dynamic_block_hours: float = 2.0
    sweep_fractions: List[float] = field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75, 1.0])
    sample_net_solar: bool = False
    violation_tol_kw: float = 0.01
    write_thermal: bool = True
    write_trajectories: bool = False
    record_timing: bool = False
    jobs: int = 1
    tol: float = 1e-6
    max_iters: int = 200_000
    out_dir: str = "vbess_out"
    scheme: dict = field(default_factory=lambda: asdict(SchemeConfig()))
    battery: dict = field(default_factory=lambda: {**asdict(BatterySpec()), "e_init": None})
    transformer: dict = field(default_factory=lambda: asdict(TransformerSpec()))

    # --- derived views -------------------------------------------------

    @property
    def grid(self) -> TimeGrid:
        total = self.warmup_days + self.days
        return TimeGrid(self.delta_t, int(round(total * 24.0 / self.delta_t)), self.start_dt)

    @property
    def start_dt(self) -> datetime:
        try:
            return datetime.fromisoformat(self.start)
        except ValueError:
            raise ValidationError(f"start: not an ISO timestamp: {self.start!r}") from None

    @property
    def window(self) -> tuple:
        spd = int(round(24.0 / self.delta_t))
        return (self.warmup_days * spd, (self.warmup_days + self.days) * spd)

    @property
    def num_steps(self) -> int:
        return self.window[1] - self.window[0]

    def scheme_config(self) -> SchemeConfig:
        return _build("scheme", SchemeConfig, self.scheme)

    def battery_spec(self) -> BatterySpec:
        return _build("battery", BatterySpec, self.battery)

    def transformer_spec(self) -> TransformerSpec:
        return _build("transformer", TransformerSpec, self.transformer)

    def scheme_kinds(self) -> List[SchemeKind]:
        return [SchemeKind.parse(s, self.hybrid_w, self.dynamic_block_hours) for s in self.schemes]

    def shared_tariff(self) -> TariffSchedule:
        return resolve_tariff(self.tariff)

    def home_tariff_pool(self) -> List[TariffSchedule]:
        return [resolve_tariff(t) for t in self.home_tariffs]

    # --- validation and io ---------------------------------------------

    def validate(self) -> "RunConfig":
        def need(cond, key, msg):
            if not cond:
                raise ValidationError(f"{key}: {msg}")

        need(isinstance(self.seed, int) and self.seed >= 0, "seed", "must be a non-negative integer")
        need(self.trials >= 1, "trials", "must be >= 1")
        need(self.days >= 1, "days", "must be >= 1")
        need(self.warmup_days >= 0, "warmup_days", "must be >= 0")
        need(self.delta_t > 0, "delta_t", "must be > 0")
        need(self.pool_size >= 1, "pool_size", "must be >= 1")
        need(0.0 <= self.ev_penetration <= 1.0, "ev_penetration", "must be in [0, 1]")
        need(self.controller in ("foresight", "mpc"), "controller", "must be 'foresight' or 'mpc'")
        need(self.forecaster in ("naive", "oracle"), "forecaster", "must be 'naive' or 'oracle'")
        need(self.mpc_horizon >= 1, "mpc_horizon", "must be >= 1")
        need(0.0 <= self.hybrid_w <= 1.0, "hybrid_w", "must be in [0, 1]")
        need(self.dynamic_block_hours > 0, "dynamic_block_hours", "must be > 0")
        need(self.jobs >= 1, "jobs", "must be >= 1")
        need(self.tol > 0, "tol", "must be > 0")
        need(self.max_iters >= 1, "max_iters", "must be >= 1")
        need(self.violation_tol_kw >= 0, "violation_tol_kw", "must be >= 0")
        need(len(self.schemes) > 0, "schemes", "must name at least one scheme")
        for f in self.sweep_fractions:
            need(0.0 <= f <= 1.0, "sweep_fractions", f"{f} outside [0, 1]")
        for s in self.schemes:
            need(s.split(":")[0] in SCHEME_NAMES, "schemes", f"unknown scheme {s!r}")
        if self.controller == "mpc" and self.forecaster == "naive":
            need(self.warmup_days >= 1, "warmup_days",
                 "naive forecasting needs at least one day of history before control starts")
        if self.profiles_csv is None:
            need(self.season in ("summer", "winter"), "season", "must be 'summer' or 'winter'")
        try:
            self.grid
            self.scheme_kinds()
            self.scheme_config()
            self.battery_spec()
            self.transformer_spec()
            self.shared_tariff()
            self.home_tariff_pool()
        except ValidationError as exc:
            raise ValidationError(str(exc)) from None
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        if not isinstance(obj, dict):
            raise ValidationError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(obj) - known)
        if unknown:
            raise ValidationError(f"unknown config key(s): {', '.join(unknown)}")
        cfg = cls()
        for key, value in obj.items():
            if key in ("scheme", "battery", "transformer"):
                if not isinstance(value, dict):
                    raise ValidationError(f"{key}: must be an object")
                merged = dict(getattr(cfg, key))
                for sub in value:
                    if sub not in merged:
                        raise ValidationError(f"unknown config key: {key}.{sub}")
                merged.update(value)
                value = merged
            else:
                _check_type(key, value, getattr(cfg, key))
            setattr(cfg, key, value)
        return cfg.validate()

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _check_type(key: str, value, default) -> None:
    if default is None:
        ok = value is None or isinstance(value, str)
    elif isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    else:
        ok = isinstance(value, type(default))
    if not ok:
        raise ValidationError(f"{key}: expected {type(default).__name__}, got {value!r}")


def _build(key: str, cls, values: dict):
    try:
        return cls(**values)
    except ValidationError as exc:
        raise ValidationError(f"{key}: {exc}") from None
    except TypeError as exc:
        raise ValidationError(f"{key}: {exc}") from None


def resolve_tariff(ref: str) -> TariffSchedule:
    """Tariff by example name or JSON file path."""
    if ref in EXAMPLE_TARIFFS:
        return EXAMPLE_TARIFFS[ref]
    path = Path(ref)
    if not path.is_file():
        raise ValidationError(f"tariff: {ref!r} is neither a known tariff ({sorted(EXAMPLE_TARIFFS)}) nor a file")
    return load_tariff(path)


def load_config(path=None) -> RunConfig:
    """Read a JSON config; with no path, the bundled desk-scale default."""
    try:
        if path is None:
            text = resources.files("vbess").joinpath("data/default_config.json").read_text()
        else:
            text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config: {exc}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config is not valid JSON: {exc}") from None
    return RunConfig.from_dict(obj)


def substream(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *keys]))


def trial_seed(master: int, trial: int) -> int:
    return int(np.random.SeedSequence([master, STREAM_TRIAL, trial]).generate_state(1)[0])
