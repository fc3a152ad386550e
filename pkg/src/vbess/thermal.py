"""Oil-filled distribution transformer thermal model and insulation aging.

Top-oil rise follows a first-order lag toward a load-dependent ultimate
rise. The hottest spot sits a winding gradient above the top oil, and aging
acceleration is an Arrhenius factor referenced to 110 °C.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

import numpy as np

from .exceptions import ValidationError
from .timeseries import TimeGrid, TransformerSpec

AGING_B = 15000.0
REFERENCE_HST_K = 383.0  # 110 °C
EQUAL_EPS = 1e-9


@dataclass(frozen=True)
class ThermalState:
    dtheta_to: float
    step: int = 0


@dataclass
class ThermalTrace:
    hst: np.ndarray
    dtheta_to: np.ndarray
    faa: np.ndarray
    feqa: float
    pct_lol: float
    delta_t: float
    lifetime_h: float

    @property
    def cumulative_lol(self) -> np.ndarray:
        """Percent loss of life accumulated up to and including each step."""
        return 100.0 * np.cumsum(self.faa * self.delta_t) / self.lifetime_h

    def to_csv(self, path) -> None:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "hst_c", "dtheta_to_c", "faa"])
            for t in range(len(self.hst)):
                w.writerow([t, repr(float(self.hst[t])), repr(float(self.dtheta_to[t])),
                            repr(float(self.faa[t]))])
        tmp.replace(path)

    def summary(self) -> dict:
        return {"feqa": self.feqa, "pct_lol": self.pct_lol}

    def write_summary(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)


def ultimate_top_oil_rise(load_pu: float, spec: TransformerSpec) -> float:
    """Steady-state top-oil rise (°C) for a constant per-unit load."""
    R = spec.loss_ratio
    return spec.dtheta_to_rated * ((load_pu ** 2 * R + 1.0) / (R + 1.0)) ** spec.exp_n


def oil_time_constant(ultimate: float, current: float, spec: TransformerSpec) -> float:
    """Load-dependent oil time constant in hours.

    Falls back to the rated constant where the ratio formula is singular
    (rise already at its ultimate value, or a non-positive ratio).
    """
    tau_r = spec.tau_hours
    u = ultimate / spec.dtheta_to_rated
    o = current / spec.dtheta_to_rated
    if abs(ultimate - current) < EQUAL_EPS or u <= 0 or o <= 0:
        return tau_r
    inv_n = 1.0 / spec.exp_n
    denom = u ** inv_n - o ** inv_n
    if denom == 0:
        return tau_r
    return tau_r * (u - o) / denom


def thermal_step(state: ThermalState, load_pu: float, spec: TransformerSpec,
                 dt_h: float) -> Tuple[ThermalState, float]:
    """Advance one step under ``load_pu``; returns the new state and the hottest-spot rise."""
    if load_pu < 0:
        raise ValidationError("load_pu must be >= 0 (take the magnitude first)")
    if dt_h <= 0:
        raise ValidationError("dt_h must be > 0")
    ult = ultimate_top_oil_rise(load_pu, spec)
    tau = oil_time_constant(ult, state.dtheta_to, spec)
    new_to = (ult - state.dtheta_to) * (1.0 - math.exp(-dt_h / tau)) + state.dtheta_to
    dtheta_h = spec.dtheta_h_rated * load_pu ** (2.0 * spec.exp_m)
    return ThermalState(new_to, state.step + 1), dtheta_h


def hst(state: ThermalState, dtheta_h: float, ambient_c: float) -> float:
    return ambient_c + state.dtheta_to + dtheta_h


def aging_factor(hst_c) -> np.ndarray:
    """Accelerated aging factor; exactly 1 at 110 °C."""
    hst_c = np.asarray(hst_c, dtype=float)
    return np.exp(AGING_B / REFERENCE_HST_K - AGING_B / (hst_c + 273.0))


def aging(hst_series, dt_h: float, spec: TransformerSpec):
    """Return ``(faa, feqa, pct_lol)`` for an HST series sampled every ``dt_h`` hours."""
    hst_series = np.asarray(hst_series, dtype=float)
    if hst_series.size == 0:
        raise ValidationError("HST series is empty")
    faa = aging_factor(hst_series)
    weights = np.full(faa.shape, dt_h)
    feqa = float(np.sum(weights * faa) / np.sum(weights))
    elapsed_h = hst_series.size * dt_h
    pct_lol = 100.0 * feqa * elapsed_h / spec.lifetime_h
    return faa, feqa, pct_lol


def simulate_transformer(aggregate_kw, spec: TransformerSpec, grid: TimeGrid) -> ThermalTrace:
    """Run the thermal chain over an aggregate load series (kW).

    Reverse power flow heats the windings the same as forward flow, so the
    per-unit load is ``|kW| / k_rated``.  The top-oil rise starts at the
    steady state of the first step's load.
    """
    load = np.abs(np.asarray(aggregate_kw, dtype=float)) / spec.k_rated
    if load.size != grid.num_steps:
        raise ValidationError(f"series has {load.size} steps, grid has {grid.num_steps}")
    dt = grid.delta_t
    state = ThermalState(ultimate_top_oil_rise(load[0], spec))
    hst_out = np.empty(load.size)
    to_out = np.empty(load.size)
    for t, lpu in enumerate(load):
        state, dtheta_h = thermal_step(state, float(lpu), spec, dt)
        to_out[t] = state.dtheta_to
        hst_out[t] = hst(state, dtheta_h, spec.ambient_c)
    faa, feqa, pct_lol = aging(hst_out, dt, spec)
    return ThermalTrace(hst_out, to_out, faa, feqa, pct_lol, dt, spec.lifetime_h)
