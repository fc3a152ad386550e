"""Shared builders and solution checks for the test suite."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from functools import lru_cache
from typing import List

import numpy as np

from vbess.config import RunConfig, load_config
from vbess.schemes import hinge_gaps
from vbess.study import build_pool, trial_data
from vbess.timeseries import (
    EXAMPLE_TARIFFS,
    BatterySpec,
    HomeProfile,
    NeighborhoodData,
    SynthesisParams,
    TariffSchedule,
    TimeGrid,
    TransformerSpec,
    days_grid,
    synthesize_neighborhood,
)

MONDAY = datetime(2018, 7, 2)


def neighborhood(load, solar=None, ev=None, prices=0.3, k_rated=25.0, battery=None, delta_t=0.5):
    """Neighborhood from explicit (n, T) arrays and a flat or 48-slot price."""
    load = np.atleast_2d(np.asarray(load, float))
    n, T = load.shape
    solar = np.zeros_like(load) if solar is None else np.atleast_2d(np.asarray(solar, float))
    ev = np.zeros_like(load) if ev is None else np.atleast_2d(np.asarray(ev, float))
    homes = [HomeProfile(f"h{i}", load[i], solar[i], ev[i]) for i in range(n)]
    if isinstance(prices, TariffSchedule):
        tariff = prices
    elif np.ndim(prices) == 0:
        tariff = TariffSchedule.constant(float(prices))
    else:
        tariff = TariffSchedule("custom", list(prices), list(prices))
    return NeighborhoodData.with_shared_tariff(
        TimeGrid(delta_t, T, MONDAY), homes, tariff,
        transformer=TransformerSpec(k_rated=k_rated), battery=battery or BatterySpec(),
    )


def synthetic(seed, n_homes=3, days=2, ev_penetration=0.5, tariff="EV2-A", season="summer", **kw):
    grid = days_grid(days)
    homes = synthesize_neighborhood(seed, n_homes, grid,
                                    SynthesisParams(season=season, ev_penetration=ev_penetration))
    return NeighborhoodData.with_shared_tariff(grid, homes, EXAMPLE_TARIFFS[tariff], **kw)


def desk_config(**over) -> RunConfig:
    d = load_config().to_dict()
    d.update(over)
    return RunConfig.from_dict(d)


@lru_cache(maxsize=4)
def desk_trials(n: int):
    """``n`` sampled trials from the bundled desk-scale config: list of (seed, data)."""
    cfg = desk_config(trials=n)
    pool = build_pool(cfg)
    return cfg, [trial_data(cfg, pool, i) for i in range(n)]


@dataclass
class Hygiene:
    """Worst-case hygiene numbers accumulated over many solutions."""

    simultaneity_kw: float = 0.0
    soc_kwh: float = 0.0
    hinge_gap: float = 0.0
    lol_decrease: float = 0.0
    solutions: int = 0
    solves: int = 0
    traces: int = 0
    notes: List[str] = field(default_factory=list)

    def on_solve(self, problem, qpsol):
        gaps = hinge_gaps(problem, qpsol)
        self.hinge_gap = max(self.hinge_gap, max(gaps.values(), default=0.0))
        self.solves += 1

    def solution(self, sol, battery: BatterySpec):
        self.solutions += 1
        e_max = battery.e_max
        for c, d in sol.powers():
            self.simultaneity_kw = max(self.simultaneity_kw, float(np.max(np.minimum(c, d), initial=0.0)))
        worst = max(float(np.max(-sol.soc, initial=0.0)), float(np.max(sol.soc - e_max, initial=0.0)))
        if sol.partitions:
            w = sol.weights
            # SOC index t is capped by the weight in force during step t; the final one by the last
            w_ext = np.concatenate([w, w[:, -1:]], axis=1)
            soc_r, soc_s = sol.partitions["soc_R"], sol.partitions["soc_S"]
            worst = max(worst, float(np.max(-soc_r)), float(np.max(-soc_s)),
                        float(np.max(soc_r - w_ext * e_max)),
                        float(np.max(soc_s - (1 - w_ext) * e_max)))
        self.soc_kwh = max(self.soc_kwh, worst)

    def trace(self, trace):
        self.traces += 1
        steps = np.diff(trace.cumulative_lol)
        self.lol_decrease = max(self.lol_decrease, float(np.max(-steps, initial=0.0)))

    def merge(self, other: "Hygiene"):
        self.simultaneity_kw = max(self.simultaneity_kw, other.simultaneity_kw)
        self.soc_kwh = max(self.soc_kwh, other.soc_kwh)
        self.hinge_gap = max(self.hinge_gap, other.hinge_gap)
        self.lol_decrease = max(self.lol_decrease, other.lol_decrease)
        self.solutions += other.solutions
        self.solves += other.solves
        self.traces += other.traces


# criterion number -> PASS/FAIL line, echoed in the terminal summary
ACCEPTANCE_LINES: dict = {}
