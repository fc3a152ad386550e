"""Receding-horizon and one-shot controllers over a neighborhood."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import qp
from .exceptions import SolverError, ValidationError
from .forecast import get_forecaster
from .schemes import (
    SchemeConfig,
    SchemeInputs,
    SchemeKind,
    SchemeSolution,
    build_from_inputs,
    decode,
    default_partition_e0,
    evaluate_terms,
)
from .timeseries import NeighborhoodData

DIAG_COLUMNS = ("step", "solve_iters", "primal_res", "dual_res", "wall_ms")


@dataclass
class IterationDiagnostics:
    step: int
    solve_iters: int
    primal_res: float
    dual_res: float
    wall_ms: float


@dataclass
class MpcRun:
    kind: SchemeKind
    controller: str  # "foresight" or "mpc"
    forecaster: Optional[str]
    horizon_steps: Optional[int]
    solution: SchemeSolution  # realized trajectories over the window
    diagnostics: List[IterationDiagnostics] = field(default_factory=list)

    @property
    def objective_terms(self):
        return self.solution.objective_terms

    def write_diagnostics(self, path) -> None:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(DIAG_COLUMNS)
            for d in self.diagnostics:
                w.writerow([d.step, d.solve_iters, repr(d.primal_res), repr(d.dual_res), f"{d.wall_ms:.3f}"])
        tmp.replace(path)


def _span(data: NeighborhoodData, window):
    if window is None:
        return 0, data.grid.num_steps
    start, stop = (window.start, window.stop) if isinstance(window, range) else window
    if not 0 <= start < stop <= data.grid.num_steps:
        raise ValidationError(f"window [{start}, {stop}) is empty or outside the data")
    return int(start), int(stop)


def _solve(problem, step, tol, max_iters, on_solve=None):
    sol = qp.solve(problem.qp, tol=tol, max_iters=max_iters)
    diag = IterationDiagnostics(step, sol.iterations, sol.primal_residual, sol.dual_residual, sol.wall_ms)
    if not sol.optimal:
        raise SolverError(
            f"{problem.kind} at step {step}: solver status {sol.status} "
            f"(primal {sol.primal_residual:.2e}, dual {sol.dual_residual:.2e})",
            step=step,
            diagnostics=vars(diag),
        )
    if on_solve is not None:
        on_solve(problem, sol)
    return sol, diag


def run_perfect_foresight(data: NeighborhoodData, kind: SchemeKind, cfg: SchemeConfig,
                          window=None, e0=None, tol: float = qp.DEFAULT_TOL,
                          max_iters: int = qp.DEFAULT_MAX_ITERS, on_solve=None) -> MpcRun:
    """One solve over the whole window with exact knowledge of the profiles.

    ``on_solve(problem, qp_solution)`` is called after every successful solve.
    """
    start, stop = _span(data, window)
    inp = SchemeInputs.from_data(data, (start, stop))
    problem = build_from_inputs(inp, kind, cfg, e0)
    sol, diag = _solve(problem, start, tol, max_iters, on_solve)
    return MpcRun(kind, "foresight", None, None, decode(problem, sol), [diag])


def run_mpc(data: NeighborhoodData, kind: SchemeKind, cfg: SchemeConfig, forecaster: str = "naive",
            horizon_steps: int = 48, window=None, e0=None, tol: float = qp.DEFAULT_TOL,
            max_iters: int = qp.DEFAULT_MAX_ITERS, on_solve=None) -> MpcRun:
    """Receding-horizon control: plan on forecasts and apply only the first step of each plan.

    Each plan covers ``[t, min(t + horizon_steps, stop))``.  Only the first
    step's charge/discharge is applied; the battery follows the commanded
    power exactly, and meters are realized from the actual profiles.
    """
    if horizon_steps < 1:
        raise ValidationError("horizon_steps must be >= 1")
    forecast_fn = get_forecaster(forecaster)
    start, stop = _span(data, window)
    n, T = data.n_homes, stop - start
    bat = data.battery
    dt, eta = data.grid.delta_t, bat.eta
    actual = SchemeInputs.from_data(data, (start, stop))

    suffixes = ("_R", "_S") if kind.partitioned else ("",)
    chg = {s: np.zeros((n, T)) for s in suffixes}
    dis = {s: np.zeros((n, T)) for s in suffixes}
    soc = {s: np.zeros((n, T + 1)) for s in suffixes}
    if kind.partitioned:
        if e0 is None:
            split = kind.retained(n) if kind.name == "hybrid" else 0.5
            e0 = default_partition_e0(bat, n, split)
        soc["_R"][:, 0], soc["_S"][:, 0] = e0
    else:
        soc[""][:, 0] = bat.e_init if e0 is None else e0
    weights = np.zeros((n, T)) if kind.partitioned else None
    k_alloc = np.zeros((n, T)) if kind.name == "uneven" else None
    diags = []

    if kind.partitioned:
        retained = kind.retained(n) if kind.name == "hybrid" else None
        caps = {"_R": retained, "_S": None if retained is None else 1.0 - retained}

    for k in range(T):
        t = start + k
        w_stop = min(t + horizon_steps, stop)
        fc = forecast_fn(data, (t, w_stop))
        inp = SchemeInputs.from_data(data, (t, w_stop), forecast=fc)
        if kind.partitioned:
            state = (soc["_R"][:, k], soc["_S"][:, k])
        else:
            state = soc[""][:, k]
        problem = build_from_inputs(inp, kind, cfg, state)
        sol, diag = _solve(problem, t, tol, max_iters, on_solve)
        diags.append(diag)
        plan = decode(problem, sol)

        for s in suffixes:
            if kind.partitioned:
                c_plan, d_plan = plan.partitions[f"b_chg{s}"], plan.partitions[f"b_dischg{s}"]
            else:
                c_plan, d_plan = plan.b_chg, plan.b_dischg
            c_cap, d_cap = bat.p_chg_max, bat.p_dischg_max
            if kind.partitioned and caps[s] is not None:
                c_cap, d_cap = caps[s] * c_cap, caps[s] * d_cap
            c = np.clip(c_plan[:, 0], 0.0, c_cap)
            d = np.clip(d_plan[:, 0], 0.0, d_cap)
            chg[s][:, k], dis[s][:, k] = c, d
            soc[s][:, k + 1] = soc[s][:, k] + dt * (eta * c - d / eta)
        if weights is not None:
            weights[:, k] = plan.weights[:, 0]
        if k_alloc is not None:
            k_alloc[:, k] = plan.k_alloc

    partitions = None
    if kind.partitioned:
        partitions = {}
        for s in suffixes:
            partitions[f"b_chg{s}"] = chg[s]
            partitions[f"b_dischg{s}"] = dis[s]
            partitions[f"soc{s}"] = soc[s]
        b_chg = chg["_R"] + chg["_S"]
        b_dis = dis["_R"] + dis["_S"]
        soc_total = soc["_R"] + soc["_S"]
    else:
        b_chg, b_dis, soc_total = chg[""], dis[""], soc[""]

    realized = SchemeSolution(
        kind=kind,
        window=(start, stop),
        dt=dt,
        home_ids=actual.home_ids,
        b_chg=b_chg,
        b_dischg=b_dis,
        soc=soc_total,
        meters=actual.base + b_chg - b_dis,
        partitions=partitions,
        k_alloc=k_alloc,
        weights=weights,
    )
    realized.objective_terms = evaluate_terms(kind, actual, cfg, realized)
    return MpcRun(kind, "mpc", forecaster, horizon_steps, realized, diags)


def no_battery(data: NeighborhoodData, window=None) -> SchemeSolution:
    """Trajectories with batteries absent: meters are raw ``L - S + EV``."""
    start, stop = _span(data, window)
    inp = SchemeInputs.from_data(data, (start, stop))
    zeros = np.zeros_like(inp.base)
    return SchemeSolution(
        kind=SchemeKind.individual(),
        window=(start, stop),
        dt=inp.dt,
        home_ids=inp.home_ids,
        b_chg=zeros,
        b_dischg=zeros.copy(),
        soc=np.zeros((inp.n, inp.T + 1)),
        meters=inp.base.copy(),
    )


__all__ = ["MpcRun", "IterationDiagnostics", "run_mpc", "run_perfect_foresight", "no_battery"]
