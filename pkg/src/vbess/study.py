"""Neighborhood sampling and billing, with scheme comparisons and partition sweeps built on them."""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .config import STREAM_SAMPLING, STREAM_SYNTHESIS, STREAM_TARIFFS, substream, trial_seed
from .exceptions import ValidationError
from .mpc import MpcRun, no_battery, run_mpc, run_perfect_foresight
from .schemes import SchemeConfig, SchemeKind, SchemeSolution
from .thermal import ThermalTrace, simulate_transformer
from .timeseries import (
    HomeProfile,
    NeighborhoodData,
    SynthesisParams,
    TariffSchedule,
    TimeGrid,
    expand_tariff,
    load_profiles,
    synthesize_neighborhood,
)

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("trial_seed", "scheme", "controller", "cost_usd", "pct_lol", "violations",
                  "violation_kwh", "throughput_kwh", "cycles", "wall_ms")
SWEEP_COLUMNS = ("fraction_shared", "trial_seed", "cost_usd")
NO_BESS = "no_bess"


@dataclass(frozen=True)
class TrialSpec:
    seed: int
    home_pool: tuple
    transformer: object
    battery: object
    month_window: tuple  # (start, stop) steps

    def __post_init__(self):
        object.__setattr__(self, "home_pool", tuple(self.home_pool))
        start, stop = self.month_window
        if not 0 <= start < stop:
            raise ValidationError(f"bad month window {self.month_window}")


def sample_trial(pool: Sequence[HomeProfile], k_rated: float, rng: np.random.Generator,
                 window=None, net_solar: bool = False) -> List[HomeProfile]:
    """Add randomly ordered homes until the peak summed load exceeds ``k_rated``.

    The sizing load is household demand only (EV excluded); with
    ``net_solar`` the solar output is subtracted first.  Returns the minimal
    qualifying prefix of a random permutation of ``pool``.
    """
    if not pool:
        raise ValidationError("empty home pool")
    start, stop = (0, len(pool[0])) if window is None else window
    order = rng.permutation(len(pool))
    running = np.zeros(stop - start)
    chosen = []
    for i in order:
        h = pool[int(i)]
        load = h.load_kw[start:stop]
        if net_solar:
            load = load - h.solar_kw[start:stop]
        running = running + load
        chosen.append(h)
        if running.max() > k_rated:
            return chosen
    raise ValidationError(
        f"pool of {len(pool)} homes never exceeds the {k_rated} kW limit (peak {running.max():.2f} kW)"
    )


def bill_prices(meters, prices, mode: str, dt: float) -> float:
    """Energy bill without net metering.

    ``meters`` is (n, T) kW.  ``prices`` is (T,) or (n, T) $/kWh; aggregate
    mode needs a single (T,) vector.
    """
    meters = np.atleast_2d(np.asarray(meters, dtype=float))
    prices = np.asarray(prices, dtype=float)
    if mode == "per_home":
        return float(np.sum(np.broadcast_to(prices, meters.shape) * np.maximum(meters, 0.0)) * dt)
    if mode == "aggregate":
        if prices.ndim != 1:
            raise ValidationError("aggregate billing needs one price vector")
        return float(prices @ np.maximum(meters.sum(axis=0), 0.0) * dt)
    raise ValidationError(f"unknown billing mode {mode!r}")


def bill(meters, tariffs, mode: str, grid: TimeGrid) -> float:
    """Bill meters on ``grid`` under one tariff or a per-home list of tariffs."""
    if isinstance(tariffs, TariffSchedule):
        prices = expand_tariff(tariffs, grid)
    else:
        if mode == "aggregate":
            raise ValidationError("aggregate billing takes a single tariff")
        prices = np.vstack([expand_tariff(t, grid) for t in tariffs])
    return bill_prices(meters, prices, mode, grid.delta_t)


@dataclass(frozen=True)
class Controller:
    kind: str = "foresight"  # or "mpc"
    forecaster: str = "naive"
    horizon_steps: int = 48

    def __post_init__(self):
        if self.kind not in ("foresight", "mpc"):
            raise ValidationError(f"controller must be 'foresight' or 'mpc', got {self.kind!r}")

    @property
    def label(self) -> str:
        return "foresight" if self.kind == "foresight" else f"mpc-{self.forecaster}"

    def run(self, data, kind, cfg, window, tol=1e-6, max_iters=200_000, on_solve=None) -> MpcRun:
        if self.kind == "foresight":
            return run_perfect_foresight(data, kind, cfg, window=window, tol=tol, max_iters=max_iters,
                                         on_solve=on_solve)
        return run_mpc(data, kind, cfg, self.forecaster, self.horizon_steps, window=window,
                       tol=tol, max_iters=max_iters, on_solve=on_solve)


@dataclass
class ReportRow:
    trial_seed: int
    scheme: str
    controller: str
    cost_usd: float
    pct_lol: float
    violations: int
    violation_kwh: float
    throughput_kwh: float
    cycles: float
    wall_ms: Optional[float] = None

    def as_csv(self) -> List[str]:
        return [
            str(self.trial_seed), self.scheme, self.controller, repr(self.cost_usd), repr(self.pct_lol),
            str(self.violations), repr(self.violation_kwh), repr(self.throughput_kwh), repr(self.cycles),
            "" if self.wall_ms is None else f"{self.wall_ms:.1f}",
        ]


@dataclass
class SchemeOutcome:
    row: ReportRow
    solution: SchemeSolution
    thermal: ThermalTrace
    run: Optional[MpcRun] = None


def scheme_cost(data: NeighborhoodData, sol: SchemeSolution, mode: str) -> float:
    start, stop = sol.window
    grid = data.grid.window(start, stop)
    if mode == "per_home":
        return bill(sol.meters, [data.tariff_of_home[h.home_id] for h in data.homes], "per_home", grid)
    return bill(sol.meters, data.shared_tariff, "aggregate", grid)


def evaluate_outcome(data: NeighborhoodData, sol: SchemeSolution, label: str, controller: str,
                     billing_mode: str, trial_seed: int, violation_tol_kw: float = 0.01,
                     wall_ms: Optional[float] = None) -> SchemeOutcome:
    start, stop = sol.window
    grid = data.grid.window(start, stop)
    agg = sol.aggregate_meter
    k = data.transformer.k_rated
    excess = np.maximum(agg - k, 0.0)
    trace = simulate_transformer(agg, data.transformer, grid)
    throughput = sol.throughput_kwh()
    e_max = data.battery.e_max
    row = ReportRow(
        trial_seed=trial_seed,
        scheme=label,
        controller=controller,
        cost_usd=scheme_cost(data, sol, billing_mode),
        pct_lol=trace.pct_lol,
        violations=int(np.sum(agg > k + violation_tol_kw)),
        violation_kwh=float(excess.sum() * grid.delta_t),
        throughput_kwh=throughput,
        cycles=throughput / (2.0 * e_max) if e_max > 0 else 0.0,
        wall_ms=wall_ms,
    )
    return SchemeOutcome(row, sol, trace)


def compare_schemes(data: NeighborhoodData, schemes: Sequence[SchemeKind], cfg: SchemeConfig,
                    controller: Controller = Controller(), window=None, trial_seed: int = 0,
                    record_timing: bool = False, violation_tol_kw: float = 0.01,
                    tol: float = 1e-6, max_iters: int = 200_000) -> Dict[str, SchemeOutcome]:
    """Run the no-battery baseline and each scheme; one report row per entry.

    Individual-style schemes are billed per home under each home's tariff;
    shared schemes are billed on the aggregate meter under the shared tariff.
    The no-battery baseline is billed per home.
    """
    window = (0, data.grid.num_steps) if window is None else tuple(window)
    out: Dict[str, SchemeOutcome] = {}
    base = no_battery(data, window)
    out[NO_BESS] = evaluate_outcome(data, base, NO_BESS, controller.label, "per_home", trial_seed,
                                    violation_tol_kw, 0.0 if record_timing else None)
    for kind in schemes:
        t0 = time.perf_counter()
        run = controller.run(data, kind, cfg, window, tol=tol, max_iters=max_iters)
        wall = 1000.0 * (time.perf_counter() - t0)
        res = evaluate_outcome(data, run.solution, str(kind), controller.label, kind.billing_mode,
                               trial_seed, violation_tol_kw, wall if record_timing else None)
        res.run = run
        out[str(kind)] = res
    return out


def sweep_partition(data: NeighborhoodData, fractions: Sequence[float], cfg: SchemeConfig,
                    window=None, controller: Controller = Controller(),
                    tol: float = 1e-6, on_run=None, on_solve=None) -> List[tuple]:
    """Hybrid cost for each shared fraction (retained weight is ``1 - shared``).

    ``on_run(fraction, run)`` receives each controller run and ``on_solve`` is
    forwarded to the controller, both for inspection.
    """
    window = (0, data.grid.num_steps) if window is None else tuple(window)
    rows = []
    for f in fractions:
        if not 0.0 <= f <= 1.0:
            raise ValidationError(f"shared fraction {f} outside [0, 1]")
        kind = SchemeKind.hybrid(1.0 - f)
        run = controller.run(data, kind, cfg, window, tol=tol, on_solve=on_solve)
        if on_run is not None:
            on_run(f, run)
        rows.append((float(f), scheme_cost(data, run.solution, kind.billing_mode)))
    return rows


def quantile_summary(rows: Sequence[ReportRow], qs=(0.0, 0.25, 0.5, 0.75, 1.0)) -> dict:
    groups: Dict[str, List[ReportRow]] = {}
    for r in rows:
        groups.setdefault(f"{r.scheme}|{r.controller}", []).append(r)
    out = {}
    for key, rs in sorted(groups.items()):
        entry = {"trials": len(rs)}
        for metric in ("cost_usd", "pct_lol", "violations", "throughput_kwh"):
            vals = np.array([getattr(r, metric) for r in rs], dtype=float)
            entry[metric] = {f"q{int(q * 100)}": float(np.quantile(vals, q)) for q in qs}
        out[key] = entry
    return out


def write_report(rows: Sequence[ReportRow], path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in rows:
            w.writerow(r.as_csv())
    tmp.replace(path)


# --------------------------------------------------------------------------
# study orchestration


def _file_label(label: str) -> str:
    return label.replace(":", "-")


def build_pool(cfg) -> List[HomeProfile]:
    """Home pool for a run: the configured CSV, else a synthetic pool."""
    grid = cfg.grid
    if cfg.profiles_csv:
        return load_profiles(cfg.profiles_csv, grid)
    seed = int(np.random.SeedSequence([cfg.seed, STREAM_SYNTHESIS]).generate_state(1)[0])
    params = SynthesisParams(season=cfg.season, ev_penetration=cfg.ev_penetration)
    return synthesize_neighborhood(seed, cfg.pool_size, grid, params)


def trial_data(cfg, pool: Sequence[HomeProfile], trial: int):
    """Sample trial ``trial`` from ``pool``; returns ``(trial_seed, data)``."""
    ts = trial_seed(cfg.seed, trial)
    transformer = cfg.transformer_spec()
    homes = sample_trial(pool, transformer.k_rated, substream(ts, STREAM_SAMPLING),
                         window=cfg.window, net_solar=cfg.sample_net_solar)
    shared = cfg.shared_tariff()
    choices = cfg.home_tariff_pool()
    if choices:
        rng = substream(ts, STREAM_TARIFFS)
        tariffs = {h.home_id: choices[int(rng.integers(len(choices)))] for h in homes}
    else:
        tariffs = {h.home_id: shared for h in homes}
    data = NeighborhoodData(cfg.grid, tuple(homes), tariffs, shared, transformer, cfg.battery_spec())
    return ts, data


def controller_of(cfg) -> Controller:
    return Controller(cfg.controller, cfg.forecaster, cfg.mpc_horizon)


def active_schemes(cfg) -> List[SchemeKind]:
    kinds = cfg.scheme_kinds()
    if cfg.controller == "mpc" and cfg.forecaster == "naive":
        dropped = [k for k in kinds if k.name == "dynamic"]
        if dropped:
            log.warning("dynamic scheme is not run under naive-forecast MPC; skipping")
        kinds = [k for k in kinds if k.name != "dynamic"]
    return kinds


def run_trial(cfg, trial: int, out_dir=None, pool=None) -> List[ReportRow]:
    """Compare all configured schemes on one sampled neighborhood."""
    pool = build_pool(cfg) if pool is None else pool
    ts, data = trial_data(cfg, pool, trial)
    outcomes = compare_schemes(
        data, active_schemes(cfg), cfg.scheme_config(), controller_of(cfg), cfg.window, ts,
        record_timing=cfg.record_timing, violation_tol_kw=cfg.violation_tol_kw,
        tol=cfg.tol, max_iters=cfg.max_iters,
    )
    if out_dir is not None:
        out_dir = Path(out_dir)
        resolved = cfg.to_dict()
        for label, res in outcomes.items():
            stem = f"{ts}_{_file_label(label)}"
            if cfg.write_thermal:
                res.thermal.to_csv(out_dir / "thermal" / f"{stem}.csv")
            if cfg.write_trajectories:
                payload = {"config": resolved, "trial_seed": ts, "controller": res.row.controller,
                           **res.solution.to_json(cfg.scheme_config())}
                write_json(payload, out_dir / "trajectories" / f"{stem}.json")
                if res.run is not None and res.run.controller == "mpc":
                    res.run.write_diagnostics(out_dir / "trajectories" / f"{stem}_iteration_diagnostics.csv")
    return [res.row for res in outcomes.values()]


def _run_trial_job(args):
    cfg, trial, out_dir = args
    return run_trial(cfg, trial, out_dir)


def _map_trials(fn, cfg, out_dir):
    jobs = [(cfg, i, out_dir) for i in range(cfg.trials)]
    if cfg.jobs <= 1 or cfg.trials == 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(cfg.jobs, cfg.trials)) as ex:
        return list(ex.map(fn, jobs))  # map keeps trial order


def _prepare(out_dir, cfg) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if cfg.write_thermal:
        (out_dir / "thermal").mkdir(exist_ok=True)
    if cfg.write_trajectories:
        (out_dir / "trajectories").mkdir(exist_ok=True)
    return out_dir


def run_study(cfg, out_dir) -> List[ReportRow]:
    """Full study: every trial, every scheme; writes report CSV and summary JSON."""
    out_dir = _prepare(out_dir, cfg)
    rows = [r for trial_rows in _map_trials(_run_trial_job, cfg, out_dir) for r in trial_rows]
    write_report(rows, out_dir / "study_report.csv")
    write_json({"config": cfg.to_dict(), "quantiles": quantile_summary(rows)},
               out_dir / "study_summary.json")
    return rows


def _sweep_trial_job(args):
    cfg, trial, _ = args
    ts, data = trial_data(cfg, build_pool(cfg), trial)
    costs = sweep_partition(data, cfg.sweep_fractions, cfg.scheme_config(), cfg.window,
                            controller_of(cfg), tol=cfg.tol)
    return [(f, ts, c) for f, c in costs]


def run_sweep(cfg, out_dir) -> List[tuple]:
    """Hybrid partition sweep over all trials; writes ``sweep.csv``."""
    out_dir = _prepare(out_dir, cfg)
    rows = [r for trial_rows in _map_trials(_sweep_trial_job, cfg, out_dir) for r in trial_rows]
    rows.sort(key=lambda r: r[0])
    path = out_dir / "sweep.csv"
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for f, ts, c in rows:
            w.writerow([repr(f), str(ts), repr(c)])
    tmp.replace(path)

    by_trial: Dict[int, Dict[float, float]] = {}
    for f, ts, c in rows:
        by_trial.setdefault(ts, {})[f] = c
    summary = {"config": cfg.to_dict(), "median_cost_by_fraction": {}}
    for f in sorted({r[0] for r in rows}):
        summary["median_cost_by_fraction"][repr(f)] = float(np.median([r[2] for r in rows if r[0] == f]))
    if 0.0 in cfg.sweep_fractions and 1.0 in cfg.sweep_fractions:
        summary["full_share_not_worse"] = sum(d[1.0] <= d[0.0] + 1e-6 for d in by_trial.values())
        summary["trials"] = len(by_trial)
    write_json(summary, out_dir / "sweep_summary.json")
    return rows


def write_json(obj, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")
    tmp.replace(path)
