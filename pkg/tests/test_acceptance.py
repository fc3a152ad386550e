"""Acceptance suite: nine headline checks, each printing one PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v -s`` (``-s`` shows
the lines inline; they are also repeated in the terminal summary).
"""

from __future__ import annotations

import itertools
import time

import numpy as np
import pytest

import support
from support import Hygiene, desk_trials, neighborhood, synthetic
from vbess import qp
from vbess.cli import main as cli_main
from vbess.mpc import run_mpc, run_perfect_foresight
from vbess.schemes import (
    SchemeConfig,
    SchemeInputs,
    SchemeKind,
    aging_coefficient,
    build_individual,
    build_joint,
    cycle_cost,
    evaluate_terms,
    solve_scheme,
)
from vbess.study import sweep_partition
from vbess.thermal import ThermalState, aging, aging_factor, simulate_transformer, thermal_step
from vbess.timeseries import BatterySpec, TimeGrid, TransformerSpec

RESULTS = support.ACCEPTANCE_LINES
CFG = SchemeConfig()


def report(num: int, ok: bool, detail: str) -> None:
    line = f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[num] = line
    print(line)


# --------------------------------------------------------------------------
# 1. thermal fixtures


def test_criterion_1_thermal_fixtures():
    t0 = time.perf_counter()
    spec = TransformerSpec()
    f110 = float(aging_factor(110.0))
    f120 = float(aging_factor(120.0))
    grid = TimeGrid(0.5, 48, support.MONDAY)
    rated = simulate_transformer(np.full(48, spec.k_rated), spec, grid)
    _, _, lol = aging(np.full(1344, 110.0), 0.5, spec)
    elapsed = time.perf_counter() - t0

    # informational: settling from a no-load equilibrium with tau in hours
    state = ThermalState(65.0 * (1 / 4.625) ** 0.8)
    for _ in range(48):
        state, dth = thermal_step(state, 1.0, spec, 0.5)
    cold_hst = spec.ambient_c + state.dtheta_to + dth

    checks = {
        "F(110)=1": f110 == 1.0,
        "F(120)=2.71": abs(f120 - 2.71) <= 0.01,
        "HST->105": abs(rated.hst[-1] - 105.0) <= 0.5 and np.all(np.abs(rated.hst - 105.0) <= 0.5),
        "LOL=0.3733%": abs(lol - 0.3733) <= 1e-4,
        "<1s": elapsed < 1.0,
    }
    ok = all(checks.values())
    report(1, ok, f"F(120)={f120:.4f} HST24h={rated.hst[-1]:.3f}C LOL={lol:.6f}% "
                  f"({elapsed * 1000:.0f} ms; cold-start HST at 24h={cold_hst:.2f}C)")
    assert ok, checks


# --------------------------------------------------------------------------
# 2. brute-force oracle on one home, three steps


def _brute_force_individual(load, solar, prices, e0, battery, k, cfg, dt=0.5):
    """Best individual objective with net battery power on a 0.5 kW grid."""
    levels = np.arange(-battery.p_dischg_max, battery.p_chg_max + 1e-9, 0.5)
    best = np.inf
    for combo in itertools.product(levels, repeat=len(load)):
        b = np.array(combo)
        chg, dis = np.maximum(b, 0.0), np.maximum(-b, 0.0)
        soc = e0 + np.cumsum(dt * (battery.eta * chg - dis / battery.eta))
        if soc.min() < -1e-12 or soc.max() > battery.e_max + 1e-12:
            continue
        meter = load - solar + b
        obj = (np.sum(prices * np.maximum(meter, 0.0)) * dt
               + cfg.lam * np.sum(np.maximum(meter - k, 0.0) ** 2)
               + cfg.alpha * np.sum(chg + dis))
        best = min(best, obj)
    return best


@pytest.fixture(scope="module")
def crit2():
    rng = np.random.default_rng(20180702)
    bat = BatterySpec()
    hyg = Hygiene()
    rows = []
    t0 = time.perf_counter()
    # Loads up to 9 kW exceed the 5 kW discharge limit, and e0 >= 8 kWh covers
    # three full-power steps, so the continuous optimum is power-bound and the
    # 0.5 kW grid contains it; energy and penalty terms are both exercised.
    for _ in range(25):
        load = rng.integers(0, 19, size=3) * 0.5
        solar = rng.integers(0, 7, size=3) * 0.5
        prices = rng.uniform(0.1, 0.6, size=3)
        e0 = float(rng.uniform(8.0, 13.5))
        k = float(rng.choice([2.0, 25.0]))
        tariff = np.concatenate([prices, np.full(45, 0.3)])  # steps 0-2 are the first slots
        data = neighborhood(load[None], solar[None], prices=tariff, k_rated=k,
                            battery=BatterySpec(e_init=e0))
        problem = build_individual(data, CFG)
        sol, qsol = solve_scheme(problem)
        hyg.on_solve(problem, qsol)
        hyg.solution(sol, bat)
        brute = _brute_force_individual(load, solar, prices, e0, bat, k, CFG)
        rows.append((sol.objective, brute))
    return rows, hyg, time.perf_counter() - t0


def test_criterion_2_oracle_equivalence(crit2):
    rows, _, elapsed = crit2
    below = all(q <= b + 1e-6 for q, b in rows)
    close = all(abs(q - b) <= 0.02 * abs(b) + 1e-9 for q, b in rows)
    worst = max(abs(q - b) / abs(b) for q, b in rows if abs(b) > 1e-9)
    ok = below and close and elapsed < 30
    span = f"objectives {min(b for _, b in rows):.3f}..{max(b for _, b in rows):.3f}"
    report(2, ok, f"25 instances ({span}), worst relative gap {worst:.2e}, "
                  f"QP<=brute+1e-6: {below} ({elapsed:.1f} s)")
    assert ok


# --------------------------------------------------------------------------
# 3. scheme orderings on 20 trials


KINDS = ("individual", "uneven", "joint", "hybrid", "dynamic")


@pytest.fixture(scope="module")
def crit3():
    cfg, trials = desk_trials(20)
    hyg = Hygiene()
    out = []
    t0 = time.perf_counter()
    for ts, data in trials:
        sols = {}
        for k in KINDS:
            run = run_perfect_foresight(data, SchemeKind.parse(k), CFG, cfg.window, on_solve=hyg.on_solve)
            sols[k] = run.solution
            hyg.solution(run.solution, data.battery)
            hyg.trace(simulate_transformer(run.solution.aggregate_meter, data.transformer,
                                           data.grid.window(*cfg.window)))
        inp = SchemeInputs.from_data(data, cfg.window)
        joint_at_indiv = sum(evaluate_terms(SchemeKind.joint(), inp, CFG, sols["individual"]).values())
        out.append((ts, sols, joint_at_indiv))
    return out, hyg, time.perf_counter() - t0


def test_criterion_3_scheme_ordering(crit3):
    rows, _, elapsed = crit3
    slack = lambda v: 1e-6 * (1.0 + abs(v))  # noqa: E731
    joint_ok = sum(s["joint"].objective <= j + slack(j) for _, s, j in rows)
    uneven_ok = sum(s["uneven"].objective <= s["individual"].objective + slack(s["individual"].objective)
                    for _, s, _ in rows)
    dyn_ok = sum(s["dynamic"].objective <= s["hybrid"].objective + slack(s["hybrid"].objective)
                 for _, s, _ in rows)
    n = len(rows)
    ok = joint_ok == uneven_ok == dyn_ok == n and elapsed < 600
    report(3, ok, f"joint<=joint(indiv) {joint_ok}/{n}, uneven<=individual {uneven_ok}/{n}, "
                  f"dynamic<=hybrid(0.5) {dyn_ok}/{n} ({elapsed:.1f} s)")
    assert ok


# --------------------------------------------------------------------------
# 4. partition sweep dominance


@pytest.fixture(scope="module")
def crit4():
    cfg, trials = desk_trials(20)
    hyg = Hygiene()
    out = []
    for ts, data in trials:
        def on_run(_, run, battery=data.battery):
            hyg.solution(run.solution, battery)

        costs = dict(sweep_partition(data, [0.0, 0.75, 1.0], CFG, cfg.window,
                                     on_run=on_run, on_solve=hyg.on_solve))
        out.append((ts, costs))
    return out, hyg


def test_criterion_4_partition_sweep_dominance(crit4):
    rows, _ = crit4
    n = len(rows)
    dominated = sum(c[1.0] <= c[0.0] + 1e-6 * (1 + abs(c[0.0])) for _, c in rows)
    ratio = np.median([c[0.75] / c[1.0] for _, c in rows])
    ok = dominated == n
    report(4, ok, f"cost(100% shared) <= cost(0% shared) on {dominated}/{n}; "
                  f"median cost(75%)/cost(100%) = {ratio:.3f} (reported only)")
    assert ok


# --------------------------------------------------------------------------
# 5. MPC consistency


@pytest.fixture(scope="module")
def crit5():
    hyg = Hygiene()
    rows = []
    for i in range(10):
        data = synthetic(100 + i, n_homes=3, days=5)
        window = (4 * 48, 5 * 48)
        kind = SchemeKind.parse(KINDS[i % len(KINDS)])
        pf = run_perfect_foresight(data, kind, CFG, window, on_solve=hyg.on_solve)
        oracle = run_mpc(data, kind, CFG, "oracle", window[1] - window[0], window, on_solve=hyg.on_solve)
        naive = None
        if kind.name != "dynamic":
            naive = run_mpc(data, kind, CFG, "naive", 48, window, on_solve=hyg.on_solve)
        for run in (pf, oracle, naive):
            if run is not None:
                hyg.solution(run.solution, data.battery)
                hyg.trace(simulate_transformer(run.solution.aggregate_meter, data.transformer,
                                               data.grid.window(*window)))
        rows.append((str(kind), pf.solution.objective, oracle.solution.objective,
                     None if naive is None else naive.solution.objective))
    return rows, hyg


def test_criterion_5_mpc_consistency(crit5):
    rows, _ = crit5
    rel = [abs(o - p) / abs(p) for _, p, o, _ in rows]
    within = sum(r <= 0.01 for r in rel)
    degr = [(nv - p) for _, p, _, nv in rows if nv is not None]
    degr_rel = [(nv - p) / abs(p) for _, p, _, nv in rows if nv is not None]
    ok = within == len(rows) and sum(degr) >= 0
    report(5, ok, f"oracle MPC within 1% on {within}/{len(rows)} (worst {max(rel):.2e}); naive "
                  f"degradation total ${sum(degr):.3f}, median {100 * np.median(degr_rel):.1f}% (reported)")
    assert ok


# --------------------------------------------------------------------------
# 6. hygiene over everything solved in 2-5


def test_criterion_6_solution_hygiene(crit2, crit3, crit4, crit5):
    hyg = Hygiene()
    for h in (crit2[1], crit3[1], crit4[1], crit5[1]):
        hyg.merge(h)
    checks = {
        "simultaneity": hyg.simultaneity_kw <= 1e-4,
        "soc": hyg.soc_kwh <= 1e-6,
        "hinge": hyg.hinge_gap <= 1e-5,
        "lol": hyg.lol_decrease <= 0.0,
    }
    ok = all(checks.values()) and hyg.traces > 0
    report(6, ok, f"{hyg.solves} QP solves, {hyg.solutions} trajectories, {hyg.traces} thermal traces; "
                  f"max min(chg,dis)={hyg.simultaneity_kw:.1e} kW, SOC excess={hyg.soc_kwh:.1e} kWh, "
                  f"hinge gap={hyg.hinge_gap:.1e}")
    assert ok, checks


# --------------------------------------------------------------------------
# 7. aging-cost direction


def test_criterion_7_aging_cost_direction():
    cfg, trials = desk_trials(20)
    aged = SchemeConfig(aging_cost_enabled=True)
    worse = 0
    deltas = []
    for _, data in trials:
        base = run_perfect_foresight(data, SchemeKind.joint(), CFG, cfg.window).solution.throughput_kwh()
        with_cost = run_perfect_foresight(data, SchemeKind.joint(), aged, cfg.window).solution.throughput_kwh()
        deltas.append(with_cost - base)
        worse += with_cost > base + 1e-6 * (1 + base)
    per_cycle = cycle_cost(aged)
    per_kw_step = aging_coefficient(aged, BatterySpec(), 0.5)
    ok = worse == 0 and abs(per_cycle - 3.964) <= 0.001
    report(7, ok, f"throughput increased on {worse}/{len(trials)} trials (mean change "
                  f"{np.mean(deltas):.2f} kWh); ${per_cycle:.4f}/cycle, ${per_kw_step:.4f}/kW-step")
    assert ok


# --------------------------------------------------------------------------
# 8. full-scale joint solve


def test_criterion_8_full_scale_runtime():
    data = synthetic(8, n_homes=12, days=28)
    assert data.grid.num_steps == 1344
    t0 = time.perf_counter()
    problem = build_joint(data, CFG)
    sol = qp.solve(problem.qp)
    elapsed = time.perf_counter() - t0
    ok = sol.optimal and sol.primal_residual <= 1e-6 and sol.dual_residual <= 1e-6 and elapsed < 60
    report(8, ok, f"12 homes x 1344 steps, {problem.qp.num_vars} vars: {elapsed:.1f} s, "
                  f"residuals {sol.primal_residual:.1e}/{sol.dual_residual:.1e}, status {sol.status}")
    assert ok


# --------------------------------------------------------------------------
# 9. reproducibility of the default study


def test_criterion_9_reproducible_report(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    codes = [cli_main(["run", "--out-dir", str(a)]), cli_main(["run", "--out-dir", str(b)])]
    ra, rb = (a / "study_report.csv").read_bytes(), (b / "study_report.csv").read_bytes()
    lines = ra.decode().splitlines()
    ok = codes == [0, 0] and ra == rb and len(lines) > 1
    report(9, ok, f"two default runs: {len(lines) - 1} rows each, byte-identical={ra == rb}")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
