"""The five battery sharing schemes as convex QPs, and decoding of their solutions.

Every builder returns a :class:`SchemeProblem` wrapping a :class:`~vbess.qp.QpProblem`
over a step window of a :class:`~vbess.timeseries.NeighborhoodData`.  Loads can be
replaced by a forecast so the same builders serve one-shot and receding-horizon
control.

Meter convention: ``M = L - S + EV + B_chg - B_dischg`` (kW), no net metering.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from . import qp
from .exceptions import SolverError, ValidationError
from .qp import LinExpr, QpProblem, add_hinge_cost, add_squared_hinge_cost
from .timeseries import BatterySpec, NeighborhoodData

SCHEME_NAMES = ("individual", "uneven", "joint", "hybrid", "dynamic")
PARTITIONED = ("hybrid", "dynamic")
TERM_NAMES = ("energy_cost", "transformer_penalty", "simultaneity_penalty", "aging_cost")


@dataclass(frozen=True)
class SchemeKind:
    name: str
    weights: Optional[Tuple[float, ...]] = None  # retained fraction per home (hybrid)
    block_hours: Optional[float] = None  # re-partition interval (dynamic)

    def __post_init__(self):
        if self.name not in SCHEME_NAMES:
            raise ValidationError(f"unknown scheme {self.name!r}; expected one of {SCHEME_NAMES}")
        if self.name == "hybrid":
            if self.weights is None:
                raise ValidationError("hybrid scheme needs retained weights")
            w = tuple(float(v) for v in np.atleast_1d(self.weights))
            if any(not 0.0 <= v <= 1.0 for v in w):
                raise ValidationError(f"hybrid weights must lie in [0, 1], got {w}")
            object.__setattr__(self, "weights", w)
        if self.name == "dynamic":
            if self.block_hours is None or self.block_hours <= 0:
                raise ValidationError("dynamic scheme needs block_hours > 0")

    @classmethod
    def individual(cls):
        return cls("individual")

    @classmethod
    def uneven(cls):
        return cls("uneven")

    @classmethod
    def joint(cls):
        return cls("joint")

    @classmethod
    def hybrid(cls, weights=0.5):
        return cls("hybrid", weights=weights)

    @classmethod
    def dynamic(cls, block_hours=2.0):
        return cls("dynamic", block_hours=float(block_hours))

    @classmethod
    def parse(cls, text: str, hybrid_w: float = 0.5, block_hours: float = 2.0) -> "SchemeKind":
        """``"joint"``, ``"hybrid"``, ``"hybrid:0.25"``, ``"dynamic:2"`` ..."""
        name, _, arg = text.strip().partition(":")
        if name == "hybrid":
            return cls.hybrid(float(arg) if arg else hybrid_w)
        if name == "dynamic":
            return cls.dynamic(float(arg) if arg else block_hours)
        if arg:
            raise ValidationError(f"scheme {name!r} takes no argument")
        return cls(name)

    @property
    def partitioned(self) -> bool:
        return self.name in PARTITIONED

    @property
    def billing_mode(self) -> str:
        return "per_home" if self.name in ("individual", "uneven") else "aggregate"

    def retained(self, n: int) -> np.ndarray:
        w = np.asarray(self.weights, dtype=float)
        if w.size == 1:
            return np.full(n, float(w[0]))
        if w.size != n:
            raise ValidationError(f"hybrid has {w.size} weights for {n} homes")
        return w

    def __str__(self):
        if self.name == "hybrid":
            w = self.weights
            return f"hybrid:{w[0]:g}" if len(set(w)) == 1 else "hybrid:custom"
        if self.name == "dynamic":
            return f"dynamic:{self.block_hours:g}"
        return self.name


@dataclass(frozen=True)
class SchemeConfig:
    lam: float = 100.0
    alpha: float = 0.01
    aging_cost_enabled: bool = False
    c_batt: float = 5550.0
    n_cyc: float = 1400.0
    hybrid_shared_cost_form: str = "linear"

    def __post_init__(self):
        if self.lam < 0:
            raise ValidationError("lambda must be >= 0")
        if self.alpha <= 0:
            raise ValidationError("alpha must be > 0")
        if self.n_cyc <= 0:
            raise ValidationError("n_cyc must be > 0")
        if self.c_batt < 0:
            raise ValidationError("c_batt must be >= 0")
        if self.hybrid_shared_cost_form not in ("linear", "squared"):
            raise ValidationError("hybrid_shared_cost_form must be 'linear' or 'squared'")

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def cycle_cost(cfg: SchemeConfig) -> float:
    """Dollars per full charge+discharge cycle."""
    return cfg.c_batt / cfg.n_cyc


def aging_coefficient(cfg: SchemeConfig, battery: BatterySpec, dt: float) -> float:
    """Dollars per kW of (dis)charge power held for one step."""
    if battery.e_max <= 0:
        return 0.0
    return cycle_cost(cfg) * dt / (2.0 * battery.e_max)


@dataclass
class SchemeInputs:
    """Numeric inputs for one window: the net base meter and prices, with device limits."""

    dt: float
    base: np.ndarray  # (n, T) L - S + EV
    home_prices: np.ndarray  # (n, T)
    shared_prices: np.ndarray  # (T,)
    battery: BatterySpec
    k_rated: float
    start: int = 0
    home_ids: tuple = ()

    @property
    def n(self) -> int:
        return self.base.shape[0]

    @property
    def T(self) -> int:
        return self.base.shape[1]

    @classmethod
    def from_data(cls, data: NeighborhoodData, window=None, forecast=None) -> "SchemeInputs":
        start, stop = _window(data, window)
        if forecast is not None:
            base = np.asarray(forecast.load_kw) - np.asarray(forecast.solar_kw) + np.asarray(forecast.ev_kw)
            if base.shape != (data.n_homes, stop - start):
                raise ValidationError(f"forecast shape {base.shape} does not match window")
        else:
            base = (data.stack("load_kw") - data.stack("solar_kw") + data.stack("ev_kw"))[:, start:stop]
        return cls(
            dt=data.grid.delta_t,
            base=np.asarray(base, dtype=float),
            home_prices=data.home_prices()[:, start:stop],
            shared_prices=data.shared_prices()[start:stop],
            battery=data.battery,
            k_rated=data.transformer.k_rated,
            start=start,
            home_ids=tuple(h.home_id for h in data.homes),
        )


def _window(data: NeighborhoodData, window) -> Tuple[int, int]:
    if window is None:
        return 0, data.grid.num_steps
    start, stop = (window.start, window.stop) if isinstance(window, range) else window
    if not 0 <= start < stop <= data.grid.num_steps:
        raise ValidationError(f"window [{start}, {stop}) is empty or outside the data")
    return int(start), int(stop)


@dataclass
class SchemeProblem:
    qp: QpProblem
    kind: SchemeKind
    cfg: SchemeConfig
    inputs: SchemeInputs
    window: Tuple[int, int]
    suffixes: Tuple[str, ...] = ("",)
    power_blocks: Tuple[str, ...] = ()
    hinge_blocks: Dict[str, Tuple[str, LinExpr]] = field(default_factory=dict)


# --------------------------------------------------------------------------
# building blocks


def _add_battery(p: QpProblem, suffix: str, inp: SchemeInputs, e0, e_cap, chg_cap, dis_cap):
    n, T, dt, eta = inp.n, inp.T, inp.dt, inp.battery.eta
    e_cap = np.broadcast_to(np.asarray(e_cap, float), (n,))
    chg = p.add_vars(f"B_chg{suffix}", (n, T), 0.0,
                     np.broadcast_to(np.asarray(chg_cap, float).reshape(-1, 1), (n, T)), ("home", "t"))
    dis = p.add_vars(f"B_dischg{suffix}", (n, T), 0.0,
                     np.broadcast_to(np.asarray(dis_cap, float).reshape(-1, 1), (n, T)), ("home", "t"))
    e_lb = np.zeros((n, T + 1))
    e_ub = np.repeat(e_cap[:, None], T + 1, axis=1)
    e_lb[:, 0], e_ub[:, 0] = -np.inf, np.inf  # pinned by equality below
    E = p.add_vars(f"E{suffix}", (n, T + 1), e_lb, e_ub, ("home", "t"))
    p.add_eq(LinExpr.var(E[:, 0]), np.broadcast_to(np.asarray(e0, float), (n,)))
    dyn = (LinExpr.var(E[:, 1:]) - LinExpr.var(E[:, :-1])
           - LinExpr.var(chg, dt * eta) + LinExpr.var(dis, dt / eta))
    p.add_eq(dyn, 0.0)
    return chg, dis, E


def _home_meter(inp: SchemeInputs, chg, dis) -> LinExpr:
    return LinExpr.var(chg) - LinExpr.var(dis) + inp.base.ravel()


def _aggregate_meter(inp: SchemeInputs, chg, dis) -> LinExpr:
    return LinExpr.sum_rows(chg) - LinExpr.sum_rows(dis) + inp.base.sum(axis=0)


def _check_e0(e0, cap, what):
    e0 = np.asarray(e0, dtype=float)
    if np.any(e0 < -1e-9) or np.any(e0 > np.asarray(cap) + 1e-9):
        raise ValidationError(f"{what} initial energy {e0} outside [0, {cap}]")


def _finish(sp: SchemeProblem) -> SchemeProblem:
    p = sp.qp
    blocks = []
    for s in sp.suffixes:
        blocks += [f"B_chg{s}", f"B_dischg{s}"]
    sp.power_blocks = tuple(blocks)
    for b in blocks:
        p.add_linear_cost(p.index(b), sp.cfg.alpha)
    if sp.cfg.aging_cost_enabled:
        add_aging_cost(sp)
    return sp


def add_aging_cost(sp: SchemeProblem) -> None:
    """Linear cycle cost on every charge/discharge power variable of ``sp``."""
    coef = aging_coefficient(sp.cfg, sp.inputs.battery, sp.inputs.dt)
    for b in sp.power_blocks:
        sp.qp.add_linear_cost(sp.qp.index(b), coef)


def _default_e0(inp: SchemeInputs, e0):
    if e0 is None:
        return np.full(inp.n, inp.battery.e_init)
    e0 = np.broadcast_to(np.asarray(e0, dtype=float), (inp.n,)).copy()
    _check_e0(e0, inp.battery.e_max, "battery")
    return e0


# --------------------------------------------------------------------------
# schemes


def build_individual(data, cfg: SchemeConfig, window=None, e0=None, forecast=None) -> SchemeProblem:
    inp = SchemeInputs.from_data(data, window, forecast)
    return _individual(inp, cfg, _default_e0(inp, e0), uneven=False)


def build_individual_uneven(data, cfg: SchemeConfig, window=None, e0=None, forecast=None) -> SchemeProblem:
    inp = SchemeInputs.from_data(data, window, forecast)
    return _individual(inp, cfg, _default_e0(inp, e0), uneven=True)


def _individual(inp: SchemeInputs, cfg: SchemeConfig, e0, uneven: bool) -> SchemeProblem:
    b = inp.battery
    p = QpProblem()
    chg, dis, _ = _add_battery(p, "", inp, e0, b.e_max, b.p_chg_max, b.p_dischg_max)
    meter = _home_meter(inp, chg, dis)
    add_hinge_cost(p, meter, (inp.home_prices * inp.dt).ravel(), "u_energy")
    if uneven:
        k_alloc = p.add_vars("K_alloc", (inp.n,), 0.0, dims=("home",))
        p.add_eq(LinExpr(np.zeros(inp.n), k_alloc, np.ones(inp.n), [0.0]), inp.k_rated)
        excess = meter - LinExpr.var(np.repeat(k_alloc, inp.T))
    else:
        excess = meter - inp.k_rated / inp.n
    add_squared_hinge_cost(p, excess, cfg.lam, "s_penalty")
    kind = SchemeKind.uneven() if uneven else SchemeKind.individual()
    sp = SchemeProblem(p, kind, cfg, inp, (inp.start, inp.start + inp.T))
    sp.hinge_blocks = {"u_energy": ("max(M,0)", meter), "s_penalty": ("max(M-K,0)", excess)}
    return _finish(sp)


def build_joint(data, cfg: SchemeConfig, window=None, e0=None, forecast=None) -> SchemeProblem:
    inp = SchemeInputs.from_data(data, window, forecast)
    return _joint(inp, cfg, _default_e0(inp, e0))


def _joint(inp: SchemeInputs, cfg: SchemeConfig, e0) -> SchemeProblem:
    b = inp.battery
    p = QpProblem()
    chg, dis, _ = _add_battery(p, "", inp, e0, b.e_max, b.p_chg_max, b.p_dischg_max)
    agg = _aggregate_meter(inp, chg, dis)
    add_hinge_cost(p, agg, inp.shared_prices * inp.dt, "u_energy")
    excess = agg - inp.k_rated
    add_squared_hinge_cost(p, excess, cfg.lam, "s_penalty")
    sp = SchemeProblem(p, SchemeKind.joint(), cfg, inp, (inp.start, inp.start + inp.T))
    sp.hinge_blocks = {"u_energy": ("max(sum M,0)", agg), "s_penalty": ("max(sum M-K,0)", excess)}
    return _finish(sp)


def _partition_costs(p: QpProblem, inp: SchemeInputs, cfg: SchemeConfig, chg_r, dis_r, chg_s, dis_s):
    retained = _home_meter(inp, chg_r, dis_r)
    add_hinge_cost(p, retained, (inp.home_prices * inp.dt).ravel(), "u_energy_R")
    shared = _aggregate_meter(inp, chg_s, dis_s)
    if cfg.hybrid_shared_cost_form == "linear":
        add_hinge_cost(p, shared, inp.shared_prices * inp.dt, "u_energy_S")
    else:
        add_squared_hinge_cost(p, shared, inp.shared_prices * inp.dt, "u_energy_S")
    excess = shared - inp.k_rated
    add_squared_hinge_cost(p, excess, cfg.lam, "s_penalty")
    return {"u_energy_R": ("max(M+B_R,0)", retained),
            "u_energy_S": ("max(sum M+B_S,0)", shared),
            "s_penalty": ("max(sum M+B_S-K,0)", excess)}


def default_partition_e0(inp_or_battery, n: int, retained: np.ndarray):
    """Split ``e_init`` across partitions in proportion to the retained fraction."""
    battery = getattr(inp_or_battery, "battery", inp_or_battery)
    e0 = np.full(n, battery.e_init)
    retained = np.broadcast_to(np.asarray(retained, float), (n,))
    return retained * e0, (1.0 - retained) * e0


def build_hybrid(data, cfg: SchemeConfig, W, window=None, e0R=None, e0S=None, forecast=None) -> SchemeProblem:
    inp = SchemeInputs.from_data(data, window, forecast)
    kind = SchemeKind.hybrid(W)
    return _hybrid(inp, cfg, kind, e0R, e0S)


def _hybrid(inp: SchemeInputs, cfg: SchemeConfig, kind: SchemeKind, e0R=None, e0S=None) -> SchemeProblem:
    b = inp.battery
    w = kind.retained(inp.n)
    if e0R is None or e0S is None:
        d_r, d_s = default_partition_e0(b, inp.n, w)
        e0R = d_r if e0R is None else e0R
        e0S = d_s if e0S is None else e0S
    e0R = np.broadcast_to(np.asarray(e0R, float), (inp.n,))
    e0S = np.broadcast_to(np.asarray(e0S, float), (inp.n,))
    _check_e0(e0R, w * b.e_max, "retained partition")
    _check_e0(e0S, (1 - w) * b.e_max, "shared partition")

    p = QpProblem()
    chg_r, dis_r, _ = _add_battery(p, "_R", inp, e0R, w * b.e_max, w * b.p_chg_max, w * b.p_dischg_max)
    chg_s, dis_s, _ = _add_battery(p, "_S", inp, e0S, (1 - w) * b.e_max,
                                   (1 - w) * b.p_chg_max, (1 - w) * b.p_dischg_max)
    hinges = _partition_costs(p, inp, cfg, chg_r, dis_r, chg_s, dis_s)
    sp = SchemeProblem(p, kind, cfg, inp, (inp.start, inp.start + inp.T), suffixes=("_R", "_S"))
    sp.hinge_blocks = hinges
    return _finish(sp)


def block_index(start: int, T: int, dt: float, block_hours: float) -> np.ndarray:
    """Partition block of each step in ``[start, start + T)``, aligned to absolute time.

    Blocks are numbered from the one containing ``start``.
    """
    spb = block_hours / dt
    if abs(spb - round(spb)) > 1e-9 or round(spb) < 1:
        raise ValidationError(f"block_hours={block_hours} is not a multiple of delta_t={dt}")
    spb = int(round(spb))
    t = start + np.arange(T)
    return t // spb - start // spb


def partition_matrix(start: int, T: int, dt: float, block_hours: float) -> np.ndarray:
    """The 0/1 matrix mapping block weights to per-step weights (rows steps, cols blocks)."""
    blk = block_index(start, T, dt, block_hours)
    Z = np.zeros((T, blk[-1] + 1))
    Z[np.arange(T), blk] = 1.0
    return Z


def build_dynamic(data, cfg: SchemeConfig, block_hours: float = 2.0, window=None,
                  e0R=None, e0S=None, forecast=None) -> SchemeProblem:
    inp = SchemeInputs.from_data(data, window, forecast)
    return _dynamic(inp, cfg, SchemeKind.dynamic(block_hours), e0R, e0S)


def _dynamic(inp: SchemeInputs, cfg: SchemeConfig, kind: SchemeKind, e0R=None, e0S=None) -> SchemeProblem:
    b = inp.battery
    n, T = inp.n, inp.T
    if e0R is None or e0S is None:
        d_r, d_s = default_partition_e0(b, n, 0.5)
        e0R = d_r if e0R is None else e0R
        e0S = d_s if e0S is None else e0S
    e0R = np.broadcast_to(np.asarray(e0R, float), (n,))
    e0S = np.broadcast_to(np.asarray(e0S, float), (n,))
    _check_e0(e0R, b.e_max, "retained partition")
    _check_e0(e0S, b.e_max, "shared partition")
    if np.any(e0R + e0S > b.e_max + 1e-9):
        raise ValidationError("partition initial energies exceed battery capacity")

    blk = block_index(inp.start, T, inp.dt, kind.block_hours)
    p = QpProblem()
    chg_r, dis_r, E_r = _add_battery(p, "_R", inp, e0R, b.e_max, b.p_chg_max, b.p_dischg_max)
    chg_s, dis_s, E_s = _add_battery(p, "_S", inp, e0S, b.e_max, b.p_chg_max, b.p_dischg_max)
    W = p.add_vars("W", (n, blk[-1] + 1), 0.0, 1.0, ("home", "block"))
    w_step = W[:, blk]
    w_soc = W[:, np.append(blk, blk[-1])]
    caps = (
        (E_r, E_s, w_soc, b.e_max),
        (chg_r, chg_s, w_step, b.p_chg_max),
        (dis_r, dis_s, w_step, b.p_dischg_max),
    )
    for ret, sha, w_idx, cap in caps:
        p.add_ineq(LinExpr.var(ret) - LinExpr.var(w_idx, cap), 0.0)
        p.add_ineq(LinExpr.var(sha) + LinExpr.var(w_idx, cap), cap)
    hinges = _partition_costs(p, inp, cfg, chg_r, dis_r, chg_s, dis_s)
    sp = SchemeProblem(p, kind, cfg, inp, (inp.start, inp.start + T), suffixes=("_R", "_S"))
    sp.hinge_blocks = hinges
    return _finish(sp)


def build_scheme(data: NeighborhoodData, kind: SchemeKind, cfg: SchemeConfig, window=None,
                 e0=None, forecast=None) -> SchemeProblem:
    """Dispatch on ``kind``.  ``e0`` is per-home kWh, or ``(e0R, e0S)`` for partitioned schemes."""
    inp = SchemeInputs.from_data(data, window, forecast)
    return build_from_inputs(inp, kind, cfg, e0)


def build_from_inputs(inp: SchemeInputs, kind: SchemeKind, cfg: SchemeConfig, e0=None) -> SchemeProblem:
    if kind.name == "individual":
        return _individual(inp, cfg, _default_e0(inp, e0), uneven=False)
    if kind.name == "uneven":
        return _individual(inp, cfg, _default_e0(inp, e0), uneven=True)
    if kind.name == "joint":
        return _joint(inp, cfg, _default_e0(inp, e0))
    e0R, e0S = (None, None) if e0 is None else e0
    if kind.name == "hybrid":
        return _hybrid(inp, cfg, kind, e0R, e0S)
    return _dynamic(inp, cfg, kind, e0R, e0S)


# --------------------------------------------------------------------------
# solutions


@dataclass
class SchemeSolution:
    kind: SchemeKind
    window: Tuple[int, int]
    dt: float
    home_ids: tuple
    b_chg: np.ndarray  # (n, T) total over partitions
    b_dischg: np.ndarray
    soc: np.ndarray  # (n, T + 1)
    meters: np.ndarray  # (n, T) physical meter incl. all battery power
    partitions: Optional[Dict[str, np.ndarray]] = None  # b_chg_R, b_dischg_R, soc_R, ..._S
    k_alloc: Optional[np.ndarray] = None  # (n,) or (n, T)
    weights: Optional[np.ndarray] = None  # (n, T) retained fraction
    objective_terms: Dict[str, float] = field(default_factory=dict)
    solver_objective: Optional[float] = None

    @property
    def objective(self) -> float:
        return float(sum(self.objective_terms.values()))

    @property
    def aggregate_meter(self) -> np.ndarray:
        return self.meters.sum(axis=0)

    def powers(self):
        """(charge, discharge) pairs for every virtual battery."""
        if self.partitions:
            return [(self.partitions[f"b_chg{s}"], self.partitions[f"b_dischg{s}"]) for s in ("_R", "_S")]
        return [(self.b_chg, self.b_dischg)]

    def throughput_kwh(self) -> float:
        return float((self.b_chg.sum() + self.b_dischg.sum()) * self.dt)

    def to_json(self, cfg: Optional[SchemeConfig] = None) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()

        out = {
            "scheme": str(self.kind),
            "window": list(self.window),
            "delta_t": self.dt,
            "config_hash": cfg.digest() if cfg is not None else None,
            "home_ids": list(self.home_ids),
            "objective_terms": dict(self.objective_terms),
            "b_chg": arr(self.b_chg),
            "b_dischg": arr(self.b_dischg),
            "soc": arr(self.soc),
            "meters": arr(self.meters),
            "k_alloc": arr(self.k_alloc),
            "weights": arr(self.weights),
        }
        if self.partitions:
            out["partitions"] = {k: arr(v) for k, v in self.partitions.items()}
        return out


def _block(p: QpProblem, x: np.ndarray, name: str) -> np.ndarray:
    if name not in p.blocks:
        raise KeyError(f"solution has no variable block {name!r}")
    return x[p.index(name)]


def decode(problem: SchemeProblem, sol: qp.QpSolution) -> SchemeSolution:
    """Extract trajectories by variable name and recompute the objective terms."""
    p, x, inp, kind = problem.qp, sol.x, problem.inputs, problem.kind
    n, T = inp.n, inp.T
    partitions = None
    weights = None
    k_alloc = None
    if kind.partitioned:
        partitions = {}
        for s in ("_R", "_S"):
            partitions[f"b_chg{s}"] = _block(p, x, f"B_chg{s}")
            partitions[f"b_dischg{s}"] = _block(p, x, f"B_dischg{s}")
            partitions[f"soc{s}"] = _block(p, x, f"E{s}")
        b_chg = partitions["b_chg_R"] + partitions["b_chg_S"]
        b_dis = partitions["b_dischg_R"] + partitions["b_dischg_S"]
        soc = partitions["soc_R"] + partitions["soc_S"]
        if kind.name == "hybrid":
            weights = np.repeat(kind.retained(n)[:, None], T, axis=1)
        else:
            blk = block_index(inp.start, T, inp.dt, kind.block_hours)
            weights = _block(p, x, "W")[:, blk]
    else:
        b_chg = _block(p, x, "B_chg")
        b_dis = _block(p, x, "B_dischg")
        soc = _block(p, x, "E")
        if kind.name == "uneven":
            k_alloc = _block(p, x, "K_alloc")
    out = SchemeSolution(
        kind=kind,
        window=problem.window,
        dt=inp.dt,
        home_ids=inp.home_ids,
        b_chg=b_chg,
        b_dischg=b_dis,
        soc=soc,
        meters=inp.base + b_chg - b_dis,
        partitions=partitions,
        k_alloc=k_alloc,
        weights=weights,
        solver_objective=sol.objective,
    )
    out.objective_terms = evaluate_terms(kind, inp, problem.cfg, out)
    return out


def evaluate_terms(kind: SchemeKind, inp: SchemeInputs, cfg: SchemeConfig,
                   sol: SchemeSolution) -> Dict[str, float]:
    """Objective terms of scheme ``kind`` evaluated at the trajectories in ``sol``.

    The trajectories may come from a different scheme (cross-evaluation) as
    long as they are feasible for ``kind``; partitioned schemes need
    ``sol.partitions``.
    """
    dt = inp.dt
    pos = lambda a: np.maximum(a, 0.0)  # noqa: E731
    if kind.partitioned:
        if not sol.partitions:
            raise ValidationError(f"{kind} terms need partitioned trajectories")
        part = sol.partitions
        retained = inp.base + part["b_chg_R"] - part["b_dischg_R"]
        shared = inp.base.sum(axis=0) + (part["b_chg_S"] - part["b_dischg_S"]).sum(axis=0)
        energy = float(np.sum(inp.home_prices * pos(retained)) * dt)
        if cfg.hybrid_shared_cost_form == "linear":
            energy += float(inp.shared_prices @ pos(shared) * dt)
        else:
            energy += float(inp.shared_prices @ pos(shared) ** 2 * dt)
        penalty = cfg.lam * float(np.sum(pos(shared - inp.k_rated) ** 2))
    elif kind.name == "joint":
        agg = (inp.base + sol.b_chg - sol.b_dischg).sum(axis=0)
        energy = float(inp.shared_prices @ pos(agg) * dt)
        penalty = cfg.lam * float(np.sum(pos(agg - inp.k_rated) ** 2))
    else:
        meter = inp.base + sol.b_chg - sol.b_dischg
        energy = float(np.sum(inp.home_prices * pos(meter)) * dt)
        if kind.name == "uneven":
            if sol.k_alloc is None:
                raise ValidationError("uneven terms need k_alloc")
            limit = np.asarray(sol.k_alloc, float)
            limit = limit[:, None] if limit.ndim == 1 else limit
        else:
            limit = inp.k_rated / inp.n
        penalty = cfg.lam * float(np.sum(pos(meter - limit) ** 2))

    if sol.partitions:
        action = sum(float(c.sum() + d.sum()) for c, d in sol.powers())
    else:
        action = float(sol.b_chg.sum() + sol.b_dischg.sum())
    aging = aging_coefficient(cfg, inp.battery, dt) * action if cfg.aging_cost_enabled else 0.0
    return {
        "energy_cost": energy,
        "transformer_penalty": penalty,
        "simultaneity_penalty": cfg.alpha * action,
        "aging_cost": aging,
    }


def solve_scheme(problem: SchemeProblem, tol: float = qp.DEFAULT_TOL,
                 max_iters: int = qp.DEFAULT_MAX_ITERS) -> Tuple[SchemeSolution, qp.QpSolution]:
    """Solve and decode; raises :class:`~vbess.exceptions.SolverError` if not optimal."""
    sol = qp.solve(problem.qp, tol=tol, max_iters=max_iters)
    if not sol.optimal:
        raise SolverError(
            f"{problem.kind} over window {problem.window}: solver status {sol.status}",
            diagnostics={"primal_res": sol.primal_residual, "dual_res": sol.dual_residual,
                         "iterations": sol.iterations},
        )
    return decode(problem, sol), sol


def hinge_gaps(problem: SchemeProblem, sol: qp.QpSolution) -> Dict[str, float]:
    """Largest ``aux - max(expr, 0)`` per epigraph block (tightness check)."""
    out = {}
    for name, (_, expr) in problem.hinge_blocks.items():
        aux = sol.x[problem.qp.index(name)]
        out[name] = float(np.max(np.abs(aux - np.maximum(expr.value(sol.x), 0.0)), initial=0.0))
    return out
