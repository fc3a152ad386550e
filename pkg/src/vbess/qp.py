"""Convex QP model with diagonal quadratic cost, plus epigraph helpers and a solver wrapper.

Problems have the form::

    minimize    sum_j quad_diag[j] * x[j]**2 + lin_cost @ x
    subject to  eq_matrix @ x == eq_rhs
                ineq_matrix @ x <= ineq_rhs
                lb <= x <= ub

Variables are created in named blocks so callers can decode solutions by
meaning (``"B_chg[home=2][t=17]"``) rather than by column position.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import clarabel
import numpy as np
import scipy.sparse as sp

from .exceptions import ValidationError

ArrayLike = Union[float, Sequence[float], np.ndarray]

OPTIMAL = "optimal"
MAX_ITERS = "max_iters"
INFEASIBLE = "infeasible"

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITERS = 200_000


class LinExpr:
    """A batch of ``size`` affine expressions ``A @ x + const``.

    Coefficients are held as COO triplets; duplicates are summed when the
    expression is materialized, so ``+`` is just concatenation.
    """

    __slots__ = ("rows", "cols", "vals", "const")

    def __init__(self, rows, cols, vals, const):
        self.rows = np.asarray(rows, dtype=np.int64)
        self.cols = np.asarray(cols, dtype=np.int64)
        self.vals = np.asarray(vals, dtype=float)
        self.const = np.atleast_1d(np.asarray(const, dtype=float)).copy()

    @classmethod
    def var(cls, idx, coef: ArrayLike = 1.0) -> "LinExpr":
        """Row ``k`` is ``coef[k] * x[idx[k]]``."""
        idx = np.asarray(idx, dtype=np.int64).ravel()
        coef = np.broadcast_to(np.asarray(coef, dtype=float).ravel() if np.ndim(coef) else coef, idx.shape)
        return cls(np.arange(idx.size), idx, coef, np.zeros(idx.size))

    @classmethod
    def constant(cls, values) -> "LinExpr":
        values = np.atleast_1d(np.asarray(values, dtype=float))
        empty = np.zeros(0, dtype=np.int64)
        return cls(empty, empty, np.zeros(0), values)

    @classmethod
    def sum_rows(cls, idx: np.ndarray, coef: float = 1.0) -> "LinExpr":
        """Column sums of a (k, m) index array: row ``t`` is ``coef * sum_k x[idx[k, t]]``."""
        idx = np.asarray(idx, dtype=np.int64)
        k, m = idx.shape
        rows = np.tile(np.arange(m), k)
        return cls(rows, idx.ravel(), np.full(idx.size, float(coef)), np.zeros(m))

    @property
    def size(self) -> int:
        return self.const.size

    def _check(self, other: "LinExpr"):
        if other.size != self.size:
            raise ValueError(f"size mismatch: {self.size} vs {other.size}")

    def __add__(self, other):
        if isinstance(other, LinExpr):
            self._check(other)
            return LinExpr(
                np.concatenate([self.rows, other.rows]),
                np.concatenate([self.cols, other.cols]),
                np.concatenate([self.vals, other.vals]),
                self.const + other.const,
            )
        return LinExpr(self.rows, self.cols, self.vals, self.const + np.asarray(other, dtype=float))

    __radd__ = __add__

    def __neg__(self):
        return LinExpr(self.rows, self.cols, -self.vals, -self.const)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scale):
        scale = np.asarray(scale, dtype=float)
        if scale.ndim == 0:
            return LinExpr(self.rows, self.cols, self.vals * scale, self.const * scale)
        scale = np.broadcast_to(scale.ravel(), self.const.shape)
        return LinExpr(self.rows, self.cols, self.vals * scale[self.rows], self.const * scale)

    __rmul__ = __mul__

    def matrix(self, num_vars: int) -> sp.csr_matrix:
        return sp.csr_matrix((self.vals, (self.rows, self.cols)), shape=(self.size, num_vars))

    def value(self, x: np.ndarray) -> np.ndarray:
        out = self.const.copy()
        np.add.at(out, self.rows, self.vals * np.asarray(x)[self.cols])
        return out


@dataclass
class _Block:
    start: int
    shape: Tuple[int, ...]
    dims: Tuple[str, ...]

    @property
    def indices(self) -> np.ndarray:
        n = int(np.prod(self.shape)) if self.shape else 1
        return (self.start + np.arange(n)).reshape(self.shape)


class QpProblem:
    """Incrementally built convex QP with named variable blocks."""

    def __init__(self):
        self.num_vars = 0
        self._lb: List[np.ndarray] = []
        self._ub: List[np.ndarray] = []
        self._quad: List[Tuple[np.ndarray, np.ndarray]] = []
        self._lin: List[Tuple[np.ndarray, np.ndarray]] = []
        self._eq: List[Tuple[LinExpr, np.ndarray]] = []
        self._ineq: List[Tuple[LinExpr, np.ndarray]] = []
        self.blocks: Dict[str, _Block] = {}
        self.labels: Dict[str, str] = {}

    # -- variables --------------------------------------------------------

    def add_vars(self, name: str, shape=(), lb: ArrayLike = -np.inf, ub: ArrayLike = np.inf,
                 dims: Optional[Sequence[str]] = None) -> np.ndarray:
        """Create a block of variables and return their column indices (shaped like ``shape``)."""
        if name in self.blocks:
            raise ValueError(f"variable block {name!r} already exists")
        shape = tuple(int(s) for s in np.atleast_1d(shape)) if np.ndim(shape) or shape != () else ()
        count = int(np.prod(shape)) if shape else 1
        dims = tuple(dims) if dims is not None else tuple(f"d{k}" for k in range(len(shape)))
        if len(dims) != len(shape):
            raise ValueError("dims must match shape")
        block = _Block(self.num_vars, shape, dims)
        self.blocks[name] = block
        self.num_vars += count
        self._lb.append(np.broadcast_to(np.asarray(lb, dtype=float), shape).ravel().copy())
        self._ub.append(np.broadcast_to(np.asarray(ub, dtype=float), shape).ravel().copy())
        if np.any(self._lb[-1] > self._ub[-1]):
            raise ValidationError(f"block {name!r} has lb > ub")
        return block.indices

    def index(self, name: str) -> np.ndarray:
        return self.blocks[name].indices

    def var_name(self, col: int) -> str:
        for name, block in self.blocks.items():
            n = int(np.prod(block.shape)) if block.shape else 1
            if block.start <= col < block.start + n:
                if not block.shape:
                    return name
                pos = np.unravel_index(col - block.start, block.shape)
                return name + "".join(f"[{d}={p}]" for d, p in zip(block.dims, pos))
        raise KeyError(col)

    @property
    def var_names(self) -> Dict[str, int]:
        """Semantic name -> column index for every variable."""
        return {self.var_name(c): c for c in range(self.num_vars)}

    @property
    def lb(self) -> np.ndarray:
        return np.concatenate(self._lb) if self._lb else np.zeros(0)

    @property
    def ub(self) -> np.ndarray:
        return np.concatenate(self._ub) if self._ub else np.zeros(0)

    # -- costs and constraints ------------------------------------------

    def add_linear_cost(self, idx, coef: ArrayLike):
        idx = np.asarray(idx, dtype=np.int64).ravel()
        self._lin.append((idx, np.broadcast_to(np.asarray(coef, dtype=float).ravel()
                                               if np.ndim(coef) else coef, idx.shape).copy()))

    def add_quad_cost(self, idx, coef: ArrayLike):
        idx = np.asarray(idx, dtype=np.int64).ravel()
        coef = np.broadcast_to(np.asarray(coef, dtype=float).ravel() if np.ndim(coef) else coef,
                               idx.shape).copy()
        if np.any(coef < 0):
            raise ValidationError("quadratic coefficients must be >= 0 (convexity)")
        self._quad.append((idx, coef))

    def add_eq(self, expr: LinExpr, rhs: ArrayLike = 0.0):
        """Constrain ``expr == rhs`` row-wise."""
        rhs = np.broadcast_to(np.asarray(rhs, dtype=float), (expr.size,))
        self._eq.append((expr, rhs - expr.const))

    def add_ineq(self, expr: LinExpr, ub: ArrayLike = 0.0):
        """Constrain ``expr <= ub`` row-wise."""
        ub = np.broadcast_to(np.asarray(ub, dtype=float), (expr.size,))
        self._ineq.append((expr, ub - expr.const))

    # -- assembled views ---------------------------------------------------

    @property
    def quad_diag(self) -> np.ndarray:
        out = np.zeros(self.num_vars)
        for idx, coef in self._quad:
            np.add.at(out, idx, coef)
        return out

    @property
    def lin_cost(self) -> np.ndarray:
        out = np.zeros(self.num_vars)
        for idx, coef in self._lin:
            np.add.at(out, idx, coef)
        return out

    def _stack(self, parts):
        if not parts:
            return sp.csr_matrix((0, self.num_vars)), np.zeros(0)
        mats = [e.matrix(self.num_vars) for e, _ in parts]
        return sp.vstack(mats, format="csr"), np.concatenate([r for _, r in parts])

    @property
    def eq(self) -> Tuple[sp.csr_matrix, np.ndarray]:
        return self._stack(self._eq)

    @property
    def ineq(self) -> Tuple[sp.csr_matrix, np.ndarray]:
        return self._stack(self._ineq)

    def objective(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(self.quad_diag @ (x * x) + self.lin_cost @ x)

    def constraint_violation(self, x: np.ndarray) -> float:
        """Largest violation over all constraint rows and variable bounds."""
        x = np.asarray(x, dtype=float)
        worst = 0.0
        G, d = self.eq
        if G.shape[0]:
            worst = max(worst, float(np.max(np.abs(G @ x - d))))
        A, b = self.ineq
        if A.shape[0]:
            worst = max(worst, float(np.max(A @ x - b, initial=0.0)))
        if self.num_vars:
            worst = max(worst, float(np.max(self.lb - x, initial=0.0)),
                        float(np.max(x - self.ub, initial=0.0)))
        return worst

    def copy(self) -> "QpProblem":
        new = QpProblem()
        new.num_vars = self.num_vars
        new._lb = [a.copy() for a in self._lb]
        new._ub = [a.copy() for a in self._ub]
        new._quad = list(self._quad)
        new._lin = list(self._lin)
        new._eq = list(self._eq)
        new._ineq = list(self._ineq)
        new.blocks = dict(self.blocks)
        new.labels = dict(self.labels)
        return new

    def dump(self, path) -> None:
        """Write a human-readable listing of the problem (debug aid, format not stable)."""
        q, P = self.lin_cost, self.quad_diag
        lb, ub = self.lb, self.ub
        with open(path, "w") as fh:
            fh.write(f"# vars={self.num_vars}\n")
            for c in range(self.num_vars):
                fh.write(f"var {self.var_name(c)} lb={lb[c]:g} ub={ub[c]:g} "
                         f"quad={P[c]:g} lin={q[c]:g}\n")
            for tag, (M, r) in (("eq", self.eq), ("le", self.ineq)):
                M = M.tocsr()
                for i in range(M.shape[0]):
                    lo, hi = M.indptr[i], M.indptr[i + 1]
                    terms = " ".join(f"{v:+g}*x{j}" for j, v in zip(M.indices[lo:hi], M.data[lo:hi]))
                    fh.write(f"{tag} {terms} {'==' if tag == 'eq' else '<='} {r[i]:g}\n")


def _weights(weight: ArrayLike, size: int) -> np.ndarray:
    w = np.broadcast_to(np.asarray(weight, dtype=float), (size,)) if np.ndim(weight) == 0 \
        else np.asarray(weight, dtype=float).ravel()
    if w.shape != (size,):
        raise ValueError(f"weight has {w.size} entries for {size} expressions")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValidationError("hinge weights must be finite and >= 0")
    return w


def add_hinge_cost(p: QpProblem, expr: LinExpr, weight: ArrayLike, name: str = "hinge") -> np.ndarray:
    """Add ``weight * max(expr, 0)`` through an epigraph variable ``u >= max(expr, 0)``.

    Returns the auxiliary indices, one per expression row.
    """
    w = _weights(weight, expr.size)
    u = p.add_vars(name, (expr.size,), lb=0.0, dims=("row",))
    p.add_ineq(expr - LinExpr.var(u), 0.0)
    p.add_linear_cost(u, w)
    return u


def add_squared_hinge_cost(p: QpProblem, expr: LinExpr, weight: ArrayLike,
                           name: str = "sq_hinge") -> np.ndarray:
    """Add ``weight * max(expr, 0)**2`` through ``s >= max(expr, 0)`` and a diagonal quadratic."""
    w = _weights(weight, expr.size)
    s = p.add_vars(name, (expr.size,), lb=0.0, dims=("row",))
    p.add_ineq(expr - LinExpr.var(s), 0.0)
    p.add_quad_cost(s, w)
    return s


@dataclass
class QpSolution:
    x: np.ndarray
    objective: float
    primal_residual: float
    dual_residual: float
    status: str
    iterations: int = 0
    wall_ms: float = 0.0
    duals: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def _assemble(p: QpProblem):
    """Stack everything into Clarabel's ``Ax + s = b`` form.

    Returns (P, q, A, b, cones, n_zero) with the zero-cone rows first.
    """
    n = p.num_vars
    G, d = p.eq
    A_in, b_in = p.ineq
    lb, ub = p.lb, p.ub
    fixed = np.flatnonzero(np.isfinite(lb) & (lb == ub))
    has_ub = np.flatnonzero(np.isfinite(ub) & ~(lb == ub))
    has_lb = np.flatnonzero(np.isfinite(lb) & ~(lb == ub))
    eye = sp.identity(n, format="csr")

    A = sp.vstack([G, eye[fixed], A_in, eye[has_ub], -eye[has_lb]], format="csc")
    b = np.concatenate([d, lb[fixed], b_in, ub[has_ub], -lb[has_lb]])
    n_zero = G.shape[0] + fixed.size
    P = sp.diags(2.0 * p.quad_diag, format="csc")
    return P, p.lin_cost, A, b, n_zero


def kkt_residuals(p: QpProblem, x: np.ndarray, z: Optional[np.ndarray]) -> Tuple[float, float]:
    """Infinity-norm primal and dual residuals of ``x`` with multipliers ``z``.

    ``z`` is ordered like the stacked constraint matrix from ``_assemble``.
    """
    P, q, A, b, n_zero = _assemble(p)
    primal = p.constraint_violation(x)
    if z is None:
        return primal, float("inf")
    grad = P @ x + q + A.T @ z
    dual = float(np.max(np.abs(grad), initial=0.0))
    return primal, dual


def solve(p: QpProblem, tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS) -> QpSolution:
    """Solve ``p`` to KKT residuals below ``tol`` (infinity norm, absolute).

    The interior-point backend is deterministic for a fixed problem, so
    identical problems give bit-identical solutions.
    """
    if np.any(p.quad_diag < 0):
        raise ValidationError("problem is not convex: negative quadratic coefficient")
    t0 = time.perf_counter()
    P, q, A, b, n_zero = _assemble(p)
    cones = []
    if n_zero:
        cones.append(clarabel.ZeroConeT(n_zero))
    if A.shape[0] - n_zero:
        cones.append(clarabel.NonnegativeConeT(A.shape[0] - n_zero))

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = int(min(max_iters, 2**31 - 1))
    inner = min(1e-11, tol * 1e-5)
    settings.tol_gap_abs = inner
    settings.tol_gap_rel = inner
    settings.tol_feas = inner
    settings.tol_ktratio = 1e-7
    settings.direct_solve_method = "qdldl"

    solver = clarabel.DefaultSolver(P.tocsc(), np.asarray(q, float), A.tocsc(), np.asarray(b, float),
                                    cones, settings)
    res = solver.solve()
    x = np.asarray(res.x, dtype=float)
    z = np.asarray(res.z, dtype=float)
    status_name = str(res.status).split(".")[-1]

    primal, dual = kkt_residuals(p, x, z)
    if status_name in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        status = INFEASIBLE
    elif primal <= tol and dual <= tol and status_name in ("Solved", "AlmostSolved"):
        status = OPTIMAL
    else:
        status = MAX_ITERS
    return QpSolution(
        x=x,
        objective=p.objective(x),
        primal_residual=primal,
        dual_residual=dual,
        status=status,
        iterations=int(res.iterations),
        wall_ms=1000.0 * (time.perf_counter() - t0),
        duals=z,
    )
