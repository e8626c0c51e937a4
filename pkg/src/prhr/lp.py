"""Bounded-variable revised simplex with dual values and Farkas certificates.

Every subproblem, dual subproblem and relaxation in the package goes through
:func:`solve_lp`.  The solver works on dense arrays and targets problems with
at most a few thousand columns.

Sign conventions
----------------
Dual values always refer to the *minimization form* of the problem (a ``max``
problem is handled as ``min -c x``).  Each constraint is read in its
"greater-or-equal" orientation: a ``<=`` row ``a x <= b`` is treated as
``-a x >= -b``.  The reported multiplier ``u_r`` belongs to that orientation,
so inequality multipliers are always non-negative and

    min-form objective  =  sum_r u_r h_r  +  sum_j rc_j * (active bound of x_j)

where ``h_r`` is ``b_r`` for ``>=``/``=`` rows and ``-b_r`` for ``<=`` rows.
For ``min -x - y  s.t. x + y <= 1`` this gives ``u = 1``.  Reduced costs are
``rc = c_min - A^T y`` with ``y`` the shadow prices (``d obj_min / d b``).

Farkas rays use the same orientation: a ray ``lam`` (non-negative on
inequality rows) proves infeasibility when
``max_{l <= x <= u} (sum_r lam_r g_r) x  <  sum_r lam_r h_r``
with ``g_r`` the oriented row.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

FEAS_TOL = 1e-7
OPT_TOL = 1e-7
ZERO_PIVOT = 1e-12
RATIO_PIVOT = 1e-9
REFACTOR_EVERY = 64

LE, EQ, GE = "<=", "=", ">="
_REL_CODE = {LE: -1, "<": -1, "le": -1, EQ: 0, "==": 0, "eq": 0, GE: 1, ">": 1, "ge": 1}
_CODE_REL = {-1: LE, 0: EQ, 1: GE}

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
UNBOUNDED = "Unbounded"


class NumericalBreakdown(RuntimeError):
    """The simplex lost numerical control (singular basis or cycling)."""


class LinearProgram:
    """Mutable LP container with a named variable registry.

    Rows are stored sparsely as ``(indices, values)`` pairs.  Variables and
    constraints can be referenced either by name or by integer position.
    """

    def __init__(self, sense: str = "min"):
        if sense not in ("min", "max"):
            raise ValueError(f"objective sense must be 'min' or 'max', got {sense!r}")
        self.sense = sense
        self.var_names: list[str] = []
        self.var_index: dict[str, int] = {}
        self._obj: list[float] = []
        self._lb: list[float] = []
        self._ub: list[float] = []
        self.con_names: list[str] = []
        self._rows: list[tuple[np.ndarray, np.ndarray]] = []
        self._rel: list[int] = []
        self._rhs: list[float] = []
        self.objective_offset = 0.0
        self._cache = None

    # ------------------------------------------------------------------ build
    def add_variable(self, name: str, lb: float = 0.0, ub: float = math.inf, obj: float = 0.0) -> int:
        if name in self.var_index:
            raise ValueError(f"duplicate variable id {name!r}")
        if lb > ub:
            raise ValueError(f"variable {name!r}: lower bound {lb} exceeds upper bound {ub}")
        if lb == math.inf or ub == -math.inf:
            raise ValueError(f"variable {name!r}: bounds ({lb}, {ub}) leave no finite value")
        idx = len(self.var_names)
        self.var_names.append(name)
        self.var_index[name] = idx
        self._obj.append(float(obj))
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._cache = None
        return idx

    def add_constraint(self, coeffs, relation: str, rhs: float, name: str | None = None) -> int:
        """Add a row.  ``coeffs`` is a mapping ``var -> coefficient`` (names or
        indices) or a pair of aligned index/value sequences."""
        if relation not in _REL_CODE:
            raise ValueError(f"unknown relation {relation!r}")
        if isinstance(coeffs, Mapping):
            acc: dict[int, float] = {}
            for key, val in coeffs.items():
                j = self._resolve(key)
                acc[j] = acc.get(j, 0.0) + float(val)
            idx = np.fromiter(acc.keys(), dtype=np.int64, count=len(acc))
            vals = np.fromiter(acc.values(), dtype=float, count=len(acc))
        else:
            idx_in, vals_in = coeffs
            idx = np.asarray(idx_in, dtype=np.int64)
            vals = np.asarray(vals_in, dtype=float)
            if idx.size and (idx.min() < 0 or idx.max() >= len(self.var_names)):
                raise KeyError("constraint references a variable outside the registry")
            if np.unique(idx).size != idx.size:
                merged: dict[int, float] = {}
                for j, v in zip(idx.tolist(), vals.tolist()):
                    merged[j] = merged.get(j, 0.0) + v
                idx = np.array(list(merged.keys()), dtype=np.int64)
                vals = np.array(list(merged.values()), dtype=float)
        keep = vals != 0.0
        idx, vals = idx[keep], vals[keep]
        if idx.size == 0:
            raise ValueError(f"constraint {name!r} has no non-zero coefficient")
        if not math.isfinite(rhs):
            raise ValueError(f"constraint {name!r} has non-finite rhs {rhs}")
        row = len(self._rows)
        self.con_names.append(name if name is not None else f"r{row}")
        self._rows.append((idx, vals))
        self._rel.append(_REL_CODE[relation])
        self._rhs.append(float(rhs))
        self._cache = None
        return row

    def set_objective(self, var, coeff: float) -> None:
        self._obj[self._resolve(var)] = float(coeff)
        self._cache = None

    def set_objective_vector(self, c, offset: float | None = None) -> None:
        c = np.asarray(c, dtype=float)
        if c.shape != (len(self.var_names),):
            raise ValueError("objective vector length does not match the variable count")
        self._obj = c.tolist()
        if offset is not None:
            self.objective_offset = float(offset)
        self._cache = None

    def set_bounds(self, var, lb: float, ub: float) -> None:
        if lb > ub:
            raise ValueError("lower bound exceeds upper bound")
        j = self._resolve(var)
        self._lb[j], self._ub[j] = float(lb), float(ub)
        self._cache = None

    def _resolve(self, key) -> int:
        if isinstance(key, (int, np.integer)):
            if not 0 <= key < len(self.var_names):
                raise KeyError(f"variable index {key} outside the registry")
            return int(key)
        try:
            return self.var_index[key]
        except KeyError:
            raise KeyError(f"variable {key!r} is not in the registry") from None

    @classmethod
    def from_arrays(cls, c, A, relations, b, lb=None, ub=None, sense="min",
                    var_names: Sequence[str] | None = None,
                    con_names: Sequence[str] | None = None) -> "LinearProgram":
        """Build directly from dense or sparse arrays (fast path for hot loops)."""
        c = np.asarray(c, dtype=float)
        n = c.size
        A = sp.csr_matrix(A, dtype=float)
        lp = cls(sense)
        lp.var_names = list(var_names) if var_names is not None else [f"x{j}" for j in range(n)]
        lp.var_index = {name: j for j, name in enumerate(lp.var_names)}
        lp._obj = c.tolist()
        lp._lb = (np.zeros(n) if lb is None else np.asarray(lb, dtype=float)).tolist()
        lp._ub = (np.full(n, math.inf) if ub is None else np.asarray(ub, dtype=float)).tolist()
        m = A.shape[0]
        lp.con_names = list(con_names) if con_names is not None else [f"r{i}" for i in range(m)]
        codes = [r if isinstance(r, (int, np.integer)) else _REL_CODE[r] for r in relations]
        for i in range(m):
            lo_, hi_ = A.indptr[i], A.indptr[i + 1]
            idx = A.indices[lo_:hi_].astype(np.int64)
            vals = A.data[lo_:hi_]
            keep = vals != 0.0
            if not keep.any():
                raise ValueError(f"constraint {lp.con_names[i]!r} has no non-zero coefficient")
            lp._rows.append((idx[keep], vals[keep]))
        lp._rel = [int(r) for r in codes]
        lp._rhs = np.asarray(b, dtype=float).tolist()
        if any(l > u for l, u in zip(lp._lb, lp._ub)):
            raise ValueError("lower bound exceeds upper bound")
        return lp

    def copy(self) -> "LinearProgram":
        other = LinearProgram(self.sense)
        other.var_names = list(self.var_names)
        other.var_index = dict(self.var_index)
        other._obj, other._lb, other._ub = list(self._obj), list(self._lb), list(self._ub)
        other.con_names = list(self.con_names)
        other._rows = list(self._rows)
        other._rel, other._rhs = list(self._rel), list(self._rhs)
        other.objective_offset = self.objective_offset
        return other

    # ----------------------------------------------------------------- access
    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    @property
    def n_cons(self) -> int:
        return len(self._rows)

    @property
    def objective_coeffs(self) -> dict[str, float]:
        return {n: c for n, c in zip(self.var_names, self._obj) if c != 0.0}

    @property
    def variable_bounds(self) -> dict[str, tuple[float, float]]:
        return {n: (l, u) for n, l, u in zip(self.var_names, self._lb, self._ub)}

    @property
    def constraints(self) -> list[tuple[dict[str, float], str, float]]:
        out = []
        for (idx, vals), rel, rhs in zip(self._rows, self._rel, self._rhs):
            row = {self.var_names[j]: float(v) for j, v in zip(idx, vals)}
            out.append((row, _CODE_REL[rel], rhs))
        return out

    def to_arrays(self):
        """Return ``(c, A, rel, b, lb, ub)`` with ``A`` in CSR form."""
        if self._cache is None:
            m, n = len(self._rows), len(self.var_names)
            if m:
                indptr = np.zeros(m + 1, dtype=np.int64)
                indptr[1:] = np.cumsum([r[0].size for r in self._rows])
                indices = np.concatenate([r[0] for r in self._rows])
                data = np.concatenate([r[1] for r in self._rows])
                A = sp.csr_matrix((data, indices, indptr), shape=(m, n))
            else:
                A = sp.csr_matrix((0, n))
            self._cache = (np.array(self._obj, dtype=float), A,
                           np.array(self._rel, dtype=np.int64), np.array(self._rhs, dtype=float),
                           np.array(self._lb, dtype=float), np.array(self._ub, dtype=float))
        return self._cache

    def dump(self) -> str:
        """Plain-text layout: objective line, one constraint per line, bounds."""
        lines = [f"{self.sense} " + " ".join(f"{v!r}*{n}" for n, v in zip(self.var_names, self._obj) if v != 0.0)]
        if self.objective_offset:
            lines[0] += f" + {self.objective_offset!r}"
        for name, (idx, vals), rel, rhs in zip(self.con_names, self._rows, self._rel, self._rhs):
            terms = " ".join(f"{v!r}*{self.var_names[j]}" for j, v in zip(idx, vals))
            lines.append(f"{name}: {terms} {_CODE_REL[rel]} {rhs!r}")
        for n, l, u in zip(self.var_names, self._lb, self._ub):
            if l != 0.0 or u != math.inf:
                lines.append(f"bound {n} {l!r} {u!r}")
        return "\n".join(lines) + "\n"


@dataclass
class LpSolution:
    status: str
    objective_value: float
    x: np.ndarray
    duals: np.ndarray
    reduced: np.ndarray
    ray: np.ndarray | None
    var_names: list[str] = field(repr=False)
    con_names: list[str] = field(repr=False)
    iterations: int = 0

    @property
    def primal(self) -> dict[str, float]:
        return dict(zip(self.var_names, self.x.tolist()))

    @property
    def dual(self) -> dict[str, float]:
        return dict(zip(self.con_names, self.duals.tolist()))

    @property
    def reduced_costs(self) -> dict[str, float]:
        return dict(zip(self.var_names, self.reduced.tolist()))

    @property
    def farkas_ray(self) -> dict[str, float] | None:
        if self.ray is None:
            return None
        return dict(zip(self.con_names, self.ray.tolist()))


# ---------------------------------------------------------------------------
# core simplex on the standard form  A x = b, 0 <= x <= u
# ---------------------------------------------------------------------------
class _Simplex:
    def __init__(self, A: np.ndarray, b: np.ndarray, ub: np.ndarray, basis: np.ndarray):
        self.A = A
        self.b = b
        self.ub = ub
        self.m, self.N = A.shape
        self.basis = basis.copy()
        self.at_upper = np.zeros(self.N, dtype=bool)
        self.is_basic = np.zeros(self.N, dtype=bool)
        self.is_basic[self.basis] = True
        self.x = np.zeros(self.N)
        self.iterations = 0
        self.refactor()

    def refactor(self) -> None:
        B = self.A[:, self.basis]
        try:
            Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError:
            raise NumericalBreakdown("basis matrix became singular") from None
        growth = np.abs(Binv).max(initial=0.0) * np.abs(B).max(initial=1.0)
        if not np.all(np.isfinite(Binv)) or growth > 1.0 / ZERO_PIVOT:
            raise NumericalBreakdown("basis matrix is numerically singular")
        self.Binv = Binv
        nonbasic_val = np.where(self.at_upper & ~self.is_basic, self.ub, 0.0)
        nonbasic_val[self.is_basic] = 0.0
        self.x = nonbasic_val
        self.x[self.basis] = Binv @ (self.b - self.A @ nonbasic_val)
        self.since_refactor = 0

    def run(self, c: np.ndarray, max_iter: int) -> str:
        """Iterate to optimality for cost ``c``; returns OPTIMAL or UNBOUNDED."""
        m, N = self.m, self.N
        bland = False
        stall = 0
        stall_limit = 3 * (m + N)
        best = c @ self.x
        movable = self.ub > 0.0
        for _ in range(max_iter):
            y = c[self.basis] @ self.Binv
            d = c - y @ self.A
            cand_lo = (~self.is_basic) & (~self.at_upper) & movable & (d < -OPT_TOL)
            cand_up = (~self.is_basic) & self.at_upper & (d > OPT_TOL)
            cand = cand_lo | cand_up
            if not cand.any():
                return OPTIMAL
            if bland:
                q = int(np.flatnonzero(cand)[0])
            else:
                score = np.where(cand, np.abs(d), -1.0)
                q = int(np.argmax(score))
            direction = -1.0 if self.at_upper[q] else 1.0
            alpha = self.Binv @ self.A[:, q]
            delta = direction * alpha
            xb = self.x[self.basis]
            ubb = self.ub[self.basis]
            t_best = self.ub[q]
            leave = -1
            dec = delta > RATIO_PIVOT
            inc = (delta < -RATIO_PIVOT) & np.isfinite(ubb)
            ratios = np.full(m, math.inf)
            ratios[dec] = np.maximum(xb[dec], 0.0) / delta[dec]
            ratios[inc] = np.maximum(ubb[inc] - xb[inc], 0.0) / (-delta[inc])
            if m:
                rmin = ratios.min()
                if rmin < t_best:
                    t_best = rmin
                    ties = np.flatnonzero(ratios <= rmin + 1e-12 * (1.0 + rmin))
                    if bland:
                        leave = int(ties[np.argmin(self.basis[ties])])
                    else:
                        leave = int(ties[np.argmax(np.abs(delta[ties]))])
            if not math.isfinite(t_best):
                return UNBOUNDED
            self.iterations += 1
            if leave < 0:
                # bound flip of the entering variable
                self.x[self.basis] = xb - t_best * delta
                self.at_upper[q] = not self.at_upper[q]
                self.x[q] = self.ub[q] if self.at_upper[q] else 0.0
            else:
                piv = alpha[leave]
                if abs(piv) < ZERO_PIVOT:
                    raise NumericalBreakdown("zero pivot encountered")
                p_old = self.basis[leave]
                self.x[self.basis] = xb - t_best * delta
                self.x[q] = (self.ub[q] - t_best) if self.at_upper[q] else t_best
                goes_up = delta[leave] < 0
                self.x[p_old] = self.ub[p_old] if goes_up else 0.0
                self.at_upper[p_old] = bool(goes_up)
                self.at_upper[q] = False
                self.is_basic[p_old] = False
                self.is_basic[q] = True
                self.basis[leave] = q
                row = self.Binv[leave] / piv
                self.Binv -= np.outer(alpha, row)
                self.Binv[leave] = row
                self.since_refactor += 1
                if self.since_refactor >= REFACTOR_EVERY:
                    self.refactor()
            obj = c @ self.x
            if obj < best - 1e-12 * (1.0 + abs(best)):
                best = obj
                stall = 0
            else:
                stall += 1
                if stall > stall_limit:
                    bland = True
        raise NumericalBreakdown(f"iteration limit {max_iter} reached without convergence")

    def duals(self, c: np.ndarray) -> np.ndarray:
        return c[self.basis] @ self.Binv


def solve_lp(problem: LinearProgram, max_iter: int | None = None) -> LpSolution:
    """Solve ``problem`` with the two-phase bounded revised simplex."""
    c, A_sp, rel, b, lb, ub = problem.to_arrays()
    A = A_sp.toarray()
    sol = _solve_arrays(c, A, rel, b, lb, ub, problem.sense, problem.var_names, problem.con_names, max_iter)
    if problem.objective_offset and sol.status == OPTIMAL:
        sol.objective_value += problem.objective_offset
    return sol


def _solve_arrays(c, A, rel, b, lb, ub, sense, var_names, con_names, max_iter=None) -> LpSolution:
    m, n = A.shape
    c_min = c if sense == "min" else -c

    # column transformation x = offset + sign * x'
    lo_fin, up_fin = np.isfinite(lb), np.isfinite(ub)
    free = ~lo_fin & ~up_fin
    sign = np.where(lo_fin | free, 1.0, -1.0)
    offset = np.where(lo_fin, lb, np.where(up_fin, ub, 0.0))
    width = np.where(lo_fin & up_fin, ub - lb, math.inf)
    free_idx = np.flatnonzero(free)
    cols = [A * sign]
    costs = [c_min * sign]
    widths = [width]
    if free_idx.size:
        cols.append(-A[:, free_idx])
        costs.append(-c_min[free_idx])
        widths.append(np.full(free_idx.size, math.inf))
    rhs = b - A @ offset

    slack_sign = np.where(rel < 0, 1.0, np.where(rel > 0, -1.0, 0.0))
    flip = np.where(rhs < 0, -1.0, 1.0)
    has_slack = rel != 0
    slack_rows = np.flatnonzero(has_slack)
    S = np.zeros((m, slack_rows.size))
    S[slack_rows, np.arange(slack_rows.size)] = slack_sign[slack_rows]
    cols.append(S)
    costs.append(np.zeros(slack_rows.size))
    widths.append(np.full(slack_rows.size, math.inf))

    Astd = np.hstack(cols) * flip[:, None]
    bstd = rhs * flip
    n_core = Astd.shape[1]
    slack_col_of_row = np.full(m, -1)
    slack_col_of_row[slack_rows] = n_core - slack_rows.size + np.arange(slack_rows.size)

    basis = np.empty(m, dtype=np.int64)
    art_rows = []
    for r in range(m):
        sc = slack_col_of_row[r]
        if sc >= 0 and Astd[r, sc] > 0:
            basis[r] = sc
        else:
            art_rows.append(r)
    n_art = len(art_rows)
    if n_art:
        Art = np.zeros((m, n_art))
        Art[art_rows, np.arange(n_art)] = 1.0
        Astd = np.hstack([Astd, Art])
        basis[art_rows] = n_core + np.arange(n_art)
    cost = np.concatenate(costs + [np.zeros(n_art)])
    ubstd = np.concatenate(widths + [np.full(n_art, math.inf)])
    N = Astd.shape[1]
    if max_iter is None:
        max_iter = 50 * (m + N) + 1000

    sx = _Simplex(Astd, bstd, ubstd, basis)
    row_sign_ge = np.where(rel < 0, -1.0, 1.0)  # orientation to ">=" form

    if n_art:
        c1 = np.zeros(N)
        c1[n_core:] = 1.0
        sx.run(c1, max_iter)
        infeas = float(sx.x[n_core:].sum())
        if infeas > FEAS_TOL:
            y1 = sx.duals(c1)
            y_orig = flip * y1
            # phase 1 maximizes y^T b over the box; ray in ">=" orientation
            ray = y_orig * row_sign_ge
            ray = np.where(rel != 0, np.maximum(ray, 0.0), ray)
            return LpSolution(INFEASIBLE, math.nan, np.full(n, math.nan), np.full(m, math.nan),
                              np.full(n, math.nan), ray, list(var_names), list(con_names), sx.iterations)
        sx.ub = sx.ub.copy()
        sx.ub[n_core:] = 0.0
        sx.at_upper[n_core:] = False

    status = sx.run(cost, max_iter)
    xs = sx.x
    x = offset + sign * xs[:n]
    if free_idx.size:
        x[free_idx] -= xs[n:n + free_idx.size]
    if status == UNBOUNDED:
        obj = -math.inf if sense == "min" else math.inf
        return LpSolution(UNBOUNDED, obj, x, np.full(m, math.nan), np.full(n, math.nan), None,
                          list(var_names), list(con_names), sx.iterations)
    y_shadow = flip * sx.duals(cost)
    duals = y_shadow * row_sign_ge
    reduced = c_min - A.T @ y_shadow
    obj = float(c @ x)
    return LpSolution(OPTIMAL, obj, x, duals, reduced, None, list(var_names), list(con_names), sx.iterations)


# ---------------------------------------------------------------------------
# certificate checking
# ---------------------------------------------------------------------------
@dataclass
class CertificateReport:
    primal_feasible: bool | None
    dual_feasible: bool | None
    complementary_slackness: bool | None
    strong_duality: bool | None
    farkas_valid: bool | None
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        checks = (self.primal_feasible, self.dual_feasible, self.complementary_slackness,
                  self.strong_duality, self.farkas_valid)
        return all(v is not False for v in checks)


def _box_max(alpha: np.ndarray, lb: np.ndarray, ub: np.ndarray, zero: float = 0.0) -> float:
    """Maximum of ``alpha @ x`` over the box; entries below ``zero`` in
    magnitude count as exact zeros (round-off in the aggregated row)."""
    total = 0.0
    for a, l, u in zip(alpha, lb, ub):
        if abs(a) <= zero:
            continue
        if a > 0:
            if not math.isfinite(u):
                return math.inf
            total += a * u
        elif a < 0:
            if not math.isfinite(l):
                return math.inf
            total += a * l
    return total


def check_certificate(problem: LinearProgram, solution: LpSolution, tol: float = 1e-6) -> CertificateReport:
    """Re-verify a solution against the problem data using only linear algebra."""
    c, A_sp, rel, b, lb, ub = problem.to_arrays()
    A = A_sp.toarray()
    orient = np.where(rel < 0, -1.0, 1.0)
    G = A * orient[:, None]
    h = b * orient
    if solution.status == INFEASIBLE:
        ray = solution.ray
        if ray is None or ray.shape != (A.shape[0],):
            return CertificateReport(None, None, None, None, False, {"reason": "missing ray"})
        signs_ok = bool(np.all(ray[rel != 0] >= -1e-12))
        alpha = ray @ G
        scale = 1.0 + float(np.abs(ray) @ np.abs(G).max(axis=1, initial=0.0))
        lhs_max = _box_max(alpha, lb, ub, zero=1e-9 * scale)
        rhs = float(ray @ h)
        margin = rhs - lhs_max
        valid = signs_ok and margin > 1e-9
        return CertificateReport(None, None, None, None, valid, {"margin": margin})
    if solution.status != OPTIMAL:
        return CertificateReport(None, None, None, None, None, {"status": solution.status})

    x = solution.x
    slack = G @ x - h  # >= 0 for inequalities, == 0 for equalities
    row_viol = np.where(rel == 0, np.abs(slack), np.maximum(-slack, 0.0))
    bound_viol = np.maximum(np.maximum(lb - x, x - ub), 0.0)
    primal_ok = bool(row_viol.max(initial=0.0) <= FEAS_TOL * 10 and bound_viol.max(initial=0.0) <= FEAS_TOL * 10)

    u = solution.duals
    c_min = c if problem.sense == "min" else -c
    rc = c_min - u @ G
    dual_sign_ok = bool(np.all(u[rel != 0] >= -tol))
    rc_ok = bool(np.all((rc <= tol) | np.isfinite(lb)) and np.all((rc >= -tol) | np.isfinite(ub)))
    dual_ok = dual_sign_ok and rc_ok

    cs_rows = np.abs(u * slack)[rel != 0]
    dist_lo = np.where(np.isfinite(lb), x - lb, math.inf)
    dist_up = np.where(np.isfinite(ub), ub - x, math.inf)
    with np.errstate(invalid="ignore"):
        cs_bounds = np.where(rc > tol, rc * dist_lo, np.where(rc < -tol, -rc * dist_up, 0.0))
    cs_ok = bool(cs_rows.max(initial=0.0) <= tol and np.nanmax(cs_bounds, initial=0.0) <= tol)

    primal_obj = float(c_min @ x)  # the constant offset cancels on both sides
    bound_term = np.where(rc > 0, rc * np.where(np.isfinite(lb), lb, 0.0),
                          rc * np.where(np.isfinite(ub), ub, 0.0))
    dual_obj = float(u @ h + bound_term.sum())
    sd_ok = abs(primal_obj - dual_obj) <= tol * (1.0 + abs(primal_obj))
    return CertificateReport(primal_ok, dual_ok, cs_ok, sd_ok, None,
                             {"primal_obj": primal_obj, "dual_obj": dual_obj,
                              "max_row_violation": float(row_viol.max(initial=0.0))})


def lp_relation(code: int) -> str:
    return _CODE_REL[code]


__all__ = [
    "LinearProgram", "LpSolution", "CertificateReport", "NumericalBreakdown",
    "solve_lp", "check_certificate", "OPTIMAL", "INFEASIBLE", "UNBOUNDED", "LE", "EQ", "GE",
]
