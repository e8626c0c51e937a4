"""Branch-and-bound over binary variables and an exhaustive enumeration oracle.

``solve_mip`` defaults to an in-house best-first branch and bound whose node
relaxations go through :mod:`prhr.lp`.  Larger models (Benders masters, the
full linearized MILP at desk scale) can be routed to scipy's HiGHS wrapper
with ``backend="highs"``; ``"auto"`` picks by problem size.
"""
from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .lp import INFEASIBLE, OPTIMAL, UNBOUNDED, LinearProgram, _solve_arrays

INT_TOL = 1e-6
ENUM_CAP = 24
AUTO_BNB_MAX_BINARIES = 16

LIMIT_REACHED = "LimitReached"


class NoIncumbentFound(RuntimeError):
    """The search budget ran out before any integral feasible point was seen."""


class TooManyBinaries(ValueError):
    pass


class MixedIntegerProgram:
    """A :class:`LinearProgram` plus the set of variables restricted to {0,1}."""

    def __init__(self, base: LinearProgram, binary_ids: Iterable):
        self.base = base
        idx = sorted({base._resolve(b) for b in binary_ids})
        lb, ub = base._lb, base._ub
        for j in idx:
            if lb[j] < 0.0 or ub[j] > 1.0 or lb[j] not in (0.0, 1.0) or ub[j] not in (0.0, 1.0):
                raise ValueError(f"binary variable {base.var_names[j]!r} must have bounds within [0, 1]")
        self.binary_idx = np.array(idx, dtype=np.int64)

    @property
    def binary_ids(self) -> set[str]:
        return {self.base.var_names[j] for j in self.binary_idx}


@dataclass
class MipSolution:
    status: str
    objective_value: float
    best_bound: float
    x: np.ndarray
    var_names: list[str] = field(repr=False)
    nodes_explored: int = 0
    bound_trace: list[float] = field(default_factory=list, repr=False)
    backend: str = "bnb"

    @property
    def incumbent(self) -> dict[str, float]:
        return dict(zip(self.var_names, self.x.tolist()))

    def value(self, name: str) -> float:
        return float(self.x[self.var_names.index(name)])


def _round_binaries(x: np.ndarray, bins: np.ndarray) -> np.ndarray:
    x = x.copy()
    x[bins] = np.round(x[bins])
    return x


def solve_mip(problem: MixedIntegerProgram, node_limit: int = 200_000, time_limit: float | None = None,
              rel_gap: float = 1e-6, backend: str = "bnb") -> MipSolution:
    """Solve a binary MIP.  Status ``Optimal`` means the relative gap is at most
    ``rel_gap``; ``LimitReached`` returns the incumbent and bound found so far."""
    if backend == "auto":
        small = problem.binary_idx.size <= AUTO_BNB_MAX_BINARIES and problem.base.n_vars <= 120
        backend = "bnb" if small else "highs"
    if backend == "highs":
        return _solve_highs(problem, node_limit, time_limit, rel_gap)
    if backend != "bnb":
        raise ValueError(f"unknown backend {backend!r}")
    return _solve_bnb(problem, node_limit, time_limit, rel_gap)


def _solve_bnb(problem, node_limit, time_limit, rel_gap) -> MipSolution:
    lp = problem.base
    c, A_sp, rel, b, lb0, ub0 = lp.to_arrays()
    A = A_sp.toarray()
    sense_sign = 1.0 if lp.sense == "min" else -1.0
    bins = problem.binary_idx
    start = time.monotonic()

    def relax(lb, ub):
        return _solve_arrays(c, A, rel, b, lb, ub, lp.sense, lp.var_names, lp.con_names)

    best_val = math.inf          # min-form
    best_x = None
    trace: list[float] = []
    heap: list = []
    counter = 0
    nodes = 0

    root = relax(lb0, ub0)
    if root.status == UNBOUNDED:
        raise ValueError("the continuous relaxation is unbounded; the MIP has no finite optimum")
    if root.status == OPTIMAL:
        heapq.heappush(heap, (sense_sign * root.objective_value, counter, lb0.copy(), ub0.copy(), root))
        counter += 1
    limit_hit = False
    closing_bound = math.inf
    while heap:
        bound, _, lb, ub, sol = heapq.heappop(heap)
        gap_abs = rel_gap * max(1.0, abs(best_val)) if best_val < math.inf else 0.0
        if bound >= best_val - gap_abs:
            closing_bound = bound
            heap.clear()
            break
        trace.append(bound)
        nodes += 1
        xb = sol.x[bins]
        frac = np.abs(xb - np.round(xb))
        if frac.max(initial=0.0) <= INT_TOL:
            if bound < best_val:
                best_val, best_x = bound, _round_binaries(sol.x, bins)
            continue
        k = int(np.argmax(np.minimum(xb - np.floor(xb), np.ceil(xb) - xb)))
        j = bins[k]
        for val in (0.0, 1.0):
            clb, cub = lb.copy(), ub.copy()
            clb[j] = cub[j] = val
            child = relax(clb, cub)
            if child.status != OPTIMAL:
                continue
            cb = max(bound, sense_sign * child.objective_value)
            if cb < best_val - (rel_gap * max(1.0, abs(best_val)) if best_val < math.inf else 0.0):
                heapq.heappush(heap, (cb, counter, clb, cub, child))
                counter += 1
        if nodes >= node_limit or (time_limit is not None and time.monotonic() - start > time_limit):
            limit_hit = bool(heap)
            break

    if best_x is None:
        if limit_hit:
            raise NoIncumbentFound(f"no integral point after {nodes} nodes")
        return MipSolution(INFEASIBLE, math.nan, math.nan, np.full(lp.n_vars, math.nan), list(lp.var_names),
                           nodes, trace)
    if limit_hit:
        global_bound = min(min(h[0] for h in heap), best_val)
        status = LIMIT_REACHED
    else:
        global_bound = min(best_val, closing_bound)
        status = OPTIMAL
    off = lp.objective_offset
    obj = float(c @ best_x) + off
    return MipSolution(status, obj, sense_sign * global_bound + off, best_x, list(lp.var_names), nodes,
                       [sense_sign * v + off for v in trace])


def _solve_highs(problem, node_limit, time_limit, rel_gap) -> MipSolution:
    from scipy.optimize import Bounds, LinearConstraint, milp

    lp = problem.base
    c, A, rel, b, lb, ub = lp.to_arrays()
    sense_sign = 1.0 if lp.sense == "min" else -1.0
    row_lo = np.where(rel < 0, -np.inf, b)
    row_hi = np.where(rel > 0, np.inf, b)
    integrality = np.zeros(lp.n_vars)
    integrality[problem.binary_idx] = 1
    options = {"disp": False, "mip_rel_gap": rel_gap, "node_limit": int(node_limit)}
    if time_limit is not None:
        options["time_limit"] = float(time_limit)
    cons = [LinearConstraint(A, row_lo, row_hi)] if A.shape[0] else []
    res = milp(sense_sign * c, constraints=cons, integrality=integrality,
               bounds=Bounds(lb, ub), options=options)
    if res.status == 2:
        # presolve occasionally declares tightly capped models infeasible;
        # confirm the verdict on the unreduced model before trusting it
        res = milp(sense_sign * c, constraints=cons, integrality=integrality,
                   bounds=Bounds(lb, ub), options={**options, "presolve": False})
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    if res.status == 2:
        return MipSolution(INFEASIBLE, math.nan, math.nan, np.full(lp.n_vars, math.nan), list(lp.var_names),
                           nodes, backend="highs")
    if res.status == 3:
        raise ValueError("the continuous relaxation is unbounded; the MIP has no finite optimum")
    if res.x is None:
        raise NoIncumbentFound(f"HiGHS stopped without an incumbent: {res.message}")
    x = _round_binaries(np.asarray(res.x, dtype=float), problem.binary_idx)
    raw = float(c @ x)
    dual_bound = getattr(res, "mip_dual_bound", None)
    if dual_bound is None or not np.isfinite(dual_bound):
        dual_bound = sense_sign * raw
    best_bound = sense_sign * min(float(dual_bound), sense_sign * raw) + lp.objective_offset
    obj = raw + lp.objective_offset
    status = OPTIMAL if res.status == 0 else LIMIT_REACHED
    return MipSolution(status, obj, best_bound, x, list(lp.var_names), nodes, backend="highs")


def enumerate_binary_optimum(problem: MixedIntegerProgram, chunk: int = 1 << 15) -> MipSolution:
    """Exact optimum by trying every binary assignment in lexicographic order.

    Rows that involve only binaries are screened in vectorized chunks; each
    surviving assignment gets its continuous remainder solved by the simplex.
    Ties keep the lexicographically smallest binary vector.
    """
    lp = problem.base
    bins = problem.binary_idx
    k = bins.size
    if k > ENUM_CAP:
        raise TooManyBinaries(f"{k} binaries exceed the enumeration cap of {ENUM_CAP}")
    c, A_sp, rel, b, lb, ub = lp.to_arrays()
    A = A_sp.toarray()
    n = lp.n_vars
    sense_sign = 1.0 if lp.sense == "min" else -1.0
    cmin = sense_sign * c
    is_bin = np.zeros(n, dtype=bool)
    is_bin[bins] = True
    cont = np.flatnonzero(~is_bin)
    A_B = A[:, bins]
    A_C = A[:, cont]
    pure = ~np.any(A_C != 0.0, axis=1)
    mixed = ~pure
    lbB, ubB = lb[bins], ub[bins]
    shifts = np.arange(k - 1, -1, -1, dtype=np.int64)
    tol = 1e-9

    best_val = math.inf
    best_x = None
    explored = 0
    rows_m = np.flatnonzero(mixed)
    for startv in range(0, 1 << k, chunk):
        codes = np.arange(startv, min(startv + chunk, 1 << k), dtype=np.int64)
        bits = ((codes[:, None] >> shifts[None, :]) & 1).astype(float)
        ok = np.all((bits >= lbB - tol) & (bits <= ubB + tol), axis=1)
        if pure.any():
            vals = bits @ A_B[pure].T
            bp, rp = b[pure], rel[pure]
            ok &= np.all(np.where(rp < 0, vals <= bp + tol,
                                  np.where(rp > 0, vals >= bp - tol, np.abs(vals - bp) <= tol)),
                         axis=1)
        for row in np.flatnonzero(ok):
            explored += 1
            xb = bits[row]
            if cont.size == 0:
                if rows_m.size:
                    raise AssertionError("mixed rows without continuous variables")
                val = float(cmin[bins] @ xb)
                xfull = np.zeros(n)
                xfull[bins] = xb
            else:
                if rows_m.size:
                    rhs = b[rows_m] - A_B[rows_m] @ xb
                    sub = _solve_arrays(cmin[cont], A_C[rows_m], rel[rows_m], rhs, lb[cont], ub[cont], "min",
                                        [lp.var_names[j] for j in cont], [lp.con_names[i] for i in rows_m])
                    if sub.status == INFEASIBLE:
                        continue
                    if sub.status == UNBOUNDED:
                        raise ValueError("continuous remainder unbounded for some assignment")
                    xc = sub.x
                else:
                    xc = np.where(cmin[cont] >= 0, lb[cont], ub[cont])
                    if not np.all(np.isfinite(xc)):
                        raise ValueError("continuous remainder unbounded for some assignment")
                xfull = np.zeros(n)
                xfull[bins] = xb
                xfull[cont] = xc
                val = float(cmin @ xfull)
            if val < best_val - 1e-9 * (1.0 + abs(best_val) if best_val < math.inf else 1.0):
                best_val, best_x = val, xfull
    if best_x is None:
        return MipSolution(INFEASIBLE, math.nan, math.nan, np.full(n, math.nan), list(lp.var_names), explored,
                           backend="enumeration")
    obj = float(c @ best_x) + lp.objective_offset
    return MipSolution(OPTIMAL, obj, obj, best_x, list(lp.var_names), explored, backend="enumeration")


__all__ = ["MixedIntegerProgram", "MipSolution", "solve_mip", "enumerate_binary_optimum",
           "NoIncumbentFound", "TooManyBinaries", "LIMIT_REACHED"]
