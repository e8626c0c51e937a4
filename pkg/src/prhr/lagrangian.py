"""Lagrangian relaxation with subgradient multiplier updates (outer loop).

The assignment rows and the regret rows are moved into the objective with
multipliers ``d2[s, t]`` and ``d1[s] >= 0``.  Each outer iteration bounds the
relaxed problem from below (by Benders, or by solving the relaxed MILP
directly for the ``classic-lr`` baseline), computes a feasible upper bound by
freezing the carry-over variables ``V`` at the relaxed solution and re-solving
the original model, and takes one projected subgradient step.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .benders import (BdReport, BendersConfig, LrpObjective, MasterPoint, Multipliers, relative_gap,
                      run_benders)
from .mip import LIMIT_REACHED, OPTIMAL, MixedIntegerProgram, solve_mip
from .lp import LinearProgram
from .model import (Layout, ModelContext, NetworkDesign, RowBuilder, _degree_rows, _link_product_rows,
                    _product_rows, evaluate_objective, linearized_risk)

log = logging.getLogger(__name__)

SIGMA0 = 2.0
EPS_LR = 0.001
ITER1_MAX = 30
TIME_MAX = 10_000.0
ZERO_NORM = 1e-12


class ZeroSubgradient(RuntimeError):
    """Every relaxed row is satisfied at the relaxed solution."""


class RestrictedInfeasible(RuntimeError):
    pass


@dataclass
class LrpModel:
    ctx: ModelContext
    d: Multipliers
    objective: LrpObjective

    def value(self, mp: MasterPoint, X: np.ndarray, gamma: float) -> float:
        """Relaxed objective at a point (``zeta``)."""
        return self.objective.value(mp, X, gamma)

    def milp(self) -> tuple[MixedIntegerProgram, Layout]:
        """The relaxed problem as one MILP: degree, carry-over and product rows kept."""
        inst = self.ctx.inst
        lay = Layout(inst.H, inst.T, inst.S)
        rb = RowBuilder()
        _degree_rows(rb, lay)
        _product_rows(rb, lay)
        _link_product_rows(rb, lay)
        o = self.objective
        c = np.zeros(lay.n)
        c[lay.Z.ravel()] = o.a_zv.ravel()
        c[lay.V.ravel()] = -o.a_zv.ravel()
        c[lay.X.ravel()] = o.c_x.ravel()
        c[lay.L.ravel()] = o.c_lq.ravel()
        c[lay.Q.ravel()] = -o.c_lq.ravel()
        c[lay.gamma] = o.c_gamma
        lb = np.zeros(lay.n)
        ub = np.ones(lay.n)
        ub[lay.X.ravel()] = np.inf
        ub[lay.gamma] = o.gamma_ub
        A, rel, rhs = rb.matrix(lay.n)
        lp = LinearProgram.from_arrays(c, A, rel, rhs, lb, ub, "min", [f"v{j}" for j in range(lay.n)], rb.names)
        lp.objective_offset = o.const
        return MixedIntegerProgram(lp, lay.binaries), lay


def build_lrp(ctx: ModelContext, d: Multipliers) -> LrpModel:
    if np.any(d.d1 < 0):
        raise ValueError("regret multipliers must be non-negative")
    return LrpModel(ctx, d, LrpObjective.build(ctx, d))


@dataclass
class LrpSolution:
    lb: float
    point: MasterPoint | None
    X: np.ndarray | None
    gamma: float
    report: BdReport | None = None
    nodes: int = 0


def solve_lrp_lower_bound(lrp: LrpModel, config: BendersConfig | None = None) -> LrpSolution:
    """Lower bound on the relaxed problem by the inner decomposition."""
    rep = run_benders(lrp.ctx, lrp.d, config, lrp.objective)
    return LrpSolution(rep.lb, rep.point, rep.X, rep.gamma, rep, rep.master_nodes)


def solve_lrp_direct(lrp: LrpModel, time_limit: float | None = None) -> LrpSolution:
    """Classical variant: the relaxed MILP handed straight to the MIP solver."""
    mip, lay = lrp.milp()
    sol = solve_mip(mip, backend="highs", rel_gap=1e-9, time_limit=time_limit)
    if sol.status not in (OPTIMAL, LIMIT_REACHED):
        raise RuntimeError(f"relaxed MILP status {sol.status}")
    x = sol.x
    r = lambda idx: np.round(x[idx])
    mp = MasterPoint(r(lay.Z), r(lay.V), r(lay.L), r(lay.Q))
    return LrpSolution(float(sol.best_bound), mp, x[lay.X], float(x[lay.gamma]), None, sol.nodes_explored)


# ---------------------------------------------------------------------------
# feasible upper bound
# ---------------------------------------------------------------------------
class FixedVCache:
    def __init__(self):
        self.store: dict[bytes, tuple[float, NetworkDesign]] = {}
        self.hits = 0


def upper_bound_by_fixing(ctx: ModelContext, V_fixed: np.ndarray, cache: FixedVCache | None = None,
                          time_limit: float | None = None) -> tuple[float, NetworkDesign, bool]:
    """Original MILP with ``V`` frozen; falls back to ``V = 0`` when the frozen
    values admit no hub plan.  Returns ``(value, design, fell_back)``."""
    V_fixed = np.round(np.asarray(V_fixed, dtype=float))
    key = V_fixed.tobytes()
    if cache is not None and key in cache.store:
        cache.hits += 1
        val, des = cache.store[key]
        return val, des, False
    fell_back = False
    sol, model = _solve_fixed(ctx, V_fixed, time_limit)
    if sol is None:
        fell_back = True
        sol, model = _solve_fixed(ctx, np.zeros_like(V_fixed), time_limit)
        if sol is None:
            raise RestrictedInfeasible("no design is consistent with the frozen carry-over values")
    design = model.design(sol.x)
    val = float(sol.objective_value)
    if cache is not None:
        cache.store[key] = (val, design)
    return val, design, fell_back


def _solve_fixed(ctx, V_fixed, time_limit):
    model = ctx.milp(fixed_V=V_fixed)
    sol = solve_mip(model.mip, backend="highs", rel_gap=1e-9, time_limit=time_limit)
    if sol.status in (OPTIMAL, LIMIT_REACHED):
        return sol, model
    return None, model


# ---------------------------------------------------------------------------
# subgradient
# ---------------------------------------------------------------------------
@dataclass
class SubgradientState:
    iteration: int = 0
    sigma: float = SIGMA0
    theta: float = 0.0
    noipr: int = 0
    best_lb: float = -math.inf
    best_ub: float = math.inf
    history: list = field(default_factory=list)   # last two multiplier vectors

    def record_lb(self, lb: float) -> None:
        """Bookkeeping of Algorithm-style step control after a new relaxed bound."""
        if lb > self.best_lb:
            self.best_lb = lb
            self.noipr = 0
        else:
            self.noipr += 1
            if self.noipr > 1:
                self.sigma /= 2.0
                self.noipr = 0

    def record_ub(self, ub: float) -> None:
        self.best_ub = min(self.best_ub, ub)


def subgradient(ctx: ModelContext, sol: LrpSolution) -> tuple[np.ndarray, np.ndarray]:
    """Violation of the relaxed rows at the relaxed solution."""
    inst = ctx.inst
    mp, X = sol.point, sol.X
    design = NetworkDesign(mp.Z, mp.V, X, mp.L, mp.Q, sol.gamma)
    g1 = (linearized_risk(design, inst) - ctx.best.psi_star - sol.gamma) / ctx.regret_unit
    g2 = 1.0 - X.sum(axis=(0, 1))
    return g1, g2


def subgradient_step(state: SubgradientState, g1: np.ndarray, g2: np.ndarray, d: Multipliers,
                     lb_bd: float, free_d2: bool = False) -> tuple[Multipliers, SubgradientState]:
    norm_sq = float(g1 @ g1 + np.sum(g2 * g2))
    if norm_sq < ZERO_NORM:
        raise ZeroSubgradient("relaxed rows are all satisfied")
    if not (math.isfinite(state.best_ub) and math.isfinite(lb_bd)):
        raise ValueError("step size needs finite bounds")
    state.theta = state.sigma * (state.best_ub - lb_bd) / norm_sq
    d1 = np.maximum(0.0, d.d1 + state.theta * g1)
    d2 = d.d2 + state.theta * g2
    if not free_d2:
        d2 = np.maximum(0.0, d2)
    new = Multipliers(d1, d2)
    state.history = (state.history + [d.copy()])[-2:]
    state.iteration += 1
    return new, state


# ---------------------------------------------------------------------------
# outer loop
# ---------------------------------------------------------------------------
@dataclass
class LagrangianConfig:
    strategy: str = "mpbd"          # sbd | mbd | pbd | mpbd | classic-lr
    eps_lr: float = EPS_LR
    iter1_max: int = ITER1_MAX
    time_max: float = TIME_MAX
    sigma0: float = SIGMA0
    free_d2: bool = False
    benders: BendersConfig = field(default_factory=BendersConfig)
    gap_tol: float = 1e-6

    def __post_init__(self):
        if not (self.eps_lr > 0 and self.sigma0 > 0 and self.iter1_max >= 1 and self.time_max > 0):
            raise ValueError("tolerances, caps and budgets must be positive")
        if self.strategy != "classic-lr":
            self.benders = BendersConfig(**{**self.benders.__dict__, "strategy": self.strategy})


@dataclass
class LrReport:
    strategy: str
    lb: float
    ub: float
    gap: float
    iterations: int
    design: NetworkDesign | None
    multipliers: Multipliers
    trace: list[dict]
    inner_traces: list[dict]
    stop_reason: str
    wall: float
    cuts: int = 0
    lp_solves: int = 0
    mip_nodes: int = 0
    limit_reached: bool = False


def run_lagrangian(ctx: ModelContext, config: LagrangianConfig | None = None) -> LrReport:
    cfg = config or LagrangianConfig()
    inst = ctx.inst
    start = time.monotonic()
    d = Multipliers.zeros(inst.S, inst.T)
    state = SubgradientState(sigma=cfg.sigma0)
    cache = FixedVCache()
    trace, inner = [], []
    design = None
    stop = "iteration cap"
    cuts = lp_solves = nodes = 0
    it = 0
    while it < cfg.iter1_max:
        it += 1
        remaining = cfg.time_max - (time.monotonic() - start)
        lrp = build_lrp(ctx, d)
        if cfg.strategy == "classic-lr":
            sol = solve_lrp_direct(lrp, time_limit=max(remaining, 1.0))
        else:
            bcfg = BendersConfig(**{**cfg.benders.__dict__, "time_limit": max(remaining, 1.0)})
            sol = solve_lrp_lower_bound(lrp, bcfg)
            rep = sol.report
            cuts += rep.cuts
            lp_solves += rep.lp_solves
            for row in rep.trace:
                inner.append({"it_LR": it, **row})
        nodes += sol.nodes
        lb_bd = sol.lb
        state.record_lb(lb_bd)
        if sol.point is not None:
            ub, cand, _ = upper_bound_by_fixing(ctx, sol.point.V, cache)
            if ub < state.best_ub:
                design = cand
            state.record_ub(ub)
        elif design is None:
            ub, design, _ = upper_bound_by_fixing(ctx, np.zeros((inst.H, inst.T)), cache)
            state.record_ub(ub)
        row = {"it_LR": it, "LB_BD": lb_bd, "LB_LR": state.best_lb, "UB_LR": state.best_ub,
               "sigma": state.sigma, "theta": math.nan, "norm_sq": math.nan,
               "wall_ms": 1000.0 * (time.monotonic() - start)}
        trace.append(row)
        if relative_gap(state.best_ub, state.best_lb) <= cfg.gap_tol:
            stop = "gap closed"
            break
        if state.sigma < cfg.eps_lr:
            stop = "step parameter below tolerance"
            break
        if time.monotonic() - start > cfg.time_max:
            stop = "time budget"
            break
        if sol.point is None:
            stop = "no relaxed point to price"
            break
        g1, g2 = subgradient(ctx, sol)
        try:
            d, state = subgradient_step(state, g1, g2, d, lb_bd, cfg.free_d2)
        except ZeroSubgradient:
            # the relaxed point satisfies every priced-out row: it is feasible
            mp = sol.point
            feasible = NetworkDesign(mp.Z, mp.V, sol.X, mp.L, mp.Q, sol.gamma)
            val = evaluate_objective(feasible, inst, ctx.scaling)
            if val < state.best_ub:
                design = feasible
            state.record_ub(val)
            row["UB_LR"] = state.best_ub
            stop = "zero subgradient"
            break
        row["theta"] = state.theta
        row["norm_sq"] = float(g1 @ g1 + np.sum(g2 * g2))
    return LrReport(cfg.strategy, state.best_lb, state.best_ub, relative_gap(state.best_ub, state.best_lb), it,
                    design, d, trace, inner, stop, time.monotonic() - start, cuts, lp_solves, nodes,
                    stop == "time budget")


__all__ = ["LrpModel", "LrpSolution", "SubgradientState", "LagrangianConfig", "LrReport", "ZeroSubgradient",
           "RestrictedInfeasible", "FixedVCache", "build_lrp", "solve_lrp_lower_bound", "solve_lrp_direct",
           "upper_bound_by_fixing", "subgradient", "subgradient_step", "run_lagrangian"]
