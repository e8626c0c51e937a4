"""Study drivers behind the command line: single solves, strategy comparisons,
the SAA grid sweep and the failure comparison against the risk-free model.

Each driver returns plain dataclasses/dicts; writing files is the CLI's job.
"""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .benders import CORE_LAMBDA, EPS_BD, ITER2_MAX, STRATEGIES, BendersConfig, Multipliers, relative_gap, run_benders
from .instances import FailureSimConfig, GeneratorParams, generate_instance, simulate_failures
from .lagrangian import EPS_LR, ITER1_MAX, SIGMA0, TIME_MAX, LagrangianConfig, run_lagrangian
from .mip import LIMIT_REACHED, OPTIMAL, solve_mip
from .model import Instance, ModelContext, NetworkDesign
from .saa import SaaConfig, build_frame, compute_vss, run_saa

SOLVE_STRATEGIES = ("exact", "classic-lr", *STRATEGIES)
WARM_ITERATIONS = 3


def worker_count() -> int:
    """Worker cap from ``PRHR_THREADS`` (default 1, i.e. run in-process)."""
    raw = os.environ.get("PRHR_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"PRHR_THREADS must be an integer, got {raw!r}") from None


def fan_out(fn, jobs: list, workers: int | None = None) -> list:
    """``[fn(*job) for job in jobs]``, in a process pool when more than one
    worker is allowed.  Result order always follows ``jobs``."""
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        futures = [pool.submit(fn, *job) for job in jobs]
        return [f.result() for f in futures]


def paper_defaults() -> dict:
    return {"tau": GeneratorParams.tau, "theta1": GeneratorParams.theta[0], "theta2": GeneratorParams.theta[1],
            "sigma0": SIGMA0, "core_lambda": CORE_LAMBDA, "eps_lr": EPS_LR, "eps_bd": EPS_BD,
            "iter1_max": ITER1_MAX, "iter2_max": ITER2_MAX, "time_max": TIME_MAX}


# ---------------------------------------------------------------------------
# single solve
# ---------------------------------------------------------------------------
@dataclass
class SolveReport:
    strategy: str
    lb: float
    ub: float
    gap: float
    iterations: int
    stop_reason: str
    limit_reached: bool
    design: NetworkDesign | None
    trace_outer: list[dict] = field(default_factory=list)
    trace_inner: list[dict] = field(default_factory=list)
    cuts: int = 0
    lp_solves: int = 0
    mip_nodes: int = 0
    wall: float = 0.0
    prepare_wall: float = 0.0

    def design_dict(self) -> dict | None:
        if self.design is None:
            return None
        Z = np.round(self.design.Z)
        return {"Z": Z.astype(int).tolist(), "V": np.round(self.design.V).astype(int).tolist(),
                "hub_sets": self.design.hub_set(), "open_hubs": int(Z.sum()), "gamma": float(self.design.gamma)}

    def summary(self) -> dict:
        return {"strategy": self.strategy, "lb": self.lb, "ub": self.ub, "gap": self.gap,
                "gap_percent": 100.0 * self.gap if math.isfinite(self.gap) else None,
                "iterations": self.iterations, "stop_reason": self.stop_reason,
                "limit_reached": self.limit_reached, "design": self.design_dict(),
                "totals": {"cuts": self.cuts, "lp_solves": self.lp_solves, "mip_nodes": self.mip_nodes},
                "wall_s": self.wall, "prepare_s": self.prepare_wall}


def solve_exact_report(ctx: ModelContext, time_limit: float | None = None, drop_risk: bool = False) -> SolveReport:
    start = time.monotonic()
    model = ctx.milp(drop_risk=drop_risk)
    sol = solve_mip(model.mip, backend="highs", rel_gap=1e-9, time_limit=time_limit)
    if sol.status not in (OPTIMAL, LIMIT_REACHED):
        raise RuntimeError(f"exact solve returned {sol.status}")
    design = model.design(sol.x)
    ub, lb = float(sol.objective_value), float(sol.best_bound)
    trace = [{"it_LR": 1, "LB_BD": lb, "LB_LR": lb, "UB_LR": ub, "sigma": math.nan, "theta": math.nan,
              "norm_sq": math.nan, "wall_ms": 1000.0 * (time.monotonic() - start)}]
    return SolveReport("exact", lb, ub, relative_gap(ub, lb), 1,
                       "optimal" if sol.status == OPTIMAL else "time budget", sol.status == LIMIT_REACHED,
                       design, trace, [], 0, 0, sol.nodes_explored, time.monotonic() - start)


def solve_instance(inst: Instance, strategy: str = "mpbd", lr: LagrangianConfig | None = None) -> SolveReport:
    if strategy not in SOLVE_STRATEGIES:
        raise ValueError(f"strategy must be one of {SOLVE_STRATEGIES}")
    t0 = time.monotonic()
    ctx = ModelContext.prepare(inst)
    prep = time.monotonic() - t0
    lr = lr or LagrangianConfig()
    if strategy == "exact":
        rep = solve_exact_report(ctx, lr.time_max)
    else:
        cfg = LagrangianConfig(**{**lr.__dict__, "strategy": strategy})
        out = run_lagrangian(ctx, cfg)
        rep = SolveReport(strategy, out.lb, out.ub, out.gap, out.iterations, out.stop_reason, out.limit_reached,
                          out.design, out.trace, out.inner_traces, out.cuts, out.lp_solves, out.mip_nodes, out.wall)
    rep.prepare_wall = prep
    return rep


# ---------------------------------------------------------------------------
# strategy comparison
# ---------------------------------------------------------------------------
def warm_multipliers(ctx: ModelContext, iterations: int = WARM_ITERATIONS) -> Multipliers:
    """Multipliers after a few classical subgradient steps (shared by every
    strategy so their inner loops solve the same relaxed problem)."""
    if iterations <= 0:
        return Multipliers.zeros(ctx.inst.S, ctx.inst.T)
    out = run_lagrangian(ctx, LagrangianConfig(strategy="classic-lr", iter1_max=iterations))
    return out.multipliers


def compare_seed(params: GeneratorParams, benders: BendersConfig, warm: int = WARM_ITERATIONS,
                 strategies=STRATEGIES) -> tuple[list[dict], list[dict]]:
    """Run each inner strategy once on the same relaxed problem."""
    ctx = ModelContext.prepare(generate_instance(params))
    d = warm_multipliers(ctx, warm)
    rows, traces = [], []
    for strat in strategies:
        cfg = BendersConfig(**{**benders.__dict__, "strategy": strat})
        rep = run_benders(ctx, d, cfg)
        rows.append({"strategy": strat, "seed": params.seed, "iterations": rep.iterations, "final_gap": rep.gap,
                     "cuts": rep.cuts, "wall_ms": 1000.0 * rep.wall, "lb": rep.lb, "ub": rep.ub,
                     "converged": rep.converged})
        traces += [{"seed": params.seed, **row} for row in rep.trace]
    return rows, traces


def compare_strategies(base: GeneratorParams, seeds, benders: BendersConfig | None = None,
                       warm: int = WARM_ITERATIONS, workers: int | None = None) -> tuple[list[dict], list[dict]]:
    benders = benders or BendersConfig()
    jobs = [(replace(base, seed=int(s)), benders, warm) for s in seeds]
    rows, traces = [], []
    for r, t in fan_out(compare_seed, jobs, workers):
        rows += r
        traces += t
    order = {s: k for k, s in enumerate(STRATEGIES)}
    rows.sort(key=lambda r: (order[r["strategy"]], r["seed"]))
    return rows, traces


def median_iterations(rows: list[dict]) -> dict[str, float]:
    return {s: float(np.median([r["iterations"] for r in rows if r["strategy"] == s]))
            for s in STRATEGIES if any(r["strategy"] == s for r in rows)}


# ---------------------------------------------------------------------------
# failure comparison
# ---------------------------------------------------------------------------
def failure_comparison(inst: Instance, sim: FailureSimConfig, strategy: str = "exact",
                       lr: LagrangianConfig | None = None) -> list[dict]:
    """Solve with the risk-aware weights and with the risk-free model (regret
    weight 0, risk rows dropped), then simulate link failures on both."""
    ctx = ModelContext.prepare(inst)
    if strategy == "exact":
        prh = solve_exact_report(ctx).design
    else:
        prh = solve_instance(inst, strategy, lr).design
    rfm = solve_exact_report(ctx, drop_risk=True).design
    rows = []
    for name, design in (("PRH-R", prh), ("RFM", rfm)):
        res = simulate_failures(design, inst, sim)
        rows.append({"model": name, "open_hubs": design.open_hubs, "unserved_total": res.total,
                     "unserved_mean": res.total / sim.n_scenarios,
                     "hub_sets": ";".join("|".join(map(str, h)) for h in design.hub_set())})
    return rows


# ---------------------------------------------------------------------------
# SAA grid
# ---------------------------------------------------------------------------
def saa_cell(template: GeneratorParams, size: int, reps: int, reference: int, seed: int,
             with_vss: bool = False) -> dict:
    cfg = SaaConfig(sample_size=size, replications=reps, reference_size=reference, seed=seed,
                    distribution_kind=template.distribution_kind)
    row = {"seed": seed, "sample_size": size, "replications": reps, "reference_size": reference}
    try:
        frame = build_frame(template, cfg)
        rep = run_saa(template, cfg, frame)
    except Exception as exc:      # the sweep records the failure and moves on
        row.update(status="failed", error=str(exc))
        return row
    row.update(status="ok", mu_lb=rep.mu_lb, var_lb=rep.var_lb, sd_lb=math.sqrt(rep.var_lb), ub=rep.ub,
               var_ub=rep.var_ub, gap=rep.gap, var_gap=rep.var_gap, gap_percent=rep.gap_percent,
               failed=len(rep.failed), cpu_s=rep.replication_cpu, wall_s=rep.wall)
    if with_vss:
        v = compute_vss(template, cfg)
        row.update(eev=v.eev, rp=v.rp, vss=v.vss)
    return row


def saa_sweep(template: GeneratorParams, sizes, reps, reference: int, seeds, with_vss: bool = False,
              workers: int | None = None) -> list[dict]:
    jobs = [(template, int(s), int(m), int(reference), int(seed), with_vss)
            for seed in seeds for s in sizes for m in reps]
    rows = fan_out(saa_cell, jobs, workers)
    rows.sort(key=lambda r: (r["sample_size"], r["replications"], r["seed"]))
    return rows


__all__ = ["SolveReport", "SOLVE_STRATEGIES", "solve_instance", "solve_exact_report", "compare_strategies",
           "compare_seed", "warm_multipliers", "median_iterations", "failure_comparison", "saa_sweep", "saa_cell",
           "worker_count", "fan_out", "paper_defaults"]
