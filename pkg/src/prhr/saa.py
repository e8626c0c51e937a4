"""Sample average approximation of the two-stage model.

Replication ``m`` draws its own scenario sample (stream ``sample_id = m + 1``)
and is solved to optimality as a full MILP.  The replication objectives give
the lower-bound estimate; the first-stage hub plan of the best replication is
then priced on a large reference sample for the upper-bound estimate.

All sampled instances of one study share three quantities so their objective
values are on the same scale:

* the scaling bounds of the normalized objective, estimated once on a pilot
  sample;
* the risk standardization, estimated on the reference sample;
* the scenario weight inside the risk terms, fixed at ``1/|S|``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .instances import GeneratorParams, generate_instance
from .mip import OPTIMAL, solve_mip
from .model import (BestRisk, Instance, ModelContext, ScalingBounds, compute_best_risk,
                    compute_risk_scale, estimate_scaling_bounds, second_stage)

REFERENCE_ID = 10 ** 6
PILOT_ID = 10 ** 6 + 1
MEAN_ID = 10 ** 6 + 2


class TooFewReplications(ValueError):
    pass


class ReplicationFailed(RuntimeError):
    def __init__(self, m: int, reason: str):
        super().__init__(f"replication {m}: {reason}")
        self.m = m
        self.reason = reason


class SecondStageInfeasible(ValueError):
    pass


@dataclass(frozen=True)
class SaaConfig:
    sample_size: int = 25
    replications: int = 10
    reference_size: int = 500
    seed: int = 1
    distribution_kind: str = "uniform"
    mip_time_limit: float | None = 120.0
    mip_gap: float = 1e-7

    def __post_init__(self):
        if self.sample_size < 1 or self.replications < 1 or self.reference_size < 1:
            raise ValueError("sample sizes and replication count must be positive")
        if self.replications < 2:
            raise TooFewReplications("the variance estimate needs at least 2 replications")
        if self.reference_size <= self.sample_size:
            raise ValueError("the reference sample must be larger than the replication sample")
        if self.distribution_kind not in ("uniform", "truncated-normal"):
            raise ValueError(f"unknown distribution kind {self.distribution_kind!r}")


@dataclass
class SaaReport:
    replication_values: list[float]
    mu_lb: float
    var_lb: float
    ub: float
    var_ub: float
    gap: float
    var_gap: float
    chosen_Z: np.ndarray
    chosen_V: np.ndarray
    chosen_index: int
    designs: list[np.ndarray] = field(repr=False)
    failed: list[ReplicationFailed] = field(default_factory=list)
    replication_ids: list[int] = field(default_factory=list)
    wall: float = 0.0
    replication_cpu: float = 0.0       # process CPU seconds spent in the replications

    @property
    def gap_percent(self) -> float:
        return 100.0 * self.gap / max(1.0, abs(self.ub))

    def as_dict(self) -> dict:
        return {"replication_values": list(self.replication_values), "mu_lb": self.mu_lb, "var_lb": self.var_lb,
                "ub": self.ub, "var_ub": self.var_ub, "gap": self.gap, "var_gap": self.var_gap,
                "gap_percent": self.gap_percent, "chosen_index": self.chosen_index,
                "chosen_Z": self.chosen_Z.tolist(), "chosen_V": self.chosen_V.tolist(),
                "failed": [f.m for f in self.failed], "wall": self.wall, "replication_cpu": self.replication_cpu}


def lower_bound_stats(values) -> tuple[float, float]:
    """Mean of the replication objectives and the variance of that mean."""
    v = np.asarray(values, dtype=float)
    M = v.size
    if M < 2:
        raise TooFewReplications(f"need at least 2 replication values, got {M}")
    mu = float(v.mean())
    return mu, float(np.sum((v - mu) ** 2) / ((M - 1) * M))


# ---------------------------------------------------------------------------
# sampled instances on a common scale
# ---------------------------------------------------------------------------
@dataclass
class SampleFrame:
    """What every sampled instance of a study has in common."""
    params: GeneratorParams
    risk_weight: float
    scaling: ScalingBounds
    reference: Instance

    def sample(self, sample_id: int, size: int) -> Instance:
        inst = generate_instance(self.params, sample_id=sample_id, n_scenarios=size)
        return inst.with_(risk_scale_override=self.reference.risk_scale, risk_weight=self.risk_weight,
                          scaling=self.scaling)


def _with_kind(template: GeneratorParams, config: SaaConfig) -> GeneratorParams:
    from dataclasses import replace
    return replace(template, seed=config.seed, distribution_kind=config.distribution_kind)


def build_frame(template: GeneratorParams, config: SaaConfig) -> SampleFrame:
    params = _with_kind(template, config)
    weight = 1.0 / config.sample_size
    ref = generate_instance(params, sample_id=REFERENCE_ID, n_scenarios=config.reference_size)
    ref = ref.with_(risk_scale_override=compute_risk_scale(ref.pi1, ref.pi2), risk_weight=weight)
    pilot = generate_instance(params, sample_id=PILOT_ID, n_scenarios=config.sample_size)
    pilot = pilot.with_(risk_scale_override=ref.risk_scale, risk_weight=weight)
    scaling = estimate_scaling_bounds(pilot, compute_best_risk(pilot, "dp"), backend="highs")
    return SampleFrame(params, weight, scaling, ref.with_(scaling=scaling))


def solve_exact(inst: Instance, time_limit: float | None = None, rel_gap: float = 1e-7):
    """Optimal objective and hub plan of a sampled instance (full MILP)."""
    ctx = ModelContext.prepare(inst, scaling=inst.scaling)
    model = ctx.milp()
    sol = solve_mip(model.mip, backend="highs", time_limit=time_limit, rel_gap=rel_gap)
    if sol.status != OPTIMAL:
        raise RuntimeError(f"solver status {sol.status}")
    design = model.design(sol.x)
    return float(sol.objective_value), np.round(design.Z), ctx


# ---------------------------------------------------------------------------
# upper bound on the reference sample
# ---------------------------------------------------------------------------
def upper_bound_eval(Z, reference: Instance, best: BestRisk | None = None,
                     scaling: ScalingBounds | None = None) -> tuple[float, float, np.ndarray]:
    """Objective of a fixed hub plan on ``reference`` and the variance of that
    estimate.

    The routing is re-optimized for the fixed plan with one regret level shared
    by all reference scenarios.  Scenario ``s`` contributes the normalized
    regret term plus its own full-probability cost; the mean of these values
    is exactly the objective.  Returns ``(omega, var, per_scenario)``."""
    Z = np.round(np.asarray(Z, dtype=float))
    if np.any(Z.sum(axis=0) < 1):
        raise SecondStageInfeasible("every period needs at least one open hub")
    scaling = scaling if scaling is not None else reference.scaling
    if best is None:
        best = compute_best_risk(reference, "dp")
    ss = second_stage(reference, Z, best, scaling)
    inst = reference
    fixed = ss.cost - float(ss.per_scenario_cost.sum())
    scenario_cost = fixed + ss.per_scenario_cost / inst.prob
    per = (inst.theta1 * (ss.gamma - scaling.gamma_star) / scaling.d_gamma
           + inst.theta2 * (scenario_cost - scaling.omega_star) / scaling.d_omega)
    n = per.size
    omega = float(per.mean())
    var = float(np.sum((per - omega) ** 2) / ((n - 1) * n)) if n > 1 else 0.0
    return omega, var, per


# ---------------------------------------------------------------------------
# the four steps
# ---------------------------------------------------------------------------
def run_saa(template: GeneratorParams, config: SaaConfig, frame: SampleFrame | None = None) -> SaaReport:
    start = time.perf_counter()
    frame = frame if frame is not None else build_frame(template, config)
    values, designs, ids, failed = [], [], [], []
    t_rep = time.process_time()
    for m in range(config.replications):
        inst = frame.sample(m + 1, config.sample_size)
        try:
            val, Z, _ = solve_exact(inst, config.mip_time_limit, config.mip_gap)
        except (RuntimeError, ValueError) as exc:   # budget or numerical trouble: drop it
            failed.append(ReplicationFailed(m, str(exc)))
            continue
        values.append(val)
        designs.append(Z)
        ids.append(m)
    rep_cpu = time.process_time() - t_rep
    if len(values) < 2:
        raise TooFewReplications(f"only {len(values)} replications succeeded (failed: {[f.m for f in failed]})")
    mu, var_lb = lower_bound_stats(values)
    k = int(np.argmin(values))          # first index among ties
    Z = designs[k]
    ub, var_ub, _ = upper_bound_eval(Z, frame.reference)
    V = np.concatenate([np.zeros((Z.shape[0], 1)), Z[:, :-1]], axis=1) * Z
    return SaaReport(values, mu, var_lb, ub, var_ub, ub - mu, var_lb + var_ub, Z, V, ids[k], designs,
                     failed, ids, time.perf_counter() - start, rep_cpu)


# ---------------------------------------------------------------------------
# value of the stochastic solution
# ---------------------------------------------------------------------------
def mean_value_instance(inst: Instance) -> Instance:
    """One scenario carrying the probability-weighted mean of every parameter."""
    p = inst.prob

    def avg(a, axis):
        return np.expand_dims(np.average(a, axis=axis, weights=p), axis)

    return inst.with_(prob=np.array([1.0]), unit_cost=avg(inst.unit_cost, 2), flow=avg(inst.flow, 1),
                      pi1=avg(inst.pi1, 1), pi2=avg(inst.pi2, 2), pi0_1=avg(inst.pi0_1, 0),
                      pi0_2=avg(inst.pi0_2, 0), risk_scale_override=inst.risk_scale,
                      risk_weight=float(inst.risk_prob.mean()))


@dataclass
class VssResult:
    eev: float
    rp: float
    vss: float
    rp_Z: np.ndarray
    ev_Z: np.ndarray


def compute_vss(template: GeneratorParams, config: SaaConfig, inst: Instance | None = None) -> VssResult:
    """``EEV - RP`` on the sampled program of ``config.sample_size`` scenarios.

    RP is its optimum; EEV prices the optimal plan of the mean-value problem on
    the same scenarios (routing re-optimized).  Scaling, risk standardization
    and ``Psi*`` are shared by both problems."""
    if inst is None:
        params = _with_kind(template, config)
        inst = generate_instance(params, sample_id=MEAN_ID, n_scenarios=config.sample_size)
        inst = inst.with_(risk_scale_override=inst.risk_scale, risk_weight=1.0 / config.sample_size)
    if inst.scaling is None:
        inst = inst.with_(scaling=estimate_scaling_bounds(inst, compute_best_risk(inst, "dp"), backend="highs"))
    rp, rp_Z, ctx = solve_exact(inst, config.mip_time_limit, config.mip_gap)
    ev = mean_value_instance(inst).with_(scaling=inst.scaling)
    _, ev_Z, _ = solve_exact(ev, config.mip_time_limit, config.mip_gap)
    eev = second_stage(inst, ev_Z, ctx.best, inst.scaling).omega
    return VssResult(float(eev), float(rp), float(eev - rp), rp_Z, ev_Z)


__all__ = ["SaaConfig", "SaaReport", "SampleFrame", "VssResult", "TooFewReplications", "ReplicationFailed",
           "SecondStageInfeasible", "lower_bound_stats", "build_frame", "run_saa", "upper_bound_eval",
           "compute_vss", "mean_value_instance", "solve_exact", "REFERENCE_ID", "PILOT_ID"]
