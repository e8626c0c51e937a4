"""Seeded synthetic instances, the ``prhr-instance/v1`` file format, and the
post-hoc link-failure simulation.

Every random value is a pure function of ``(seed, family name, indices)``:
a 64-bit key is derived per family with :class:`numpy.random.SeedSequence`
and each element's uniform draw is a splitmix64 hash of that key and the
element's flat counter.  Any single value can therefore be recomputed without
generating the rest of the array.
"""
from __future__ import annotations

import json
import math
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from .model import Instance, InvalidInstance, NetworkDesign, RiskScale, ScalingBounds

SCHEMA = "prhr-instance/v1"
TRUNC_REDRAWS = 100


class SchemaMismatch(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None, field_name: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field_name is not None:
            where.append(f"field {field_name!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.field = field_name


# ---------------------------------------------------------------------------
# counter-based uniform stream
# ---------------------------------------------------------------------------
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _family_key(seed: int, name: str, prefix: tuple = ()) -> np.uint64:
    ss = np.random.SeedSequence(int(seed), spawn_key=(zlib.crc32(name.encode()), *map(int, prefix)))
    return np.uint64(ss.generate_state(1, dtype=np.uint64)[0])


def _splitmix(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def uniform01(seed: int, name: str, shape, prefix: tuple = (), attempt: int = 0) -> np.ndarray:
    """Open-interval U(0,1) draws for every index of ``shape`` (C order)."""
    key = _family_key(seed, name, (*prefix, attempt))
    n = int(np.prod(shape, dtype=np.int64))
    with np.errstate(over="ignore"):
        ctr = np.arange(n, dtype=np.uint64) * _GOLDEN ^ key
    bits = _splitmix(_splitmix(ctr)) >> np.uint64(11)
    return ((bits.astype(np.float64) + 0.5) / float(1 << 53)).reshape(shape)


def draw(seed: int, name: str, shape, lo: float, hi: float, kind: str = "uniform",
         prefix: tuple = ()) -> np.ndarray:
    """Values on ``[lo, hi]``: uniform, or normal with the same mean and
    variance truncated at zero (redrawn up to 100 times, then clamped)."""
    if hi < lo:
        raise ValueError(f"{name}: empty range [{lo}, {hi}]")
    u = uniform01(seed, name, shape, prefix)
    if kind == "uniform":
        return lo + (hi - lo) * u
    if kind != "truncated-normal":
        raise ValueError(f"unknown distribution kind {kind!r}")
    mean, sd = 0.5 * (lo + hi), (hi - lo) / math.sqrt(12.0)
    out = mean + sd * ndtri(u)
    for attempt in range(1, TRUNC_REDRAWS + 1):
        bad = out < 0
        if not bad.any():
            break
        redraw = mean + sd * ndtri(uniform01(seed, name, shape, prefix, attempt))
        out = np.where(bad, redraw, out)
    return np.maximum(out, 0.0)


# ---------------------------------------------------------------------------
# generator
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class GeneratorParams:
    n_nodes: int = 5
    n_periods: int = 3
    n_scenarios: int = 5
    seed: int = 1
    tau: float = 0.8
    theta: tuple[float, float] = (0.4, 0.6)
    distribution_kind: str = "uniform"
    cost_range: tuple[float, float] = (10.0, 20.0)
    flow_range: tuple[float, float] = (0.5, 0.8)      # multiplier of the period's o-d distance
    base_flow_range: tuple[float, float] = (1.0, 100.0)
    risk_range: tuple[float, float] = (1.0, 10.0)
    threshold_range: tuple[float, float] | None = None  # default [|H||T|, 10|H||T||S|]
    setup_factor: tuple[float, float] = (100.0, 200.0)
    o1_factor: tuple[float, float] = (0.5, 1.0)
    plane: float = 1000.0

    def __post_init__(self):
        if self.n_nodes < 2 or self.n_periods < 1 or self.n_scenarios < 1:
            raise ValueError("need at least 2 nodes, 1 period and 1 scenario")
        for name in ("cost_range", "flow_range", "base_flow_range", "risk_range", "setup_factor", "o1_factor"):
            lo, hi = getattr(self, name)
            if hi < lo:
                raise ValueError(f"{name} is empty: {lo} > {hi}")
        if self.threshold_range is not None and self.threshold_range[1] < self.threshold_range[0]:
            raise ValueError("threshold_range is empty")
        if self.distribution_kind not in ("uniform", "truncated-normal"):
            raise ValueError(f"unknown distribution kind {self.distribution_kind!r}")

    @property
    def thresholds(self) -> tuple[float, float]:
        if self.threshold_range is not None:
            return tuple(map(float, self.threshold_range))
        ht = self.n_nodes * self.n_periods
        return float(ht), float(10 * ht * self.n_scenarios)

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return f"{zlib.crc32(blob):08x}"


@dataclass
class Geometry:
    coords: np.ndarray     # [i, 2]
    base_flow: np.ndarray  # w'[i, j], symmetric
    origin: np.ndarray     # [t]
    destination: np.ndarray
    fixed_cost: np.ndarray  # [i, t]

    @property
    def distance(self) -> np.ndarray:
        diff = self.coords[:, None, :] - self.coords[None, :, :]
        return np.sqrt((diff ** 2).sum(axis=-1))


def generate_geometry(params: GeneratorParams) -> Geometry:
    H, T, seed = params.n_nodes, params.n_periods, params.seed
    coords = draw(seed, "coords", (H, 2), 0.0, params.plane)
    upper = draw(seed, "base_flow", (H, H), *params.base_flow_range)
    base = np.triu(upper, 1)
    base = base + base.T + np.diag(np.diag(upper))
    o = np.floor(uniform01(seed, "origin", (T,)) * H).astype(np.int64)
    shift = 1 + np.floor(uniform01(seed, "destination", (T,)) * (H - 1)).astype(np.int64)
    d = (o + shift) % H
    o1 = draw(seed, "o1", (H, T), *params.o1_factor) * base.sum(axis=1)[:, None]
    log_o1 = np.log10(np.maximum(o1, 1.01))
    u = uniform01(seed, "setup", (H, T))
    lo, hi = params.setup_factor
    fixed = (lo + (hi - lo) * u) * log_o1
    return Geometry(coords, base, o, d, fixed)


def sample_scenarios(params: GeneratorParams, geometry: Geometry, n_scenarios: int, sample_id: int = 0) -> dict:
    """Scenario-dependent arrays for one sample.  ``sample_id`` separates the
    streams of SAA replications and reference samples."""
    H, T, S, seed, kind = params.n_nodes, params.n_periods, n_scenarios, params.seed, params.distribution_kind
    pre = (sample_id,)
    dist_od = geometry.distance[geometry.origin, geometry.destination]       # [t]
    unit = draw(seed, "unit_cost", (H, H, S, T), *params.cost_range, kind, pre)
    flow = draw(seed, "flow", (H, S, T), *params.flow_range, kind, pre) * dist_od[None, None, :]
    pi1 = draw(seed, "pi1", (H, S, T), *params.risk_range, kind, pre)
    pi2 = draw(seed, "pi2", (H, H, S, T), *params.risk_range, kind, pre)
    t_lo, t_hi = params.thresholds
    pi0_1 = draw(seed, "pi0_1", (S,), t_lo, t_hi, kind, pre)
    pi0_2 = draw(seed, "pi0_2", (S,), t_lo, t_hi, kind, pre)
    return dict(unit_cost=unit, flow=flow, pi1=pi1, pi2=pi2, pi0_1=pi0_1, pi0_2=pi0_2,
                prob=np.full(S, 1.0 / S))


def generate_instance(params: GeneratorParams, sample_id: int = 0, n_scenarios: int | None = None) -> Instance:
    geo = generate_geometry(params)
    S = params.n_scenarios if n_scenarios is None else n_scenarios
    sc = sample_scenarios(params, geo, S, sample_id)
    th1, th2 = params.theta
    return Instance(fixed_cost=geo.fixed_cost, theta1=th1, theta2=th2, tau=params.tau,
                    origin=geo.origin, destination=geo.destination,
                    meta={"generator": json.loads(json.dumps(asdict(params))), "sample_id": sample_id}, **sc)


def audit_instance(inst: Instance, params: GeneratorParams) -> list[str]:
    """Range checks of every generated family; returns a list of violations."""
    problems = []

    def check(name, arr, lo, hi):
        if arr.size and (arr.min() < lo - 1e-9 or arr.max() > hi + 1e-9):
            problems.append(f"{name} outside [{lo}, {hi}]: [{arr.min()}, {arr.max()}]")

    uniform = params.distribution_kind == "uniform"
    if uniform:
        check("unit_cost", inst.unit_cost, *params.cost_range)
        check("pi1", inst.pi1, *params.risk_range)
        check("pi2", inst.pi2, *params.risk_range)
        check("pi0_1", inst.pi0_1, *params.thresholds)
        check("pi0_2", inst.pi0_2, *params.thresholds)
    else:
        for name in ("unit_cost", "flow", "pi1", "pi2", "pi0_1", "pi0_2"):
            check(name, getattr(inst, name), 0.0, math.inf)
    check("fixed_cost", inst.fixed_cost, 0.0, math.inf)
    if abs(inst.prob.sum() - 1.0) > 1e-9:
        problems.append("probabilities do not sum to 1")
    if inst.origin is not None and np.any(inst.origin == inst.destination):
        problems.append("a period has origin == destination")
    return problems


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------
_ARRAYS = ("fixed_cost", "prob", "unit_cost", "flow", "pi1", "pi2", "pi0_1", "pi0_2")
_SHAPES = {"fixed_cost": "[i][t]", "prob": "[s]", "unit_cost": "[i][j][s][t]", "flow": "[i][s][t]",
           "pi1": "[i][s][t]", "pi2": "[i][j][s][t]", "pi0_1": "[s]", "pi0_2": "[s]"}


def instance_to_dict(inst: Instance) -> dict:
    doc = {"schema": SCHEMA, "nodes": list(inst.node_ids), "n_periods": inst.T, "n_scenarios": inst.S,
           "theta1": inst.theta1, "theta2": inst.theta2, "tau": inst.tau,
           "origin": None if inst.origin is None else inst.origin.tolist(),
           "destination": None if inst.destination is None else inst.destination.tolist(),
           "layout": _SHAPES}
    for name in _ARRAYS:
        doc[name] = getattr(inst, name).tolist()
    doc["scaling"] = None if inst.scaling is None else asdict(inst.scaling)
    rs = inst.risk_scale_override
    doc["risk_scale"] = None if rs is None else asdict(rs)
    doc["risk_weight"] = inst.risk_weight
    doc["meta"] = inst.meta
    return doc


def save_instance(inst: Instance, path) -> Path:
    """Write ``inst`` as JSON.  Floats use Python's shortest round-trip repr,
    so loading restores every value bit for bit."""
    path = Path(path)
    text = json.dumps(instance_to_dict(inst), indent=1, sort_keys=False, allow_nan=False)
    path.write_text(text + "\n")
    return path


def instance_from_dict(doc: dict) -> Instance:
    if not isinstance(doc, dict):
        raise SchemaMismatch("document root must be an object")
    if doc.get("schema") != SCHEMA:
        raise SchemaMismatch(f"expected schema {SCHEMA!r}, found {doc.get('schema')!r}")
    for name in (*_ARRAYS, "nodes", "theta1", "theta2", "tau"):
        if name not in doc:
            raise ParseError("missing required field", field_name=name)
    arrays = {}
    for name in _ARRAYS:
        try:
            arrays[name] = np.array(doc[name], dtype=float)
        except (TypeError, ValueError) as exc:
            raise ParseError(f"not a rectangular numeric array: {exc}", field_name=name) from None
    scaling = ScalingBounds(**doc["scaling"]) if doc.get("scaling") else None
    rs = RiskScale(**doc["risk_scale"]) if doc.get("risk_scale") else None
    try:
        return Instance(theta1=float(doc["theta1"]), theta2=float(doc["theta2"]), tau=float(doc["tau"]),
                        origin=doc.get("origin"), destination=doc.get("destination"),
                        node_ids=[str(n) for n in doc["nodes"]], scaling=scaling, risk_scale_override=rs,
                        risk_weight=doc.get("risk_weight"),
                        meta=doc.get("meta") or {}, **arrays)
    except InvalidInstance as exc:
        raise SchemaMismatch(str(exc)) from None


def load_instance(path) -> Instance:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    return instance_from_dict(doc)


# ---------------------------------------------------------------------------
# failure simulation
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class FailureSimConfig:
    n_scenarios: int = 1000
    failure_probability: float = 0.1
    seed: int = 0
    risk_weighted: bool = True

    def __post_init__(self):
        if not 0.0 <= self.failure_probability <= 1.0:
            raise ValueError("failure probability must lie in [0, 1]")


@dataclass
class FailureResult:
    total: float
    per_scenario: np.ndarray = field(repr=False)


def link_failure_probability(inst: Instance, config: FailureSimConfig) -> np.ndarray:
    """Per-period link failure probabilities ``[i, j, t]``.

    With ``risk_weighted`` the base probability is tilted by the link's mean
    risk-free score: ``1 - (1 - p) ** (mean_score / score_ij)``, so a link with
    an average score fails with probability ``p`` and safer links less often."""
    p = config.failure_probability
    H, T = inst.H, inst.T
    if not config.risk_weighted:
        return np.full((H, H, T), p)
    score = inst.pi2.mean(axis=2)                          # [i, j, t]
    ratio = score.mean() / np.maximum(score, 1e-12)
    with np.errstate(divide="ignore"):
        return 1.0 - np.power(1.0 - p, ratio)


def simulate_failures(design: NetworkDesign, inst: Instance, config: FailureSimConfig) -> FailureResult:
    """Expected flow lost on failed hub links, summed over simulated scenarios.

    In each simulated scenario every hub link of every period fails
    independently; the expected flow routed over a failed link (over the
    instance's demand scenarios) is counted as unserved."""
    X = np.asarray(design.X)
    routed = np.einsum("s,ist,ijst->ijt", inst.prob, inst.flow, X)
    prob = link_failure_probability(inst, config)
    K = config.n_scenarios
    u = uniform01(config.seed, "failure", (K, *routed.shape))
    failed = u < prob[None]
    per = (failed * routed[None]).reshape(K, -1).sum(axis=1)
    return FailureResult(float(per.sum()), per)


__all__ = ["GeneratorParams", "Geometry", "FailureSimConfig", "FailureResult", "SchemaMismatch", "ParseError",
           "generate_instance", "generate_geometry", "sample_scenarios", "audit_instance", "uniform01", "draw",
           "save_instance", "load_instance", "instance_to_dict", "instance_from_dict",
           "simulate_failures", "link_failure_probability", "SCHEMA"]
