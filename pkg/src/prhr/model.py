"""PRH-R data model, the linearized MILP, and exact evaluators.

Index conventions used throughout the package (all numpy arrays):

* ``fixed_cost[i, t]``               setup cost of a hub at node ``i`` in period ``t``
* ``unit_cost[i, j, s, t]``          drawn unit transport cost on leg ``i -> j``
* ``flow[i, s, t]``                  flow routed from hub ``i``
* ``pi1[i, s, t]``, ``pi2[i, j, s, t]``  node / link risk-free scores
* ``pi0_1[s]``, ``pi0_2[s]``         node / link sustainability thresholds
* ``prob[s]``                        scenario probability

Design variables follow the same layout: ``Z[i, t]``, ``V[i, t]``,
``X[i, j, s, t]``, ``L[i, j, s, t]``, ``Q[i, j, s, t]`` and the scalar ``gamma``.
The pre-horizon state ``Z[:, -1]`` is taken as closed, so ``V[:, 0] = 0``.

Risk is measured by the *linearized* per-scenario expression

    R_s = k_s [ pi0_1 pi0_2 - pi0_1 sum p pi2 X - pi0_2 sum p pi1 (Z - V)
                + sum p pi2 pi1_i (L - Q) ],          k_s = 1 / (sigma1 sigma2)

which is the expression bounding ``gamma`` in the MILP.  ``Psi*_s`` is its
minimum over designs for scenario ``s`` alone, and the regret of a design is
``R_s - Psi*_s``.

Closed-form sizes of :func:`build_linearized_milp` (``H, T, S`` = counts):

* variables:   ``2HT + 3H^2 ST + 1``  (binaries ``2HT + 2H^2 ST``)
* rows:        ``ST`` (assignment) + ``HST`` (degree) + ``S`` (risk)
  + ``2HT`` (carry-over products) + ``4H^2 ST`` (link products)
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .lp import LinearProgram
from .mip import MixedIntegerProgram, OPTIMAL, solve_mip

SIGMA_FLOOR = 1.0
PAD = 1e-6


class InfeasibleScenario(RuntimeError):
    pass


class InvalidInstance(ValueError):
    pass


def normal_cdf(x):
    """Standard normal CDF, ``0.5 * erfc(-x / sqrt 2)`` (scalar or array)."""
    from scipy.special import ndtr

    return ndtr(x) if isinstance(x, np.ndarray) else 0.5 * math.erfc(-float(x) / math.sqrt(2.0))


@dataclass(frozen=True)
class ScalingBounds:
    gamma_star: float
    gamma_max: float
    omega_star: float
    omega_max: float

    def __post_init__(self):
        if not (self.gamma_max > self.gamma_star and self.omega_max > self.omega_star):
            raise InvalidInstance(f"scaling bounds must satisfy max > ideal: {self}")

    @property
    def d_gamma(self) -> float:
        return self.gamma_max - self.gamma_star

    @property
    def d_omega(self) -> float:
        return self.omega_max - self.omega_star


@dataclass(frozen=True)
class RiskScale:
    sigma1: float
    sigma2: float

    def __post_init__(self):
        if not (self.sigma1 > 0 and self.sigma2 > 0):
            raise InvalidInstance("risk scale sigmas must be positive")


@dataclass(frozen=True)
class BestRisk:
    psi_star: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.psi_star)):
            raise InvalidInstance("psi_star must be finite for every scenario")


@dataclass(frozen=True)
class Scenario:
    probability: float
    unit_cost: np.ndarray     # [i, j, t]
    flow: np.ndarray          # [i, t]
    node_risk_free: np.ndarray   # [i, t]
    link_risk_free: np.ndarray   # [i, j, t]
    node_threshold: float
    link_threshold: float


@dataclass(eq=False)
class Instance:
    fixed_cost: np.ndarray
    prob: np.ndarray
    unit_cost: np.ndarray
    flow: np.ndarray
    pi1: np.ndarray
    pi2: np.ndarray
    pi0_1: np.ndarray
    pi0_2: np.ndarray
    theta1: float = 0.4
    theta2: float = 0.6
    tau: float = 0.8
    origin: np.ndarray | None = None
    destination: np.ndarray | None = None
    node_ids: list[str] | None = None
    scaling: ScalingBounds | None = None
    risk_scale_override: RiskScale | None = None
    risk_weight: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("fixed_cost", "prob", "unit_cost", "flow", "pi1", "pi2", "pi0_1", "pi0_2"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.origin is not None:
            self.origin = np.asarray(self.origin, dtype=np.int64)
            self.destination = np.asarray(self.destination, dtype=np.int64)
        if self.node_ids is None:
            self.node_ids = [str(i) for i in range(self.fixed_cost.shape[0])]
        self.validate()

    # ----------------------------------------------------------------- shape
    @property
    def H(self) -> int:
        return self.fixed_cost.shape[0]

    @property
    def T(self) -> int:
        return self.fixed_cost.shape[1]

    @property
    def S(self) -> int:
        return self.prob.shape[0]

    def validate(self) -> None:
        H, T, S = self.H, self.T, self.S
        expect = {"unit_cost": (H, H, S, T), "flow": (H, S, T), "pi1": (H, S, T), "pi2": (H, H, S, T),
                  "pi0_1": (S,), "pi0_2": (S,)}
        if H < 2 or T < 1 or S < 1:
            raise InvalidInstance(f"need |H| >= 2, |T| >= 1, |S| >= 1; got {H}, {T}, {S}")
        for name, shape in expect.items():
            if getattr(self, name).shape != shape:
                raise InvalidInstance(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if np.any(self.prob < 0) or abs(self.prob.sum() - 1.0) > 1e-9:
            raise InvalidInstance(f"scenario probabilities must be >= 0 and sum to 1 (sum={self.prob.sum()!r})")
        if np.any(self.fixed_cost < 0):
            raise InvalidInstance("fixed costs must be non-negative")
        if np.any(self.unit_cost < 0) or np.any(self.flow < 0):
            raise InvalidInstance("costs and flows must be non-negative")
        if np.any(self.pi1 < 0) or np.any(self.pi2 < 0):
            raise InvalidInstance("risk-free scores must be non-negative")
        arrays = (self.fixed_cost, self.unit_cost, self.flow, self.pi1, self.pi2, self.pi0_1, self.pi0_2)
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise InvalidInstance("all parameters must be finite")
        if not (self.theta1 >= 0 and self.theta2 >= 0 and abs(self.theta1 + self.theta2 - 1.0) <= 1e-9):
            raise InvalidInstance("objective weights must be non-negative and sum to 1")
        if self.risk_weight is not None and not self.risk_weight > 0.0:
            raise InvalidInstance("risk weight must be positive")
        if not 0.0 < self.tau < 1.0:
            raise InvalidInstance("discount factor must lie in (0, 1)")
        if (self.origin is None) != (self.destination is None):
            raise InvalidInstance("origin and destination must be given together")
        if self.origin is not None:
            if self.origin.shape != (T,) or self.destination.shape != (T,):
                raise InvalidInstance("origin/destination need one node per period")
            if np.any((self.origin < 0) | (self.origin >= H) | (self.destination < 0) | (self.destination >= H)):
                raise InvalidInstance("origin/destination out of range")

    @property
    def scenarios(self) -> list[Scenario]:
        return [Scenario(float(self.prob[s]), self.unit_cost[:, :, s, :], self.flow[:, s, :],
                         self.pi1[:, s, :], self.pi2[:, :, s, :], float(self.pi0_1[s]), float(self.pi0_2[s]))
                for s in range(self.S)]

    def with_(self, **changes) -> "Instance":
        """Copy with fields replaced (cached coefficients are not carried over)."""
        keep = {k: getattr(self, k) for k in self.__dataclass_fields__}
        keep.update(changes)
        return Instance(**keep)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Instance):
            return NotImplemented
        for name in self.__dataclass_fields__:
            a, b = getattr(self, name), getattr(other, name)
            if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
                if a is None or b is None or a.shape != b.shape or not np.array_equal(a, b):
                    return False
            elif a != b:
                return False
        return True

    __hash__ = None

    # ------------------------------------------------------- derived values
    @cached_property
    def path_cost(self) -> np.ndarray:
        """Unit cost of routing a period's flow through hub link ``(i, j)``.

        With an origin/destination per period the cost is the collection leg,
        the discounted inter-hub leg and the distribution leg (same-node legs
        cost nothing).  Without them the drawn unit cost is used directly."""
        if self.origin is None:
            return self.unit_cost
        H, T = self.H, self.T
        c = self.unit_cost
        out = np.empty_like(c)
        eye = np.eye(H, dtype=bool)
        for t in range(T):
            o, d = self.origin[t], self.destination[t]
            leg_in = np.where(np.arange(H)[:, None] == o, 0.0, c[o, :, :, t])          # [i, s]
            leg_out = np.where(np.arange(H)[:, None] == d, 0.0, c[:, d, :, t])         # [j, s]
            hub = np.where(eye[:, :, None], 0.0, c[:, :, :, t])
            out[:, :, :, t] = leg_in[:, None, :] + self.tau * hub + leg_out[None, :, :]
        return out

    @cached_property
    def transport_coeff(self) -> np.ndarray:
        """``K[i, j, s, t] = p^s w_i^{st} c_ij^{st}``: expected cost weight of ``X``."""
        return self.prob[None, None, :, None] * self.flow[:, None, :, :] * self.path_cost

    @property
    def risk_prob(self) -> np.ndarray:
        """Scenario weights inside the risk terms: ``prob`` unless a fixed
        ``risk_weight`` is set (sampled instances of different sizes then share
        one risk definition)."""
        if self.risk_weight is None:
            return self.prob
        return np.full(self.S, float(self.risk_weight))

    @cached_property
    def risk_scale(self) -> RiskScale:
        if self.risk_scale_override is not None:
            return self.risk_scale_override
        return compute_risk_scale(self.pi1, self.pi2)

    @cached_property
    def risk(self) -> "RiskTerms":
        return RiskTerms.build(self)


def compute_risk_scale(pi1: np.ndarray, pi2: np.ndarray) -> RiskScale:
    """Sample std-dev across scenarios of the node and link score aggregates,
    floored at :data:`SIGMA_FLOOR`."""
    S = pi1.shape[1]
    agg1 = pi1.sum(axis=(0, 2))
    agg2 = pi2.sum(axis=(0, 1, 3))
    if S < 2:
        return RiskScale(SIGMA_FLOOR, SIGMA_FLOOR)
    s1 = float(np.std(agg1, ddof=1))
    s2 = float(np.std(agg2, ddof=1))
    return RiskScale(max(s1, SIGMA_FLOOR), max(s2, SIGMA_FLOOR))


@dataclass
class RiskTerms:
    """Coefficients of the linearized risk ``R_s`` (see module docstring)."""
    const: np.ndarray     # [s]
    coef_zv: np.ndarray   # [i, s, t] multiplies (Z - V)
    coef_x: np.ndarray    # [i, j, s, t]
    coef_lq: np.ndarray   # [i, j, s, t] multiplies (L - Q)

    @classmethod
    def build(cls, inst: Instance) -> "RiskTerms":
        rs = inst.risk_scale
        k = 1.0 / (rs.sigma1 * rs.sigma2)
        p = inst.risk_prob
        const = k * inst.pi0_1 * inst.pi0_2
        coef_zv = -k * inst.pi0_2[None, :, None] * p[None, :, None] * inst.pi1
        coef_x = -k * inst.pi0_1[None, None, :, None] * p[None, None, :, None] * inst.pi2
        coef_lq = k * p[None, None, :, None] * inst.pi2 * inst.pi1[:, None, :, :]
        return cls(const, coef_zv, coef_x, coef_lq)

    def link_risk(self, V: np.ndarray) -> np.ndarray:
        """Risk contribution of choosing link ``(i, j)`` at an integral point
        (there ``L = X`` and ``Q = V_i X``)."""
        return self.coef_x + self.coef_lq * (1.0 - V)[:, None, None, :]


# ---------------------------------------------------------------------------
# designs
# ---------------------------------------------------------------------------
def carryover(Z: np.ndarray) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    prev = np.concatenate([np.zeros((Z.shape[0], 1)), Z[:, :-1]], axis=1)
    return prev * Z


@dataclass
class NetworkDesign:
    Z: np.ndarray
    V: np.ndarray
    X: np.ndarray
    L: np.ndarray
    Q: np.ndarray
    gamma: float

    @classmethod
    def from_links(cls, inst: Instance, Z, X, best: BestRisk | None = None, gamma: float | None = None):
        """Complete a design from ``Z`` and ``X`` (products filled in; ``gamma``
        set to the largest regret when ``best`` is given)."""
        Z = np.asarray(Z, dtype=float)
        X = np.asarray(X, dtype=float)
        V = carryover(Z)
        L = Z[:, None, None, :] * X
        Q = V[:, None, None, :] * X
        d = cls(Z, V, X, L, Q, 0.0 if gamma is None else float(gamma))
        if gamma is None and best is not None:
            d.gamma = max(0.0, float(np.max(regrets(d, inst, best))))
        return d

    @property
    def open_hubs(self) -> int:
        return int(np.round(self.Z).sum())

    def hub_set(self) -> list[list[int]]:
        return [np.flatnonzero(self.Z[:, t] > 0.5).tolist() for t in range(self.Z.shape[1])]


def linearized_risk(design: NetworkDesign, inst: Instance, s: int | None = None):
    r = inst.risk
    zv = design.Z - design.V
    vals = (r.const + np.einsum("ist,it->s", r.coef_zv, zv)
            + np.einsum("ijst,ijst->s", r.coef_x, design.X)
            + np.einsum("ijst,ijst->s", r.coef_lq, design.L - design.Q))
    return vals if s is None else float(vals[s])


def regrets(design: NetworkDesign, inst: Instance, best: BestRisk) -> np.ndarray:
    return linearized_risk(design, inst) - best.psi_star


def risk_regret(design: NetworkDesign, inst: Instance, s: int, best: BestRisk) -> float:
    """Regret ``R_s(design) - Psi*_s`` of one scenario."""
    return linearized_risk(design, inst, s) - float(best.psi_star[s])


def expected_cost(design: NetworkDesign, inst: Instance) -> float:
    return float(np.sum(inst.fixed_cost * (design.Z - design.V)) + np.sum(inst.transport_coeff * design.X))


def chance_probability(design: NetworkDesign, inst: Instance, s: int) -> tuple[float, float]:
    """Normal-model probabilities that the node and link risk sums stay within
    their thresholds (true CDF values, used for reporting)."""
    a1, a2 = chance_arguments(design, inst, s)
    return normal_cdf(a1), normal_cdf(a2)


def chance_arguments(design: NetworkDesign, inst: Instance, s: int) -> tuple[float, float]:
    rs = inst.risk_scale
    p = inst.risk_prob[s]
    node = p * float(np.sum(inst.pi1[:, s, :] * (design.Z - design.V)))
    link = p * float(np.sum(inst.pi2[:, :, s, :] * design.X[:, :, s, :]))
    return (inst.pi0_1[s] - node) / rs.sigma1, (inst.pi0_2[s] - link) / rs.sigma2


def evaluate_objective(design: NetworkDesign, inst: Instance, bounds: ScalingBounds,
                       best: BestRisk | None = None) -> float:
    """Weighted normalized objective at a design, using its ``gamma`` value.

    ``best`` is accepted for interface symmetry; the regret enters only through
    ``design.gamma``."""
    return (inst.theta1 * (design.gamma - bounds.gamma_star) / bounds.d_gamma
            + inst.theta2 * (expected_cost(design, inst) - bounds.omega_star) / bounds.d_omega)


def gamma_cap(inst: Instance, best: BestRisk) -> float:
    """A finite upper bound on the regret of any feasible design."""
    r = inst.risk
    # R_s <= const_s + sum_t max_ij coef_lq  (the other terms are non-positive)
    top = r.const + np.sum(np.max(np.maximum(r.coef_lq, 0.0), axis=(0, 1)), axis=-1)
    return float(max(0.0, np.max(top - best.psi_star))) + 1.0


# ---------------------------------------------------------------------------
# MILP construction
# ---------------------------------------------------------------------------
class Layout:
    """Column indices of every variable family in the full MILP."""

    def __init__(self, H: int, T: int, S: int):
        self.H, self.T, self.S = H, T, S
        n = 0
        self.Z = np.arange(n, n + H * T).reshape(H, T); n += H * T
        self.V = np.arange(n, n + H * T).reshape(H, T); n += H * T
        size = H * H * S * T
        self.X = np.arange(n, n + size).reshape(H, H, S, T); n += size
        self.L = np.arange(n, n + size).reshape(H, H, S, T); n += size
        self.Q = np.arange(n, n + size).reshape(H, H, S, T); n += size
        self.gamma = n; n += 1
        self.n = n

    def names(self) -> list[str]:
        H, T, S = self.H, self.T, self.S
        out = [None] * self.n
        for i, t in itertools.product(range(H), range(T)):
            out[self.Z[i, t]] = f"Z[{i},{t}]"
            out[self.V[i, t]] = f"V[{i},{t}]"
        for i, j, s, t in itertools.product(range(H), range(H), range(S), range(T)):
            out[self.X[i, j, s, t]] = f"X[{i},{j},{s},{t}]"
            out[self.L[i, j, s, t]] = f"L[{i},{j},{s},{t}]"
            out[self.Q[i, j, s, t]] = f"Q[{i},{j},{s},{t}]"
        out[self.gamma] = "gamma"
        return out

    @property
    def binaries(self) -> np.ndarray:
        return np.concatenate([self.Z.ravel(), self.V.ravel(), self.L.ravel(), self.Q.ravel()])

    def design(self, x: np.ndarray) -> NetworkDesign:
        g = lambda idx: np.asarray(x)[idx]
        return NetworkDesign(np.round(g(self.Z)), np.round(g(self.V)), g(self.X), np.round(g(self.L)),
                             np.round(g(self.Q)), float(x[self.gamma]))


class RowBuilder:
    """Accumulates sparse rows as COO triplets."""

    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []
        self.rel, self.rhs, self.names = [], [], []
        self.m = 0
        self.families: dict[str, int] = {}

    def add(self, cols: np.ndarray, vals: np.ndarray, rel: str, rhs: np.ndarray, family: str) -> None:
        """Add a block of rows: ``cols``/``vals`` shaped (n_rows, k)."""
        cols = np.atleast_2d(cols)
        vals = np.broadcast_to(np.atleast_2d(vals), cols.shape)
        nr = cols.shape[0]
        self.rows.append(np.repeat(np.arange(self.m, self.m + nr), cols.shape[1]))
        self.cols.append(cols.ravel())
        self.vals.append(np.asarray(vals, dtype=float).ravel())
        self.rel.extend([rel] * nr)
        self.rhs.append(np.broadcast_to(np.asarray(rhs, dtype=float), (nr,)).ravel())
        self.names.extend(f"{family}#{k}" for k in range(nr))
        self.families[family] = self.families.get(family, 0) + nr
        self.m += nr

    def matrix(self, n: int):
        if not self.rows:
            return sp.csr_matrix((0, n)), [], np.zeros(0)
        A = sp.csr_matrix((np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
                          shape=(self.m, n))
        A.sum_duplicates()
        return A, self.rel, np.concatenate(self.rhs)


def _product_rows(rb: RowBuilder, lay: Layout) -> None:
    T = lay.T
    # V >= Zprev + Z - 1 and 2V <= Zprev + Z, with Zprev = 0 in the first period
    for t in range(T):
        if t == 0:
            rb.add(np.stack([lay.V[:, 0], lay.Z[:, 0]], 1), [1.0, -1.0], ">=", -1.0, "carry_lo")
        else:
            rb.add(np.stack([lay.V[:, t], lay.Z[:, t - 1], lay.Z[:, t]], 1), [1.0, -1.0, -1.0], ">=", -1.0, "carry_lo")
    for t in range(T):
        if t == 0:
            rb.add(np.stack([lay.V[:, 0], lay.Z[:, 0]], 1), [2.0, -1.0], "<=", 0.0, "carry_hi")
        else:
            rb.add(np.stack([lay.V[:, t], lay.Z[:, t - 1], lay.Z[:, t]], 1), [2.0, -1.0, -1.0], "<=", 0.0, "carry_hi")


def _link_product_rows(rb: RowBuilder, lay: Layout) -> None:
    H, T, S = lay.H, lay.T, lay.S
    Zb = np.broadcast_to(lay.Z[:, None, None, :], (H, H, S, T)).ravel()
    Vb = np.broadcast_to(lay.V[:, None, None, :], (H, H, S, T)).ravel()
    X, L, Q = lay.X.ravel(), lay.L.ravel(), lay.Q.ravel()
    rb.add(np.stack([L, Zb, X], 1), [1.0, -1.0, -1.0], ">=", -1.0, "link_L_lo")
    rb.add(np.stack([L, Zb, X], 1), [2.0, -1.0, -1.0], "<=", 0.0, "link_L_hi")
    rb.add(np.stack([Q, Vb, X], 1), [1.0, -1.0, -1.0], ">=", -1.0, "link_Q_lo")
    rb.add(np.stack([Q, Vb, X], 1), [2.0, -1.0, -1.0], "<=", 0.0, "link_Q_hi")


def _degree_rows(rb: RowBuilder, lay: Layout) -> None:
    H, T, S = lay.H, lay.T, lay.S
    cols, vals = [], []
    for i in range(H):
        others = [j for j in range(H) if j != i]
        c = np.concatenate([lay.X[i, :, :, :].reshape(H, -1), lay.X[others, i, :, :].reshape(H - 1, -1),
                            np.broadcast_to(lay.Z[i][None, :], (S, T)).reshape(1, -1)], axis=0)
        cols.append(c.T)
        vals.append(np.concatenate([np.ones(2 * H - 1), [-1.0]]))
    for i in range(H):
        rb.add(cols[i], vals[i], "<=", 0.0, "degree")


def _assignment_rows(rb: RowBuilder, lay: Layout) -> None:
    cols = lay.X.reshape(lay.H * lay.H, lay.S * lay.T).T
    rb.add(cols, 1.0, "=", 1.0, "assign")


def _risk_rows(rb: RowBuilder, lay: Layout, inst: Instance, best: BestRisk) -> None:
    r = inst.risk
    S = lay.S
    for s in range(S):
        cols = np.concatenate([[lay.gamma], lay.Z.ravel(), lay.V.ravel(), lay.X[:, :, s, :].ravel(),
                               lay.L[:, :, s, :].ravel(), lay.Q[:, :, s, :].ravel()])
        czv = r.coef_zv[:, s, :].ravel()
        vals = np.concatenate([[1.0], -czv, czv, -r.coef_x[:, :, s, :].ravel(),
                               -r.coef_lq[:, :, s, :].ravel(), r.coef_lq[:, :, s, :].ravel()])
        rb.add(cols[None, :], vals[None, :], ">=", r.const[s] - best.psi_star[s], "risk")


@dataclass
class MilpModel:
    mip: MixedIntegerProgram
    layout: Layout
    families: dict[str, int]

    def design(self, x) -> NetworkDesign:
        return self.layout.design(x)


def build_linearized_milp(inst: Instance, best: BestRisk, scaling: ScalingBounds | None = None, *,
                          objective: str = "weighted", drop_risk: bool = False,
                          fixed_V: np.ndarray | None = None, gamma_le: float | None = None,
                          omega_le: float | None = None, names: bool = False) -> MilpModel:
    """Linearized PRH-R as a binary MIP.

    ``objective`` is ``"weighted"`` (normalized weighted sum, needs scaling
    bounds), ``"gamma"`` (max regret alone) or ``"omega"`` (expected cost
    alone).  ``drop_risk`` removes the regret rows (risk-free model).
    ``gamma_le``/``omega_le`` add side constraints used for payoff tables.
    """
    scaling = scaling if scaling is not None else inst.scaling
    H, T, S = inst.H, inst.T, inst.S
    lay = Layout(H, T, S)
    rb = RowBuilder()
    _assignment_rows(rb, lay)
    _degree_rows(rb, lay)
    if not drop_risk:
        _risk_rows(rb, lay, inst, best)
    _product_rows(rb, lay)
    _link_product_rows(rb, lay)

    cost = np.zeros(lay.n)
    cost[lay.Z.ravel()] += inst.fixed_cost.ravel()
    cost[lay.V.ravel()] -= inst.fixed_cost.ravel()
    cost[lay.X.ravel()] += inst.transport_coeff.ravel()
    if omega_le is not None:
        nz = np.flatnonzero(cost)
        rb.add(nz[None, :], cost[nz][None, :], "<=", omega_le, "omega_cap")
    if gamma_le is not None and not drop_risk:
        rb.add(np.array([[lay.gamma]]), [[1.0]], "<=", gamma_le, "gamma_cap")

    c = np.zeros(lay.n)
    offset = 0.0
    if objective == "weighted":
        if scaling is None:
            raise ValueError("weighted objective needs scaling bounds")
        th1 = 0.0 if drop_risk else inst.theta1
        th2 = 1.0 if drop_risk else inst.theta2
        c += th2 * cost / scaling.d_omega
        c[lay.gamma] += th1 / scaling.d_gamma
        offset = -th1 * scaling.gamma_star / scaling.d_gamma - th2 * scaling.omega_star / scaling.d_omega
    elif objective == "gamma":
        c[lay.gamma] = 1.0
    elif objective == "omega":
        c += cost
    else:
        raise ValueError(f"unknown objective {objective!r}")

    lb = np.zeros(lay.n)
    ub = np.ones(lay.n)
    ub[lay.X.ravel()] = np.inf
    ub[lay.gamma] = 0.0 if drop_risk else gamma_cap(inst, best)
    if fixed_V is not None:
        v = np.round(np.asarray(fixed_V, dtype=float)).ravel()
        lb[lay.V.ravel()] = v
        ub[lay.V.ravel()] = v
    A, rel, rhs = rb.matrix(lay.n)
    var_names = lay.names() if names else [f"v{j}" for j in range(lay.n)]
    lp = LinearProgram.from_arrays(c, A, rel, rhs, lb, ub, "min", var_names, rb.names)
    lp.objective_offset = offset
    return MilpModel(MixedIntegerProgram(lp, lay.binaries), lay, dict(rb.families))


# ---------------------------------------------------------------------------
# best risk per scenario
# ---------------------------------------------------------------------------
def _single_scenario(inst: Instance, s: int) -> Instance:
    """The instance restricted to scenario ``s`` with probability kept at p^s
    (risk coefficients are unchanged because the scale is carried over)."""
    sl = slice(s, s + 1)
    sub = Instance(inst.fixed_cost, np.array([1.0]), inst.unit_cost[:, :, sl, :], inst.flow[:, sl, :],
                   inst.pi1[:, sl, :], inst.pi2[:, :, sl, :], inst.pi0_1[sl], inst.pi0_2[sl],
                   inst.theta1, inst.theta2, inst.tau, inst.origin, inst.destination, inst.node_ids,
                   None, inst.risk_scale)
    # keep p^s in the risk coefficients: rebuild them from the parent
    r = inst.risk
    sub.__dict__["risk"] = RiskTerms(r.const[sl], r.coef_zv[:, sl, :], r.coef_x[:, :, sl, :], r.coef_lq[:, :, sl, :])
    return sub


def best_risk_per_scenario(inst: Instance, s: int, method: str = "mip") -> float:
    """``Psi*_s``: minimum linearized risk of scenario ``s`` over all designs.

    ``method="mip"`` solves the single-scenario MILP; ``method="dp"`` runs an
    exact dynamic program over the open-hub set of each period."""
    if method == "dp":
        return _best_risk_dp(inst, s)
    if method != "mip":
        raise ValueError(method)
    sub = _single_scenario(inst, s)
    zero = BestRisk(np.zeros(1))
    model = build_linearized_milp(sub, zero, objective="gamma", drop_risk=True)
    # objective: the risk expression itself (constant added back below)
    r = sub.risk
    lay = model.layout
    c = np.zeros(lay.n)
    c[lay.Z.ravel()] += r.coef_zv[:, 0, :].ravel()
    c[lay.V.ravel()] -= r.coef_zv[:, 0, :].ravel()
    c[lay.X.ravel()] += r.coef_x.ravel()
    c[lay.L.ravel()] += r.coef_lq.ravel()
    c[lay.Q.ravel()] -= r.coef_lq.ravel()
    model.mip.base.set_objective_vector(c, offset=float(r.const[0]))
    sol = solve_mip(model.mip, backend="auto")
    if sol.status != OPTIMAL:
        raise InfeasibleScenario(f"scenario {s}: best-risk problem status {sol.status}")
    return float(sol.objective_value)


def _period_states(H: int) -> np.ndarray:
    codes = np.arange(1, 1 << H)
    return ((codes[:, None] >> np.arange(H)[None, :]) & 1).astype(float)  # non-empty open sets


def _best_risk_dp(inst: Instance, s: int) -> float:
    """Dynamic program over periods; the state is the open-hub set of the period."""
    r = inst.risk
    H, T = inst.H, inst.T
    states = _period_states(H)                                   # [k, i]
    allowed = (states[:, :, None] * states[:, None, :]) > 0      # [k, i, j]
    value = np.zeros(1)
    prevs = np.zeros((1, H))
    for t in range(T):
        best_next = np.full(states.shape[0], np.inf)
        for a, prev in enumerate(prevs):
            V = prev[None, :] * states
            node = (states - V) @ r.coef_zv[:, s, t]
            link = r.coef_x[None, :, :, s, t] + r.coef_lq[None, :, :, s, t] * (1.0 - V)[:, :, None]
            link = np.where(allowed, link, np.inf).reshape(states.shape[0], -1).min(axis=1)
            best_next = np.minimum(best_next, value[a] + node + link)
        value, prevs = best_next, states
    return float(r.const[s] + value.min())


def compute_best_risk(inst: Instance, method: str = "mip") -> BestRisk:
    return BestRisk(np.array([best_risk_per_scenario(inst, s, method) for s in range(inst.S)]))


# ---------------------------------------------------------------------------
# scaling bounds
# ---------------------------------------------------------------------------
def _solve_or_fail(model: MilpModel, what: str, backend: str = "auto"):
    sol = solve_mip(model.mip, backend=backend, rel_gap=1e-9)
    if sol.status != OPTIMAL:
        raise RuntimeError(f"{what}: solver returned {sol.status}")
    return sol


def _lexicographic(inst, best, objective, cap_name, cap, backend, what):
    """Minimize ``objective`` with the other objective capped near its optimum.
    The cap is loosened tenfold (up to three times) if round-off makes it
    infeasible."""
    tol = 1e-6 * (1.0 + abs(cap))
    for _ in range(4):
        sol = solve_mip(build_linearized_milp(inst, best, objective=objective, **{cap_name: cap + tol}).mip,
                        backend=backend, rel_gap=1e-9)
        if sol.status == OPTIMAL:
            return float(sol.objective_value)
        tol *= 10.0
    raise RuntimeError(f"{what}: solver returned {sol.status}")


def estimate_scaling_bounds(inst: Instance, best: BestRisk, backend: str = "auto") -> ScalingBounds:
    """Payoff-table ideal and nadir values of the regret and cost objectives.

    Each single-objective minimum is refined lexicographically (the other
    objective is minimized while the first stays at its optimum), which makes
    the nadir estimate independent of solver tie-breaking."""
    g_sol = _solve_or_fail(build_linearized_milp(inst, best, objective="gamma"), "regret minimization", backend)
    gamma_star = max(0.0, float(g_sol.objective_value))
    omega_max = _lexicographic(inst, best, "omega", "gamma_le", gamma_star, backend, "cost at regret optimum")
    o_sol = _solve_or_fail(build_linearized_milp(inst, best, objective="omega"), "cost minimization", backend)
    omega_star = float(o_sol.objective_value)
    gamma_max = _lexicographic(inst, best, "gamma", "omega_le", omega_star, backend, "regret at cost optimum")
    return pad_bounds(gamma_star, gamma_max, omega_star, omega_max)


def pad_bounds(gamma_star, gamma_max, omega_star, omega_max) -> ScalingBounds:
    gamma_max = max(gamma_max, gamma_star + PAD * (1.0 + abs(gamma_star)))
    omega_max = max(omega_max, omega_star + PAD * (1.0 + abs(omega_star)))
    return ScalingBounds(float(gamma_star), float(gamma_max), float(omega_star), float(omega_max))


# ---------------------------------------------------------------------------
# exact second stage for a fixed hub plan
# ---------------------------------------------------------------------------
def _pareto(cost: np.ndarray, risk: np.ndarray):
    """Indices of the lower-left Pareto front, ordered by increasing cost."""
    order = np.lexsort((risk, cost))
    keep = []
    best = np.inf
    for k in order:
        if risk[k] < best - 1e-12 * (1.0 + abs(best) if np.isfinite(best) else 1.0):
            keep.append(k)
            best = risk[k]
    return np.array(keep, dtype=np.int64)


@dataclass
class SecondStage:
    omega: float
    gamma: float
    cost: float
    X: np.ndarray
    regrets: np.ndarray
    per_scenario_cost: np.ndarray


def second_stage(inst: Instance, Z: np.ndarray, best: BestRisk, scaling: ScalingBounds,
                 theta1: float | None = None, theta2: float | None = None,
                 drop_risk: bool = False) -> SecondStage:
    """Exact optimum over ``X`` (and hence ``L``, ``Q``, ``gamma``) for a fixed hub plan.

    Each scenario's period-by-period link choices are merged into a cost/risk
    Pareto front; the common regret level ``gamma`` is then swept over the
    breakpoints of all fronts."""
    Z = np.round(np.asarray(Z, dtype=float))
    H, T, S = inst.H, inst.T, inst.S
    if np.any(Z.sum(axis=0) < 1):
        raise InfeasibleScenario("every period needs at least one open hub")
    th1 = inst.theta1 if theta1 is None else theta1
    th2 = inst.theta2 if theta2 is None else theta2
    if drop_risk:
        th1, th2 = 0.0, 1.0
    V = carryover(Z)
    r = inst.risk
    K = inst.transport_coeff
    lr = r.link_risk(V)                                        # [i, j, s, t]
    fixed = float(np.sum(inst.fixed_cost * (Z - V)))
    node_part = r.const + np.einsum("ist,it->s", r.coef_zv, Z - V) - best.psi_star   # [s]

    fronts = []
    for s in range(S):
        costs = np.zeros(1)
        risks = np.zeros(1)
        picks = np.zeros((1, 0), dtype=np.int64)
        for t in range(T):
            allowed = np.flatnonzero((Z[:, t][:, None] * Z[:, t][None, :]).ravel() > 0)
            kc = K[:, :, s, t].ravel()[allowed]
            kr = lr[:, :, s, t].ravel()[allowed]
            if drop_risk:
                kr = np.zeros_like(kr)
            idx = _pareto(kc, kr)
            kc, kr, allowed = kc[idx], kr[idx], allowed[idx]
            c2 = (costs[:, None] + kc[None, :]).ravel()
            r2 = (risks[:, None] + kr[None, :]).ravel()
            p2 = np.concatenate([np.repeat(picks, kc.size, axis=0),
                                 np.tile(allowed, costs.size)[:, None]], axis=1)
            keep = _pareto(c2, r2)
            costs, risks, picks = c2[keep], r2[keep], p2[keep]
        fronts.append((costs, risks + node_part[s], picks))

    a = th1 / scaling.d_gamma
    b = th2 / scaling.d_omega
    if a == 0.0:
        choice = [0] * S           # cheapest point of each front
        gamma = max(0.0, max(float(f[1][0]) for f in fronts))
    else:
        floor = max(float(f[1].min()) for f in fronts)
        cand = np.unique(np.concatenate([f[1] for f in fronts]))
        cand = cand[cand >= floor - 1e-12]
        total = np.zeros(cand.size)
        for costs, risks, _ in fronts:
            # fronts are sorted by increasing cost / decreasing risk
            asc = risks[::-1]
            pos = np.searchsorted(asc, cand + 1e-12, side="right") - 1
            total += costs[::-1][pos]
        score = a * np.maximum(cand, 0.0) + b * total
        g = cand[int(np.argmin(score))]
        choice = []
        for costs, risks, _ in fronts:
            ok = np.flatnonzero(risks <= g + 1e-12)
            choice.append(int(ok[np.argmin(costs[ok])]))
        gamma = max(0.0, max(float(fronts[s][1][choice[s]]) for s in range(S)))
    X = np.zeros((H, H, S, T))
    per_cost = np.zeros(S)
    regs = np.zeros(S)
    for s in range(S):
        costs, risks, picks = fronts[s]
        k = choice[s]
        per_cost[s] = costs[k]
        regs[s] = risks[k]
        for t in range(T):
            i, j = divmod(int(picks[k, t]), H)
            X[i, j, s, t] = 1.0
    cost = fixed + float(per_cost.sum())
    omega = a * (gamma - scaling.gamma_star) + b * (cost - scaling.omega_star) if th1 or th2 else 0.0
    return SecondStage(float(omega), float(gamma), cost, X, regs, per_cost)


def enumerate_designs(inst: Instance, best: BestRisk, scaling: ScalingBounds, drop_risk: bool = False):
    """Ground-truth optimum by trying every hub plan ``Z`` (each period non-empty).

    Returns ``(omega, Z, SecondStage)``; ties keep the first plan in
    lexicographic order of the flattened ``Z``."""
    H, T = inst.H, inst.T
    states = _period_states(H)
    best_val, best_Z, best_ss = math.inf, None, None
    for combo in itertools.product(range(states.shape[0]), repeat=T):
        Z = np.stack([states[k] for k in combo], axis=1)
        ss = second_stage(inst, Z, best, scaling, drop_risk=drop_risk)
        if ss.omega < best_val - 1e-12 * (1.0 + abs(best_val) if best_val < math.inf else 1.0):
            best_val, best_Z, best_ss = ss.omega, Z, ss
    return best_val, best_Z, best_ss


def design_from_second_stage(inst: Instance, Z: np.ndarray, ss: SecondStage) -> NetworkDesign:
    return NetworkDesign.from_links(inst, Z, ss.X, gamma=ss.gamma)


__all__ = [
    "Instance", "Scenario", "ScalingBounds", "RiskScale", "BestRisk", "NetworkDesign", "RiskTerms",
    "InfeasibleScenario", "InvalidInstance", "Layout", "MilpModel",
    "normal_cdf", "compute_risk_scale", "carryover", "linearized_risk", "regrets", "risk_regret",
    "expected_cost", "chance_probability", "chance_arguments", "evaluate_objective", "gamma_cap",
    "build_linearized_milp", "best_risk_per_scenario", "compute_best_risk", "estimate_scaling_bounds",
    "pad_bounds", "second_stage", "enumerate_designs", "design_from_second_stage",
]


@dataclass
class ModelContext:
    """An instance with everything the decomposition needs precomputed:
    best per-scenario risk, scaling bounds and the regret cap."""
    inst: Instance
    best: BestRisk
    scaling: ScalingBounds
    gamma_ub: float
    regret_unit: float = 1.0

    @classmethod
    def prepare(cls, inst: Instance, best: BestRisk | None = None, scaling: ScalingBounds | None = None,
                psi_method: str = "dp", normalize_regret: bool = True) -> "ModelContext":
        if best is None:
            best = compute_best_risk(inst, psi_method)
        if scaling is None:
            scaling = inst.scaling if inst.scaling is not None else estimate_scaling_bounds(inst, best)
        if inst.scaling is not scaling:
            inst = inst.with_(scaling=scaling)
        unit = scaling.d_gamma if normalize_regret else 1.0
        return cls(inst, best, scaling, gamma_cap(inst, best), unit)

    def milp(self, **kw) -> MilpModel:
        return build_linearized_milp(self.inst, self.best, self.scaling, **kw)


__all__ += ["ModelContext"]
