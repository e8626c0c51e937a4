"""Benders decomposition of the Lagrangian relaxed problem.

With the assignment and regret rows priced out by multipliers, the relaxed
problem splits into a master over the binaries ``Z, V, L, Q`` (plus the regret
variable ``gamma``) and one small LP in ``X`` per (scenario, period) block:

    min  c~ . X
    s.t. sum_j X_ij + sum_{j != i} X_ji <= Z_i            (u1, degree)
         X_ij <= L_ij - Z_i + 1                          (u2)
        -X_ij <= Z_i - 2 L_ij                            (u3)
         X_ij <= Q_ij - V_i + 1                          (u4)
        -X_ij <= V_i - 2 Q_ij                            (u5)
         X >= 0

Every right-hand side is affine in the block's master variables
``y = (Z_t, V_t, L_st, Q_st)``: ``rhs = M y + r0``.  An optimal dual ``u >= 0``
gives the optimality cut ``eta >= -u . (M y + r0)`` and a Farkas ray gives the
feasibility cut ``0 >= -u . (M y + r0)``.

Four cut strategies are offered.  ``sbd`` adds one aggregated standard cut per
iteration, ``mbd`` one standard cut per block, ``pbd`` one aggregated
Pareto-optimal cut and ``mpbd`` one Pareto-optimal cut per block.  Pareto
duals come from the auxiliary dual problem that maximizes the cut value at a
core point among all optimal duals of the block.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .lp import INFEASIBLE, OPTIMAL, UNBOUNDED, LinearProgram, _solve_arrays
from .mip import MixedIntegerProgram, solve_mip
from .model import ModelContext

log = logging.getLogger(__name__)

STRATEGIES = ("sbd", "mbd", "pbd", "mpbd")
EPS_BD = 0.01
ITER2_MAX = 20
CORE_LAMBDA = 0.5
STALL_ITERS = 5


class UnboundedBlock(RuntimeError):
    pass


class ADPInfeasible(RuntimeError):
    pass


class InconsistentMasterPoint(ValueError):
    pass


@dataclass
class Multipliers:
    d1: np.ndarray   # [s]
    d2: np.ndarray   # [s, t]

    @classmethod
    def zeros(cls, S: int, T: int) -> "Multipliers":
        return cls(np.zeros(S), np.zeros((S, T)))

    def copy(self) -> "Multipliers":
        return Multipliers(self.d1.copy(), self.d2.copy())


@dataclass
class MasterPoint:
    Z: np.ndarray
    V: np.ndarray
    L: np.ndarray
    Q: np.ndarray

    def check(self) -> None:
        Z, V = self.Z, self.V
        prev = np.concatenate([np.zeros((Z.shape[0], 1)), Z[:, :-1]], axis=1)
        if np.any(np.abs(V - prev * Z) > 1e-6):
            raise InconsistentMasterPoint("V is not the carry-over product of consecutive Z")

    def key(self) -> bytes:
        return np.concatenate([a.ravel() for a in (self.Z, self.V, self.L, self.Q)]).round(9).tobytes()


CorePoint = MasterPoint


def update_core_point(core: CorePoint, incumbent: MasterPoint, lam: float = CORE_LAMBDA) -> CorePoint:
    """Convex combination ``lam * core + (1 - lam) * incumbent`` per family."""
    if not 0.0 < lam < 1.0:
        raise ValueError("lambda must lie in (0, 1)")
    mix = lambda a, b: np.clip(lam * a + (1.0 - lam) * b, 0.0, 1.0)
    return CorePoint(mix(core.Z, incumbent.Z), mix(core.V, incumbent.V), mix(core.L, incumbent.L),
                     mix(core.Q, incumbent.Q))


def initial_core_point(mp: MasterPoint, how: str = "interior") -> CorePoint:
    """Starting core point.

    ``"paper"`` puts the hub families at zero and the product families at the
    first master solution.  That point violates ``L <= Z`` once the master
    carries the projected rows, so the default ``"interior"`` starts halfway
    between the first master solution and a strictly interior point."""
    if how == "paper":
        return CorePoint(np.zeros_like(mp.Z), np.zeros_like(mp.V), mp.L.copy(), mp.Q.copy())
    if how != "interior":
        raise ValueError(f"unknown core initialization {how!r}")
    H = mp.Z.shape[0]
    V = np.full_like(mp.V, 0.25)
    V[:, 0] = 0.0
    base = CorePoint(np.full_like(mp.Z, 0.5), V, np.full_like(mp.L, 0.25 / H), np.full_like(mp.Q, 0.125 / H))
    return update_core_point(base, mp, 0.5)


# ---------------------------------------------------------------------------
# Lagrangian objective pieces
# ---------------------------------------------------------------------------
@dataclass
class LrpObjective:
    """Coefficients of the relaxed objective for fixed multipliers."""
    a_zv: np.ndarray     # [i, t]   on Z, minus on V
    c_lq: np.ndarray     # [i, j, s, t] on L, minus on Q
    c_x: np.ndarray      # [i, j, s, t] block costs
    c_gamma: float
    const: float
    gamma_ub: float

    @classmethod
    def build(cls, ctx: ModelContext, d: Multipliers) -> "LrpObjective":
        """Objective for multipliers ``d``.  The regret rows are priced in the
        units of ``ctx.regret_unit`` (row divided by that positive constant)."""
        inst, sb, r = ctx.inst, ctx.scaling, ctx.inst.risk
        th1, th2 = inst.theta1, inst.theta2
        d1 = d.d1 / ctx.regret_unit
        a_zv = th2 * inst.fixed_cost / sb.d_omega + np.einsum("s,ist->it", d1, r.coef_zv)
        c_lq = d1[None, None, :, None] * r.coef_lq
        c_x = (th2 * inst.transport_coeff / sb.d_omega + d1[None, None, :, None] * r.coef_x
               - d.d2[None, None, :, :])
        c_gamma = th1 / sb.d_gamma - float(d1.sum())
        const = (-th1 * sb.gamma_star / sb.d_gamma - th2 * sb.omega_star / sb.d_omega
                 + float(d1 @ (r.const - ctx.best.psi_star)) + float(d.d2.sum()))
        return cls(a_zv, c_lq, c_x, c_gamma, const, ctx.gamma_ub)

    def master_side(self, mp: MasterPoint, gamma: float) -> float:
        return (self.const + float(np.sum(self.a_zv * (mp.Z - mp.V))) + float(np.sum(self.c_lq * (mp.L - mp.Q)))
                + self.c_gamma * gamma)

    def best_gamma(self) -> float:
        return self.gamma_ub if self.c_gamma < 0 else 0.0

    def value(self, mp: MasterPoint, X: np.ndarray, gamma: float) -> float:
        return self.master_side(mp, gamma) + float(np.sum(self.c_x * X))


# ---------------------------------------------------------------------------
# block structure
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class BlockShape:
    """Constraint matrix ``A`` (rows x H^2) and the affine map ``rhs = M y + r0``
    shared by every block of an ``H``-node instance."""
    H: int
    A: np.ndarray
    M: np.ndarray
    r0: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def rhs(self, y: np.ndarray) -> np.ndarray:
        return self.M @ y + self.r0

    def split(self, u: np.ndarray):
        H = self.H
        u1 = u[:H]
        rest = u[H:].reshape(4, H, H)
        return u1, rest[0], rest[1], rest[2], rest[3]


@lru_cache(maxsize=16)
def block_shape(H: int) -> BlockShape:
    n = H * H
    ny = 2 * H + 2 * n
    m = H + 4 * n
    A = np.zeros((m, n))
    M = np.zeros((m, ny))
    r0 = np.zeros(m)
    xi = lambda i, j: i * H + j
    zc = lambda i: i
    vc = lambda i: H + i
    lc = lambda i, j: 2 * H + xi(i, j)
    qc = lambda i, j: 2 * H + n + xi(i, j)
    for i in range(H):
        for j in range(H):
            A[i, xi(i, j)] = 1.0
            if j != i:
                A[i, xi(j, i)] = 1.0
        M[i, zc(i)] = 1.0
    for i in range(H):
        for j in range(H):
            k = xi(i, j)
            r2, r3, r4, r5 = H + k, H + n + k, H + 2 * n + k, H + 3 * n + k
            A[r2, k], M[r2, lc(i, j)], M[r2, zc(i)], r0[r2] = 1.0, 1.0, -1.0, 1.0
            A[r3, k], M[r3, zc(i)], M[r3, lc(i, j)] = -1.0, 1.0, -2.0
            A[r4, k], M[r4, qc(i, j)], M[r4, vc(i)], r0[r4] = 1.0, 1.0, -1.0, 1.0
            A[r5, k], M[r5, vc(i)], M[r5, qc(i, j)] = -1.0, 1.0, -2.0
    for arr in (A, M, r0):
        arr.setflags(write=False)
    return BlockShape(H, A, M, r0)


def block_vector(mp: MasterPoint, s: int, t: int) -> np.ndarray:
    return np.concatenate([mp.Z[:, t], mp.V[:, t], mp.L[:, :, s, t].ravel(), mp.Q[:, :, s, t].ravel()])


def _block_names(H: int):
    var = [f"X[{i},{j}]" for i in range(H) for j in range(H)]
    con = [f"degree[{i}]" for i in range(H)]
    for tag in ("L_lo", "L_hi", "Q_lo", "Q_hi"):
        con += [f"{tag}[{i},{j}]" for i in range(H) for j in range(H)]
    return var, con


def build_slrp(mp: MasterPoint, obj: LrpObjective, block: tuple[int, int] | None = None) -> LinearProgram:
    """Subproblem LP for one block, or for all blocks at once when ``block`` is
    ``None`` (block-diagonal aggregate form)."""
    H, _, S, T = obj.c_x.shape
    shape = block_shape(H)
    blocks = [block] if block is not None else [(s, t) for s in range(S) for t in range(T)]
    nb = len(blocks)
    A = sp.block_diag([shape.A] * nb, format="csr")
    rhs = np.concatenate([shape.rhs(block_vector(mp, s, t)) for s, t in blocks])
    c = np.concatenate([obj.c_x[:, :, s, t].ravel() for s, t in blocks])
    vn, cn = _block_names(H)
    var_names = [f"{v}@{s},{t}" for s, t in blocks for v in vn]
    con_names = [f"{n}@{s},{t}" for s, t in blocks for n in cn]
    # rows whose coefficients are all zero cannot occur: every row touches X
    return LinearProgram.from_arrays(c, A, ["<="] * A.shape[0], rhs, None, None, "min", var_names, con_names)


@dataclass
class BlockResult:
    s: int
    t: int
    feasible: bool
    value: float
    x: np.ndarray | None
    u: np.ndarray          # optimal dual (feasible) or Farkas ray (infeasible)
    y: np.ndarray


def solve_block_dual(mp: MasterPoint, obj: LrpObjective, s: int, t: int) -> BlockResult:
    """Solve one block LP; return its value with the optimal dual, or the
    Farkas ray when the master point leaves the block infeasible."""
    H = obj.c_x.shape[0]
    shape = block_shape(H)
    y = block_vector(mp, s, t)
    rhs = shape.rhs(y)
    m, n = shape.A.shape
    sol = _solve_arrays(obj.c_x[:, :, s, t].ravel(), shape.A, np.full(m, -1), rhs, np.zeros(n),
                        np.full(n, math.inf), "min", _NAMES_CACHE(H)[0], _NAMES_CACHE(H)[1])
    if sol.status == UNBOUNDED:
        raise UnboundedBlock(f"block ({s},{t}) LP is unbounded")
    if sol.status == INFEASIBLE:
        ray = np.maximum(sol.ray, 0.0)
        if not float(ray @ rhs) < 0:
            raise RuntimeError(f"block ({s},{t}) returned a ray that does not certify infeasibility")
        return BlockResult(s, t, False, math.inf, None, ray, y)
    u = np.maximum(sol.duals, 0.0)
    return BlockResult(s, t, True, float(sol.objective_value), sol.x.reshape(H, H), u, y)


@lru_cache(maxsize=16)
def _NAMES_CACHE(H: int):
    return _block_names(H)


def solve_pareto_dual(core: CorePoint, res: BlockResult, obj: LrpObjective) -> np.ndarray | None:
    """Among the optimal duals of the block, one that maximizes the cut value at
    the core point.  Returns ``None`` when that auxiliary problem is unbounded
    (the core point lies beyond a feasibility direction of the block)."""
    H = obj.c_x.shape[0]
    shape = block_shape(H)
    s, t = res.s, res.t
    rhs_mp = shape.rhs(res.y)
    rhs_core = shape.rhs(block_vector(core, s, t))
    m, n = shape.A.shape
    c_block = obj.c_x[:, :, s, t].ravel()
    ustar = res.value
    # variables u >= 0;  rows: A^T u >= -c  and  -rhs_mp . u = U*
    A_rows = [shape.A.T]
    rel = [np.ones(n, dtype=np.int64)]
    b = [-c_block]
    tie = np.abs(rhs_mp) > 0
    for band in (0.0, 1e-6 * (1.0 + abs(ustar))):
        if tie.any():
            if band == 0.0:
                rows = np.vstack(A_rows + [-rhs_mp[None, :]])
                rels = np.concatenate(rel + [[0]])
                rhs = np.concatenate(b + [[ustar]])
            else:
                rows = np.vstack(A_rows + [-rhs_mp[None, :], -rhs_mp[None, :]])
                rels = np.concatenate(rel + [[1, -1]])
                rhs = np.concatenate(b + [[ustar - band, ustar + band]])
        else:
            rows, rels, rhs = A_rows[0], rel[0], b[0]
        sol = _solve_arrays(-rhs_core, rows, rels, rhs, np.zeros(m), np.full(m, math.inf), "max",
                            [f"u{k}" for k in range(m)], [f"r{k}" for k in range(rows.shape[0])])
        if sol.status == OPTIMAL:
            return np.maximum(sol.x, 0.0)
        if sol.status == UNBOUNDED:
            return None
    raise ADPInfeasible(f"auxiliary dual problem of block ({s},{t}) is infeasible even with a tolerance band")


# ---------------------------------------------------------------------------
# cuts and master
# ---------------------------------------------------------------------------
OPTIMALITY = "Optimality"
FEASIBILITY = "Feasibility"


class MasterLayout:
    def __init__(self, H: int, T: int, S: int, multi: bool):
        self.H, self.T, self.S, self.multi = H, T, S, multi
        n = 0
        self.Z = np.arange(n, n + H * T).reshape(H, T); n += H * T
        self.V = np.arange(n, n + H * T).reshape(H, T); n += H * T
        k = H * H * S * T
        self.L = np.arange(n, n + k).reshape(H, H, S, T); n += k
        self.Q = np.arange(n, n + k).reshape(H, H, S, T); n += k
        self.gamma = n; n += 1
        n_eta = S * T if multi else 1
        self.eta = np.arange(n, n + n_eta); n += n_eta
        self.n = n

    def eta_of(self, block) -> int:
        if not self.multi:
            return int(self.eta[0])
        s, t = block
        return int(self.eta[s * self.T + t])

    def y_index(self, s: int, t: int) -> np.ndarray:
        return np.concatenate([self.Z[:, t], self.V[:, t], self.L[:, :, s, t].ravel(), self.Q[:, :, s, t].ravel()])

    def point(self, x: np.ndarray) -> MasterPoint:
        r = lambda idx: np.round(np.asarray(x)[idx])
        return MasterPoint(r(self.Z), r(self.V), r(self.L), r(self.Q))

    def vector(self, mp: MasterPoint) -> np.ndarray:
        v = np.zeros(self.n)
        v[self.Z] = mp.Z
        v[self.V] = mp.V
        v[self.L] = mp.L
        v[self.Q] = mp.Q
        return v

    @property
    def binaries(self) -> np.ndarray:
        return np.arange(0, self.gamma)


@dataclass
class BendersCut:
    """``kind`` cut over master variables: value ``const + coef . v[idx]``.

    Optimality cuts read ``eta >= value``; feasibility cuts read ``0 >= value``."""
    kind: str
    block: tuple | None
    idx: np.ndarray
    coef: np.ndarray
    const: float
    source: str = ""

    def value_at(self, mp: MasterPoint, layout: MasterLayout) -> float:
        return self.const + float(self.coef @ layout.vector(mp)[self.idx])

    def fingerprint(self) -> tuple:
        order = np.argsort(self.idx, kind="stable")
        return (self.kind, self.block, self.idx[order].tobytes(), np.round(self.coef[order], 9).tobytes(),
                round(self.const, 9))


def make_optimality_cut(u: np.ndarray, s: int, t: int, layout: MasterLayout) -> BendersCut:
    shape = block_shape(layout.H)
    coef = -(shape.M.T @ u)
    const = -float(u @ shape.r0)
    return _compact(BendersCut(OPTIMALITY, (s, t), layout.y_index(s, t), coef, const))


def make_feasibility_cut(ray: np.ndarray, s: int, t: int, layout: MasterLayout) -> BendersCut:
    shape = block_shape(layout.H)
    scale = max(1.0, float(np.abs(ray).max()))
    ray = ray / scale
    return _compact(BendersCut(FEASIBILITY, (s, t), layout.y_index(s, t), -(shape.M.T @ ray), -float(ray @ shape.r0)))


def _compact(cut: BendersCut) -> BendersCut:
    keep = np.abs(cut.coef) > 1e-12
    cut.idx, cut.coef = cut.idx[keep], cut.coef[keep]
    return cut


def aggregate_cuts(cuts: list[BendersCut], kind: str) -> BendersCut:
    idx = np.concatenate([c.idx for c in cuts])
    coef = np.concatenate([c.coef for c in cuts])
    uniq, inv = np.unique(idx, return_inverse=True)
    summed = np.bincount(inv, weights=coef, minlength=uniq.size)
    return _compact(BendersCut(kind, None, uniq, summed, float(sum(c.const for c in cuts))))


class CutPool:
    def __init__(self):
        self.cuts: list[BendersCut] = []
        self._seen: set = set()
        self.counts = {OPTIMALITY: 0, FEASIBILITY: 0}
        self.per_block: dict = {}

    def add(self, cut: BendersCut) -> bool:
        fp = cut.fingerprint()
        if fp in self._seen:
            return False
        self._seen.add(fp)
        self.cuts.append(cut)
        self.counts[cut.kind] += 1
        self.per_block[cut.block] = self.per_block.get(cut.block, 0) + 1
        return True

    def __len__(self):
        return len(self.cuts)


def eta_floor(obj: LrpObjective, multi: bool) -> np.ndarray:
    per_block = -(1.0 + np.abs(obj.c_x).sum(axis=(0, 1)))      # [s, t]
    return per_block.ravel() if multi else np.array([per_block.sum()])


MASTER_ROWS = ("carry", "bounds", "linked", "projection")


def master_build(pool: CutPool, obj: LrpObjective, layout: MasterLayout,
                 master_rows: str = "projection") -> MixedIntegerProgram:
    """Restricted master: carry-over rows, every pooled cut, objective of the
    relaxed problem with one surrogate per block (or a single one).

    ``master_rows`` adds inequalities implied by the subproblem rows once
    ``0 <= X <= 1`` is projected out: ``"bounds"`` adds ``L <= Z_i`` and
    ``Q <= V_i``; ``"linked"`` also ``Q <= L`` and ``Q >= V_i + L - 1``;
    ``"projection"`` also the degree rows written in ``L``."""
    if master_rows not in MASTER_ROWS:
        raise ValueError(f"master_rows must be one of {MASTER_ROWS}")
    H, T = layout.H, layout.T
    c = np.zeros(layout.n)
    c[layout.Z] = obj.a_zv
    c[layout.V] = -obj.a_zv
    c[layout.L] = obj.c_lq
    c[layout.Q] = -obj.c_lq
    c[layout.gamma] = obj.c_gamma
    c[layout.eta] = 1.0
    lb = np.zeros(layout.n)
    ub = np.ones(layout.n)
    ub[layout.gamma] = obj.gamma_ub
    lb[layout.eta] = eta_floor(obj, layout.multi)
    ub[layout.eta] = math.inf

    rows, cols, vals, rel, rhs = [], [], [], [], []
    r = 0

    def add_row(ci, vi, relation, b):
        nonlocal r
        rows.append(np.full(len(ci), r))
        cols.append(np.asarray(ci))
        vals.append(np.asarray(vi, dtype=float))
        rel.append(relation)
        rhs.append(b)
        r += 1

    for i in range(H):
        for t in range(T):
            if t == 0:
                add_row([layout.V[i, 0], layout.Z[i, 0]], [1.0, -1.0], 1, -1.0)
                add_row([layout.V[i, 0], layout.Z[i, 0]], [2.0, -1.0], -1, 0.0)
            else:
                zc = [layout.V[i, t], layout.Z[i, t - 1], layout.Z[i, t]]
                add_row(zc, [1.0, -1.0, -1.0], 1, -1.0)
                add_row(zc, [2.0, -1.0, -1.0], -1, 0.0)
    level = MASTER_ROWS.index(master_rows)
    S = layout.S
    if level >= 1:
        Zb = np.broadcast_to(layout.Z[:, None, None, :], layout.L.shape).ravel()
        Vb = np.broadcast_to(layout.V[:, None, None, :], layout.L.shape).ravel()
        for l, q, z, v in zip(layout.L.ravel(), layout.Q.ravel(), Zb, Vb):
            add_row([l, z], [1.0, -1.0], -1, 0.0)
            add_row([q, v], [1.0, -1.0], -1, 0.0)
            if level >= 2:
                add_row([q, l], [1.0, -1.0], -1, 0.0)
                add_row([q, v, l], [1.0, -1.0, -1.0], 1, -1.0)
    if level >= 3:
        for s in range(S):
            for t in range(T):
                for i in range(H):
                    ci = [layout.L[i, j, s, t] for j in range(H)] + [layout.L[j, i, s, t] for j in range(H) if j != i]
                    add_row(ci + [layout.Z[i, t]], [1.0] * len(ci) + [-1.0], -1, 0.0)
    for cut in pool.cuts:
        if cut.kind == OPTIMALITY:
            e = layout.eta_of(cut.block) if cut.block is not None else layout.eta_of(None)
            add_row(np.concatenate([[e], cut.idx]), np.concatenate([[1.0], -cut.coef]), 1, cut.const)
        elif cut.idx.size:
            add_row(cut.idx, cut.coef, -1, -cut.const)
        elif cut.const > 1e-9:
            raise RuntimeError("a constant feasibility cut proves the relaxed problem infeasible")
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(r, layout.n))
    lp = LinearProgram.from_arrays(c, A, rel, np.array(rhs), lb, ub, "min",
                                   [f"m{j}" for j in range(layout.n)], [f"c{k}" for k in range(r)])
    lp.objective_offset = obj.const
    return MixedIntegerProgram(lp, layout.binaries)


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------
@dataclass
class BendersConfig:
    strategy: str = "mpbd"
    eps_bd: float = EPS_BD
    iter2_max: int = ITER2_MAX
    core_lambda: float = CORE_LAMBDA
    master_backend: str = "highs"
    master_gap: float = 1e-9
    master_rows: str = "projection"
    core_init: str = "interior"
    time_limit: float | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if not self.eps_bd > 0:
            raise ValueError("eps_bd must be positive")


@dataclass
class BdReport:
    strategy: str
    lb: float
    ub: float
    gap: float
    iterations: int
    converged: bool
    stalled: bool
    point: MasterPoint | None
    X: np.ndarray | None
    gamma: float
    cuts_optimality: int
    cuts_feasibility: int
    lp_solves: int
    master_nodes: int
    trace: list[dict] = field(default_factory=list)
    wall: float = 0.0
    limit_reached: bool = False

    @property
    def cuts(self) -> int:
        return self.cuts_optimality + self.cuts_feasibility


def relative_gap(ub: float, lb: float) -> float:
    if not math.isfinite(ub):
        return math.inf
    return (ub - lb) / max(1.0, abs(ub))


def evaluate_point(mp: MasterPoint, obj: LrpObjective) -> tuple[list[BlockResult], float]:
    """Solve every block at ``mp``; the relaxed objective (inf if any block is infeasible)."""
    H, _, S, T = obj.c_x.shape
    results = [solve_block_dual(mp, obj, s, t) for s in range(S) for t in range(T)]
    if all(r.feasible for r in results):
        total = sum(r.value for r in results)
    else:
        total = math.inf
    return results, total


def run_benders(ctx: ModelContext, d: Multipliers, config: BendersConfig | None = None,
                obj: LrpObjective | None = None) -> BdReport:
    """Inner decomposition loop for fixed multipliers."""
    cfg = config or BendersConfig()
    obj = obj or LrpObjective.build(ctx, d)
    inst = ctx.inst
    H, T, S = inst.H, inst.T, inst.S
    multi = cfg.strategy in ("mbd", "mpbd")
    pareto = cfg.strategy in ("pbd", "mpbd")
    layout = MasterLayout(H, T, S, multi)
    pool = CutPool()
    start = time.monotonic()

    lb, ub = -math.inf, math.inf
    best_point, best_X, best_gamma = None, None, 0.0
    core = None
    trace = []
    lp_solves = 0
    nodes = 0
    stall = 0
    stalled = False
    converged = False
    limit = False
    visited: dict[bytes, float] = {}
    it = 0
    while True:
        master = master_build(pool, obj, layout, cfg.master_rows)
        msol = solve_mip(master, backend=cfg.master_backend, rel_gap=cfg.master_gap)
        nodes += msol.nodes_explored
        if msol.status not in (OPTIMAL, "LimitReached"):
            raise RuntimeError(f"master problem status {msol.status}")
        new_lb = max(lb, float(msol.best_bound))
        mp = layout.point(msol.x)
        gamma = float(msol.x[layout.gamma])
        if it >= 1 and relative_gap(ub, new_lb) <= cfg.eps_bd:
            lb = new_lb
            converged = True
            trace.append(_trace_row(it, lb, ub, 0, len(pool), cfg.strategy, start))
            break
        if it >= cfg.iter2_max or (cfg.time_limit is not None and time.monotonic() - start > cfg.time_limit):
            lb = new_lb
            limit = it < cfg.iter2_max
            break
        it += 1
        prev_lb, prev_ub = lb, ub
        lb = new_lb
        if core is None:
            core = initial_core_point(mp, cfg.core_init)
        results, block_total = evaluate_point(mp, obj)
        lp_solves += len(results)
        if math.isfinite(block_total):
            val = obj.master_side(mp, gamma) + block_total
            visited[mp.key()] = val
            if val < ub:
                ub = val
                best_point, best_gamma = mp, gamma
                best_X = np.zeros((H, H, S, T))
                for res in results:
                    best_X[:, :, res.s, res.t] = res.x
        feas = [make_feasibility_cut(r.u, r.s, r.t, layout) for r in results if not r.feasible]
        new_cuts = []
        if feas:
            new_cuts += feas if multi else [aggregate_cuts(feas, FEASIBILITY)]
        opt = []
        for res in results:
            if not res.feasible:
                continue
            u = res.u
            if pareto:
                try:
                    up = solve_pareto_dual(core, res, obj)
                    lp_solves += 1
                except ADPInfeasible as exc:
                    log.debug("%s; using the standard dual", exc)
                    up = None
                if up is not None:
                    u = up
            opt.append(make_optimality_cut(u, res.s, res.t, layout))
        if multi:
            new_cuts += opt
        elif not feas:
            new_cuts.append(aggregate_cuts(opt, OPTIMALITY))
        added = sum(pool.add(c) for c in new_cuts)
        if pareto:
            core = update_core_point(core, mp, cfg.core_lambda)
        trace.append(_trace_row(it, lb, ub, added, len(pool), cfg.strategy, start))
        if added == 0 and lb == prev_lb and ub == prev_ub:
            stall += 1
            if stall >= STALL_ITERS:
                stalled = True
                break
        else:
            stall = 0

    return BdReport(cfg.strategy, lb, ub, relative_gap(ub, lb), it, converged, stalled, best_point, best_X,
                    best_gamma, pool.counts[OPTIMALITY], pool.counts[FEASIBILITY], lp_solves, nodes, trace,
                    time.monotonic() - start, limit)


def _trace_row(it, lb, ub, added, total, strategy, start) -> dict:
    return {"it_BD": it, "LB_BD": lb, "UB_BD": ub, "gap": relative_gap(ub, lb), "cuts_added": added,
            "cuts_total": total, "strategy": strategy, "wall_ms": 1000.0 * (time.monotonic() - start)}


__all__ = ["Multipliers", "MasterPoint", "CorePoint", "LrpObjective", "BlockShape", "BlockResult", "BendersCut",
           "CutPool", "MasterLayout", "BendersConfig", "BdReport", "STRATEGIES", "block_shape", "block_vector",
           "build_slrp", "solve_block_dual", "solve_pareto_dual", "make_optimality_cut", "make_feasibility_cut",
           "aggregate_cuts", "master_build", "update_core_point", "run_benders", "evaluate_point", "eta_floor",
           "relative_gap", "UnboundedBlock", "ADPInfeasible", "InconsistentMasterPoint"]
