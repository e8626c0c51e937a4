import math
import types

import numpy as np
import pytest
from scipy.optimize import linprog

from conftest import binary_points, tiny_instance
from prhr.benders import (STRATEGIES, BendersConfig, CutPool, LrpObjective, MasterLayout, MasterPoint, Multipliers,
                          aggregate_cuts, block_shape, block_vector, build_slrp, initial_core_point,
                          make_optimality_cut,
                          master_build, run_benders, solve_block_dual, solve_pareto_dual, update_core_point)
from prhr.lagrangian import build_lrp, solve_lrp_direct
from prhr.lp import solve_lp
from prhr.model import ModelContext


@pytest.fixture(scope="module")
def h2_ctx():
    return ModelContext.prepare(tiny_instance(seed=2, H=2, T=1, S=1))


def test_block_lp_matches_generic_solver(tiny_ctx):
    d = Multipliers(np.array([0.4, 0.2]), np.full((2, 2), 0.3))
    obj = LrpObjective.build(tiny_ctx, d)
    rng = np.random.default_rng(3)
    for _ in range(5):
        Z = np.ones((3, 2))
        L = (rng.random((3, 3, 2, 2)) < 0.3).astype(float)
        mp = MasterPoint(Z, np.concatenate([np.zeros((3, 1)), Z[:, :1]], axis=1), L, np.zeros_like(L))
        for s in range(2):
            for t in range(2):
                res = solve_block_dual(mp, obj, s, t)
                ref = solve_lp(build_slrp(mp, obj, (s, t)))
                if res.feasible:
                    assert ref.status == "Optimal"
                    assert res.value == pytest.approx(ref.objective_value, abs=1e-8)
                else:
                    assert ref.status == "Infeasible"


def test_cuts_valid_and_tight_on_two_nodes(h2_ctx):
    layout = MasterLayout(2, 1, 1, True)
    pts = binary_points(2)
    rng = np.random.default_rng(0)
    for _ in range(2):
        obj = LrpObjective.build(h2_ctx, Multipliers(rng.uniform(0, 2, 1), rng.uniform(0, 3, (1, 1))))
        vals = np.array([(lambda r: r.value if r.feasible else math.inf)(solve_block_dual(p, obj, 0, 0))
                         for p in pts])
        for g in pts[::7]:
            r = solve_block_dual(g, obj, 0, 0)
            if not r.feasible:
                continue
            cut = make_optimality_cut(r.u, 0, 0, layout)
            assert cut.value_at(g, layout) == pytest.approx(r.value, abs=1e-6)
            under = np.array([cut.value_at(p, layout) for p in pts])
            assert np.all(under <= vals + 1e-6)


def _interior_core(g):
    return initial_core_point(g, "interior")


def test_pareto_cut_on_symmetric_arcs():
    """Two nodes, both hubs open, both inter-hub arcs linked at equal cost:
    the block has several optimal duals and the Pareto one is at least as
    strong at the core point."""
    H = 2
    layout = MasterLayout(H, 1, 1, True)
    c = np.array([[0.0, -1.0], [-1.0, 0.0]])
    obj = types.SimpleNamespace(c_x=c.reshape(H, H, 1, 1))
    L = np.array([[0.0, 1.0], [0.0, 0.0]])
    g = MasterPoint(np.ones((H, 1)), np.zeros((H, 1)), L.reshape(H, H, 1, 1), np.zeros((H, H, 1, 1)))
    res = solve_block_dual(g, obj, 0, 0)
    core = _interior_core(g)
    up = solve_pareto_dual(core, res, obj)
    std = make_optimality_cut(res.u, 0, 0, layout)
    par = make_optimality_cut(up, 0, 0, layout)
    assert par.value_at(g, layout) == pytest.approx(res.value, abs=1e-8)
    assert par.value_at(core, layout) >= std.value_at(core, layout) - 1e-9


def dominating_dual_exists(res, c_block, R, tol=1e-7):
    """Is some other optimal dual of the block at least as strong at every row
    of ``R`` (right-hand sides per point) and stronger somewhere?"""
    shape = block_shape(int(math.isqrt(c_block.size)))
    rhs_g = shape.rhs(res.y)
    A_ub = np.vstack([-shape.A.T, R])
    b_ub = np.concatenate([c_block, R @ res.u])
    lp = linprog(R.sum(axis=0), A_ub=A_ub, b_ub=b_ub, A_eq=-rhs_g[None, :], b_eq=[res.value],
                 bounds=(0, None), method="highs")
    return lp.status == 0 and float(-(lp.x - res.u) @ R.sum(axis=0)) > tol


def test_pareto_cut_is_valid_and_undominated(h2_ctx):
    layout = MasterLayout(2, 1, 1, True)
    pts = binary_points(2, feasible_only=True)
    shape = block_shape(2)
    R = np.array([shape.rhs(block_vector(p, 0, 0)) for p in pts])
    rng = np.random.default_rng(5)
    differing = 0
    for _ in range(6):
        c = rng.integers(-2, 3, (2, 2)).astype(float)
        obj = types.SimpleNamespace(c_x=c.reshape(2, 2, 1, 1))
        vals = np.array([(lambda r: r.value if r.feasible else math.inf)(solve_block_dual(p, obj, 0, 0))
                         for p in pts])
        for g in pts:
            res = solve_block_dual(g, obj, 0, 0)
            if not res.feasible:
                continue
            core = _interior_core(g)
            up = solve_pareto_dual(core, res, obj)
            if up is None:
                continue
            par = make_optimality_cut(up, 0, 0, layout)
            std = make_optimality_cut(res.u, 0, 0, layout)
            assert np.all([par.value_at(p, layout) <= v + 1e-6 for p, v in zip(pts, vals)])
            assert par.value_at(core, layout) >= std.value_at(core, layout) - 1e-9
            pres = type(res)(0, 0, True, res.value, res.x, up, res.y)
            assert not dominating_dual_exists(pres, c.ravel(), R)
            differing += not np.allclose(up, res.u)
    assert differing > 0


def test_unique_dual_gives_identical_cut(h2_ctx):
    obj = types.SimpleNamespace(c_x=np.array([[1.0, 2.0], [3.0, 1.5]]).reshape(2, 2, 1, 1))
    g = MasterPoint(np.ones((2, 1)), np.zeros((2, 1)), np.zeros((2, 2, 1, 1)), np.zeros((2, 2, 1, 1)))
    res = solve_block_dual(g, obj, 0, 0)
    up = solve_pareto_dual(_interior_core(g), res, obj)
    # positive costs, all flows at zero: the block value is 0 and any dual is
    # zero on the tight rows, so both cuts are the zero cut at the generator
    layout = MasterLayout(2, 1, 1, True)
    assert make_optimality_cut(up, 0, 0, layout).value_at(g, layout) == pytest.approx(0.0, abs=1e-9)


def test_core_point_update_is_convex_combination():
    a = MasterPoint(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2, 1, 2)), np.zeros((2, 2, 1, 2)))
    b = MasterPoint(np.ones((2, 2)), np.ones((2, 2)), np.ones((2, 2, 1, 2)), np.ones((2, 2, 1, 2)))
    c = update_core_point(a, b, 0.5)
    assert np.all(c.Z == 0.5) and np.all(c.Q == 0.5)
    c = update_core_point(c, b, 0.5)
    assert np.all(c.L == 0.75)
    with pytest.raises(ValueError):
        update_core_point(a, b, 1.0)
    core = initial_core_point(b, "paper")
    assert np.all(core.Z == 0) and np.all(core.L == 1)


def test_aggregate_cut_sums_blocks(tiny_ctx):
    layout = MasterLayout(3, 2, 2, False)
    obj = LrpObjective.build(tiny_ctx, Multipliers.zeros(2, 2))
    Z = np.ones((3, 2))
    mp = MasterPoint(Z, np.array([[0, 1]] * 3, float), np.zeros((3, 3, 2, 2)), np.zeros((3, 3, 2, 2)))
    res = [solve_block_dual(mp, obj, s, t) for s in range(2) for t in range(2)]
    cuts = [make_optimality_cut(r.u, r.s, r.t, layout) for r in res]
    agg = aggregate_cuts(cuts, "Optimality")
    assert agg.value_at(mp, layout) == pytest.approx(sum(r.value for r in res), abs=1e-8)


def test_master_rows_option_validated(tiny_ctx):
    obj = LrpObjective.build(tiny_ctx, Multipliers.zeros(2, 2))
    with pytest.raises(ValueError):
        master_build(CutPool(), obj, MasterLayout(3, 2, 2, True), "everything")
    with pytest.raises(ValueError):
        BendersConfig(strategy="fast")


@pytest.mark.parametrize("strategy", STRATEGIES)
def test_strategies_bracket_relaxed_optimum(tiny_ctx, strategy):
    d = Multipliers(np.array([0.3, 0.6]), np.array([[0.2, 0.1], [0.4, 0.0]]))
    exact = solve_lrp_direct(build_lrp(tiny_ctx, d)).lb
    rep = run_benders(tiny_ctx, d, BendersConfig(strategy=strategy))
    assert rep.converged
    assert rep.lb <= exact + 1e-7
    assert rep.ub >= exact - 1e-7
    assert rep.gap <= 0.01 + 1e-12
    gaps = [r["UB_BD"] for r in rep.trace]
    assert np.all(np.diff(gaps) <= 1e-12)       # best upper bound never worsens
    multi = strategy in ("mbd", "mpbd")
    assert rep.cuts_optimality >= (4 if multi else 1)
