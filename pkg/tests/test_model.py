import itertools

import numpy as np
import pytest
from scipy.special import ndtr

from prhr.mip import enumerate_binary_optimum, solve_mip
from prhr.model import (InvalidInstance, ModelContext, NetworkDesign, build_linearized_milp, carryover,
                        compute_best_risk, enumerate_designs, evaluate_objective, expected_cost, gamma_cap,
                        linearized_risk, normal_cdf, regrets, second_stage)

from conftest import tiny_instance


def test_family_counts_smallest_case():
    inst = tiny_instance(H=2, T=1, S=1)
    m = build_linearized_milp(inst, compute_best_risk(inst, "dp"), objective="gamma")
    f = m.families
    assert f["assign"] == 1 and f["degree"] == 2 and f["risk"] == 1
    assert f["carry_lo"] + f["carry_hi"] == 2 * 2
    assert f["link_L_lo"] + f["link_L_hi"] == 2 * 4
    assert f["link_Q_lo"] + f["link_Q_hi"] == 2 * 4


@pytest.mark.parametrize("H,T,S", [(2, 1, 1), (3, 2, 2), (4, 3, 2)])
def test_family_counts_closed_form(H, T, S):
    inst = tiny_instance(H=H, T=T, S=S)
    m = build_linearized_milp(inst, compute_best_risk(inst, "dp"), objective="gamma")
    f = m.families
    assert f["assign"] == S * T
    assert f["degree"] == H * S * T
    assert f["risk"] == S
    assert f["carry_lo"] == f["carry_hi"] == H * T
    assert f["link_L_lo"] == f["link_Q_hi"] == H * H * S * T
    assert m.layout.n == 2 * H * T + 3 * H * H * S * T + 1


def test_normal_cdf_matches_reference():
    x = np.linspace(-8, 8, 401)
    assert np.max(np.abs(normal_cdf(x) - ndtr(x))) < 1e-12
    assert normal_cdf(0.0) == pytest.approx(0.5)


def test_carryover_is_consecutive_product():
    Z = np.array([[1, 1, 0, 1], [0, 1, 1, 1]], dtype=float)
    assert carryover(Z).tolist() == [[0, 1, 0, 0], [0, 0, 1, 1]]


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_best_risk_dp_matches_mip(seed):
    inst = tiny_instance(seed=seed, H=3, T=2, S=2)
    assert compute_best_risk(inst, "dp").psi_star == pytest.approx(compute_best_risk(inst, "mip").psi_star,
                                                                  abs=1e-7)


def test_regret_nonnegative_at_every_design(two_node_ctx):
    ctx = two_node_ctx
    inst = ctx.inst
    for bits in itertools.product([0, 1], repeat=inst.H * inst.T):
        Z = np.array(bits, dtype=float).reshape(inst.H, inst.T)
        if np.any(Z.sum(axis=0) < 1):
            continue
        ss = second_stage(inst, Z, ctx.best, ctx.scaling)
        assert np.all(ss.regrets >= -1e-9)
        assert ss.gamma <= ctx.gamma_ub


def test_second_stage_matches_fixed_plan_milp(tiny_ctx):
    ctx = tiny_ctx
    inst = ctx.inst
    Z = np.array([[1, 1], [0, 1], [1, 0]], dtype=float)
    ss = second_stage(inst, Z, ctx.best, ctx.scaling)
    model = ctx.milp()
    for idx, z in zip(model.layout.Z.ravel(), Z.ravel()):
        model.mip.base.set_bounds(int(idx), z, z)
    sol = solve_mip(model.mip, backend="highs", rel_gap=1e-10)
    assert sol.objective_value == pytest.approx(ss.omega, abs=1e-7)
    design = NetworkDesign.from_links(inst, Z, ss.X, gamma=ss.gamma)
    assert evaluate_objective(design, inst, ctx.scaling) == pytest.approx(ss.omega, abs=1e-9)
    assert np.max(regrets(design, inst, ctx.best)) <= ss.gamma + 1e-9


@pytest.mark.parametrize("seed,S", [(2, 1), (5, 1)])
def test_design_enumeration_matches_full_milp_enumeration(seed, S):
    inst = tiny_instance(seed=seed, H=2, T=1, S=S)
    ctx = ModelContext.prepare(inst)
    omega, _, _ = enumerate_designs(ctx.inst, ctx.best, ctx.scaling)
    full = enumerate_binary_optimum(ctx.milp().mip)
    assert full.objective_value == pytest.approx(omega, abs=1e-7)


def test_scaling_bounds_bracket_objectives(tiny_ctx):
    sc = tiny_ctx.scaling
    assert sc.gamma_max > sc.gamma_star >= 0.0
    assert sc.omega_max > sc.omega_star > 0.0
    omega, Z, ss = enumerate_designs(tiny_ctx.inst, tiny_ctx.best, sc)
    assert sc.omega_star <= ss.cost + 1e-6
    assert sc.gamma_star <= ss.gamma + 1e-6


def test_linearized_risk_uses_products(tiny_ctx):
    inst = tiny_ctx.inst
    Z = np.ones((inst.H, inst.T))
    X = np.zeros((inst.H, inst.H, inst.S, inst.T))
    X[0, 1] = 1.0
    d = NetworkDesign.from_links(inst, Z, X)
    r = inst.risk
    manual = (r.const + np.einsum("ist,it->s", r.coef_zv, d.Z - d.V)
              + np.einsum("ijst->s", (r.coef_x + r.coef_lq * (1 - d.V)[:, None, None, :]) * X))
    assert linearized_risk(d, inst) == pytest.approx(manual)
    assert expected_cost(d, inst) > 0


def test_invalid_instances_rejected():
    inst = tiny_instance()
    with pytest.raises(InvalidInstance):
        inst.with_(prob=inst.prob * 0.9)
    with pytest.raises(InvalidInstance):
        inst.with_(theta1=0.7, theta2=0.7)
    with pytest.raises(InvalidInstance):
        inst.with_(fixed_cost=-inst.fixed_cost)
    with pytest.raises(InvalidInstance):
        inst.with_(risk_weight=0.0)


def test_gamma_cap_is_an_upper_bound(tiny_ctx):
    ctx = tiny_ctx
    _, _, ss = enumerate_designs(ctx.inst, ctx.best, ctx.scaling)
    assert gamma_cap(ctx.inst, ctx.best) >= ss.gamma


def test_risk_weight_replaces_probability_in_risk_only():
    inst = tiny_instance(S=2)
    w = inst.with_(risk_weight=0.25)
    assert np.allclose(w.transport_coeff, inst.transport_coeff)
    assert np.allclose(w.risk.coef_zv, 0.5 * inst.risk.coef_zv)
    assert np.allclose(w.risk.const, inst.risk.const)
