import numpy as np
import pytest

from prhr.lp import LinearProgram
from prhr.mip import (LIMIT_REACHED, MixedIntegerProgram, NoIncumbentFound, TooManyBinaries,
                      enumerate_binary_optimum, solve_mip)


def knapsack():
    values = np.array([10.0, 13.0, 7.0, 8.0])
    weights = np.array([[4.0, 6.0, 3.0, 5.0]])
    lp = LinearProgram.from_arrays(values, weights, ["<="], [10.0], ub=np.ones(4), sense="max")
    return MixedIntegerProgram(lp, range(4))


def random_mip(rng):
    nb, nc = rng.integers(1, 11), rng.integers(0, 5)
    n, m = nb + nc, rng.integers(1, 9)
    A = rng.integers(-5, 6, (m, n)).astype(float)
    for i in range(m):
        if not A[i].any():
            A[i, 0] = 1.0
    rel = rng.choice(["<=", ">=", "="], m, p=[0.6, 0.3, 0.1])
    b = rng.integers(-5, 10, m).astype(float)
    c = rng.integers(-9, 10, n).astype(float)
    ub = np.r_[np.ones(nb), rng.integers(1, 5, nc)]
    return MixedIntegerProgram(LinearProgram.from_arrays(c, A, rel, b, None, ub), range(nb))


def test_knapsack_all_engines_agree():
    p = knapsack()
    for sol in (solve_mip(p), solve_mip(p, backend="highs"), enumerate_binary_optimum(p)):
        assert sol.objective_value == pytest.approx(23.0)     # items 1 and 3 (weight 9)


def test_bound_trace_monotone_and_limits():
    p = knapsack()
    sol = solve_mip(p)
    assert np.all(np.diff(sol.bound_trace) <= 1e-9)           # max problem: bounds never rise
    with pytest.raises(TooManyBinaries):
        lp = LinearProgram.from_arrays(np.ones(25), np.ones((1, 25)), ["<="], [3.0], ub=np.ones(25))
        enumerate_binary_optimum(MixedIntegerProgram(lp, range(25)))


def test_node_limit_reports_limit_or_no_incumbent():
    rng = np.random.default_rng(3)
    n = 14
    c = -rng.integers(5, 30, n).astype(float)
    A = rng.integers(3, 20, (2, n)).astype(float)
    lp = LinearProgram.from_arrays(c, A, ["<=", "<="], [40.0, 45.0], ub=np.ones(n))
    p = MixedIntegerProgram(lp, range(n))
    try:
        sol = solve_mip(p, node_limit=2)
    except NoIncumbentFound:
        return
    exact = enumerate_binary_optimum(p).objective_value
    assert sol.best_bound <= exact + 1e-9 <= sol.objective_value + 2e-9
    if sol.status != LIMIT_REACHED:
        assert sol.objective_value == pytest.approx(exact)


def test_non_binary_bounds_rejected():
    lp = LinearProgram.from_arrays([1.0], np.ones((1, 1)), ["<="], [3.0], ub=[3.0])
    with pytest.raises(ValueError):
        MixedIntegerProgram(lp, [0])


@pytest.mark.parametrize("seed", range(2))
def test_random_corpus_matches_enumeration(seed):
    rng = np.random.default_rng(seed + 100)
    for _ in range(15):
        p = random_mip(rng)
        bnb, enum, highs = solve_mip(p), enumerate_binary_optimum(p), solve_mip(p, backend="highs")
        assert bnb.status == enum.status == highs.status
        if enum.status == "Optimal":
            assert bnb.objective_value == pytest.approx(enum.objective_value, abs=1e-6)
            assert highs.objective_value == pytest.approx(enum.objective_value, abs=1e-6)
