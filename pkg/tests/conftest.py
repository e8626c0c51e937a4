"""Shared fixtures and the acceptance report printed at the end of the run."""
from __future__ import annotations

import pytest

from prhr.instances import GeneratorParams, generate_instance
from prhr.model import ModelContext

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"ACCEPTANCE {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


def tiny_instance(seed: int = 1, H: int = 3, T: int = 2, S: int = 2, **kw):
    return generate_instance(GeneratorParams(n_nodes=H, n_periods=T, n_scenarios=S, seed=seed, **kw))


@pytest.fixture(scope="session")
def tiny_ctx():
    """Seed-1 instance with 3 nodes, 2 periods and 2 scenarios, fully prepared."""
    return ModelContext.prepare(tiny_instance())


@pytest.fixture(scope="session")
def two_node_ctx():
    return ModelContext.prepare(tiny_instance(seed=4, H=2, T=2, S=2))


def binary_points(H: int = 2, feasible_only: bool = False):
    """Every binary single-period, single-scenario master point on ``H`` nodes.

    With ``feasible_only`` the points must satisfy the rows the restricted
    master always carries (``L <= Z`` and the degree rows written in ``L``)."""
    import itertools

    import numpy as np

    from prhr.benders import MasterPoint

    pts = []
    for bits in itertools.product([0.0, 1.0], repeat=2 * H + 2 * H * H):
        b = np.array(bits)
        Z, V = b[:H], b[H:2 * H]
        L, Q = b[2 * H:2 * H + H * H].reshape(H, H), b[2 * H + H * H:].reshape(H, H)
        if feasible_only:
            if V.any() or Q.any() or np.any(L > Z[:, None]):
                continue
            if any(L[i].sum() + L[:, i].sum() - L[i, i] > Z[i] for i in range(H)):
                continue
        pts.append(MasterPoint(Z.reshape(H, 1), V.reshape(H, 1), L.reshape(H, H, 1, 1), Q.reshape(H, H, 1, 1)))
    return pts
