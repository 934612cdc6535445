import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hydrosched.model import Scenario

settings.register_profile(
    "repo", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("tests.test_acceptance")
    lines = getattr(module, "ACCEPTANCE_LINES", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip("]"))):
            terminalreporter.write_line(line)


def golden() -> Scenario:
    """Full SC at t=0 and a second full charge at t=1 force a transfer."""
    return Scenario.from_lengths([1.0, 10.0], [10.0], e_max=10.0, eta=0.9, initial_sc=10.0)


def two_epoch() -> Scenario:
    return Scenario.from_lengths([1.0, 1.0], [3.0], e_max=2.0, eta=0.9, initial_sc=1.0)


@pytest.fixture
def golden_scenario():
    return golden()


@pytest.fixture
def two_epoch_scenario():
    return two_epoch()


def reference_optimum(scenario: Scenario, delta_zero: bool = False):
    """Optimal value and powers from a generic conic solver.

    Written straight from the constraint list, independent of the barrier
    oracle's program assembly.
    """
    cp = pytest.importorskip("cvxpy")
    from hydrosched.model import build_epochs, split_arrivals

    ell = build_epochs(scenario).lengths
    split = split_arrivals(scenario)
    n = len(ell)
    p_sc, p_b, d = cp.Variable(n), cp.Variable(n), cp.Variable(n)
    sc_out = cp.cumsum(cp.multiply(p_sc + d, ell))
    cons = [p_sc >= 0, p_b >= 0, d >= 0, d[n - 1] == 0]
    if delta_zero:
        cons.append(d == 0)
    cons.append(sc_out <= np.cumsum(split.sc_arrivals))
    if n > 1:
        cons.append(np.cumsum(split.sc_arrivals)[1:] - sc_out[:-1] <= scenario.e_max)
    moved = cp.hstack([0.0, cp.multiply(d, ell)[:-1]]) if n > 1 else cp.hstack([0.0])
    avail = scenario.eta * (split.b_arrivals + moved)
    cons.append(cp.cumsum(cp.multiply(p_b, ell)) <= cp.cumsum(avail))
    obj = cp.Maximize(cp.sum(cp.multiply(ell / 2, cp.log(1 + p_sc + p_b))))
    prob = cp.Problem(obj, cons)
    prob.solve(solver="CLARABEL")
    return float(prob.value), np.asarray(p_sc.value), np.asarray(p_b.value), np.asarray(d.value)
