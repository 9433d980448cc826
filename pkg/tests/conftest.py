from dataclasses import dataclass

import pytest

from neuroplan import losses as L
from neuroplan import model as M
from neuroplan import scenarios as S

REFERENCE_ITERS = 1000
BUDGET_ITERS = 400


@dataclass
class FixtureRun:
    scenario: S.Scenario
    history: list
    controls: object            # plan after BUDGET_ITERS updates
    trajectory: object
    per_step: dict
    seconds: float


@pytest.fixture(scope="session")
def fixture_runs():
    """Every case-study fixture optimized for 1000 iterations, with the plan
    recorded after 400. Shared by the acceptance and model suites."""
    import time
    runs = {}
    for s in S.load_dir(S.FIXTURE_DIR):
        t0 = time.perf_counter()
        res = M.optimize_single(s, iters=REFERENCE_ITERS, snapshot_at=(BUDGET_ITERS,))
        u, traj = res.snapshots[BUDGET_ITERS]
        per_step = L.planner_loss(traj, s).per_step
        runs[s.id] = FixtureRun(s, res.history, u, traj, per_step, time.perf_counter() - t0)
    return runs


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])
