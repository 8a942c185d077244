import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from swapcert import sdp

settings.register_profile(
    "swapcert", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("swapcert")

GRID_DEG = (30.0, 32.5, 35.0, 37.5, 40.0, 42.5, 45.0)

# filled by test_acceptance.py, printed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}
DUALITY_CHECKS = {"count": 0}


def make_checked(real_solve):
    """Wrap ``real_solve`` so every call asserts weak duality.

    For optimal solves the dual objective may not exceed the primal by more
    than ``10 * tol`` (relative).  Runs that stop early are checked through
    their certified bound when the primal iterate is feasible.
    """
    def checked(p, tol=sdp.DEFAULT_TOL, max_iter=sdp.DEFAULT_MAX_ITER):
        sol = real_solve(p, tol=tol, max_iter=max_iter)
        scale = 1 + abs(sol.objective)
        if sol.status == sdp.OPTIMAL:
            assert sol.dual_objective <= sol.objective + 10 * tol * scale, sol.diagnostics()
            DUALITY_CHECKS["count"] += 1
        elif sol.status == sdp.MAX_ITERATIONS and sol.primal_residual <= 1e-6 and np.all(np.isfinite(sol.x)):
            try:
                bound = sdp.certified_lower_bound(p, sol)
            except sdp.CertificateError:
                bound = -math.inf
            assert bound <= sol.objective + 10 * tol * scale + 1e-6, sol.diagnostics()
            DUALITY_CHECKS["count"] += 1
        return sol

    checked.weak_duality_guard = True
    return checked


@pytest.fixture(autouse=True)
def weak_duality_guard(monkeypatch):
    """Every solve in the suite goes through :func:`make_checked`."""
    monkeypatch.setattr(sdp, "solve", make_checked(sdp.solve))
    yield


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
    if DUALITY_CHECKS["count"]:
        terminalreporter.write_line(f"weak duality asserted on {DUALITY_CHECKS['count']} solves")
