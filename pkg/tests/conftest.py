import sys
import time
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from kickmind.field import FieldSpec
from kickmind.planner import KickPlanner

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"

# One line per acceptance criterion, printed at the end of the run.
ACCEPTANCE_LINES: list[str] = []
# Wall-clock seconds of the shared default-field table build and solve.
TIMINGS: dict[str, float] = {}


@pytest.fixture(scope="session")
def default_field() -> FieldSpec:
    return FieldSpec()


@pytest.fixture(scope="session")
def default_planner(default_field) -> KickPlanner:
    t0 = time.perf_counter()
    planner = KickPlanner(default_field)
    planner.tables
    TIMINGS["build_s"] = time.perf_counter() - t0
    return planner


@pytest.fixture(scope="session")
def default_value(default_planner):
    t0 = time.perf_counter()
    value = default_planner.solve(epsilon=1e-3)
    TIMINGS["solve_s"] = time.perf_counter() - t0
    return value


@pytest.fixture(scope="session")
def small_field() -> FieldSpec:
    """A 4 x 3 m field at 0.5 m, cheap enough for CLI round trips."""
    return FieldSpec(4.0, 3.0, 1.2, 0.5, 0.5, 1.0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
