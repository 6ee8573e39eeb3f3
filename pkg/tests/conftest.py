from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from foamck.config import RunConfig
from foamck.gck import construct_global_solution, parse_pde

settings.register_profile("foamck", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("foamck")

PROBLEMS = Path(__file__).resolve().parent.parent / "problems"


def load_problem(name):
    return parse_pde((PROBLEMS / name).read_text())


def problem_config(pde, **changes):
    return RunConfig().updated(pde.config).updated(changes)


@pytest.fixture(scope="session")
def transport():
    pde, data = load_problem("transport.pde")
    cfg = problem_config(pde)
    return construct_global_solution(pde, data, cfg)


@pytest.fixture(scope="session")
def riccati():
    pde, data = load_problem("riccati.pde")
    cfg = problem_config(pde)
    return construct_global_solution(pde, data, cfg)


_YS = np.linspace(0.0, 2 * np.pi, 20001)
RICCATI_CURVE = np.stack([2 + np.sin(_YS), _YS], axis=1)


def riccati_curve_distance(points):
    """Euclidean distance from each point to the curve t = 2 + sin(y) (dense polyline)."""
    from scipy.spatial import cKDTree
    return cKDTree(RICCATI_CURVE).query(np.atleast_2d(points))[0]


# one line per acceptance criterion, repeated at the end of the run
ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
