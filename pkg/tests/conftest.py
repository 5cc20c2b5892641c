import pytest

from multimode_opo.config import REFERENCE_CONFIG, load_config
from multimode_opo.workflow import operating_point, solve

# criterion number -> summary line, filled in by test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture(scope="session")
def reference_cfg():
    return load_config(REFERENCE_CONFIG)


@pytest.fixture(scope="session")
def reference_solution(reference_cfg):
    return solve(reference_cfg)


@pytest.fixture(scope="session")
def reference_op(reference_cfg, reference_solution):
    return operating_point(reference_cfg, reference_solution)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
