import numpy as np
import pytest

from halfstokes.grid_field import Grid

# acceptance outcomes, filled by test_acceptance and printed at the end of the session
ACCEPTANCE: dict[int, tuple[str, str]] = {}


@pytest.fixture
def grid2():
    return Grid.uniform(2, 32, L=2 * np.pi, Nn=16, Ln=np.pi, t_max=1.0, nt=9)


@pytest.fixture
def grid3():
    return Grid.uniform(3, 16, L=2 * np.pi, Nn=8, Ln=np.pi, t_max=1.0, nt=9)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        status, line = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {status}  {line}")
