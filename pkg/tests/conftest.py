import numpy as np
import pytest
from hypothesis import settings
from scipy.constants import m_u

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

R_C = 1e-7
HEAVY = 1e6 * m_u  # spreading and recoil stay negligible over milliseconds


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = []  # (criterion, passed, detail), filled by test_acceptance


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
