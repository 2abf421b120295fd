import numpy as np
import pytest

from offline_pricing.mdp import PricingModel, solve_optimal

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def model():
    return PricingModel.reference()


@pytest.fixture(scope="session")
def optimal(model):
    return solve_optimal(model)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def report():
    """Record one acceptance verdict line; printed again in the terminal summary."""

    def _report(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
