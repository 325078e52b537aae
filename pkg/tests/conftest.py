import numpy as np
import pytest

from gamlsskit.data import DEFAULT_FORMULA, simulate_hedonic
from gamlsskit.engine import fit
from gamlsskit.formula import build_spec, parse_formula


@pytest.fixture(scope="session")
def sim2000():
    return simulate_hedonic(7, 2000)


@pytest.fixture(scope="session")
def default_spec(sim2000):
    return build_spec(parse_formula(DEFAULT_FORMULA), "GA", schema=sim2000)


@pytest.fixture(scope="session")
def default_fit(sim2000, default_spec):
    return fit(default_spec, sim2000)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# one PASS/FAIL line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE = []


@pytest.fixture
def verdict():
    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        ACCEPTANCE.append(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
