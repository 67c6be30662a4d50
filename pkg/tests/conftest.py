import os

import numpy as np
import pytest

from siirv_lab import families

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(autouse=True)
def _default_constants(monkeypatch):
    # tests pin the default constants regardless of the caller's environment
    monkeypatch.delenv("SIIRV_LAB_CONSTANTS", raising=False)


@pytest.fixture
def report_line():
    """Print and remember one acceptance verdict line."""

    def emit(number: int, ok: bool, detail: str):
        line = f"ACCEPTANCE {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)

    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance verdicts")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def geo():
    return families.geometric_family(0.5, 3.0)


@pytest.fixture(scope="session")
def geo_narrow():
    return families.geometric_family(0.8, 1.2)


@pytest.fixture(scope="session")
def zeta():
    return families.zeta_family(5.5, 9.0)


@pytest.fixture(scope="session")
def dgauss():
    return families.discrete_gaussian_family()


@pytest.fixture(scope="session")
def laplace():
    return families.laplace_family()


@pytest.fixture
def rng():
    return np.random.default_rng(int(os.environ.get("SIIRV_TEST_SEED", "12345")))
