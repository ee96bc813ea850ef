import numpy as np
import pytest

from torus_embed.domain import CircledMDomain
from torus_embed.elliptic import Lattice


@pytest.fixture
def lat():
    return Lattice(0.5 + 1j)


@pytest.fixture
def dom1(lat):
    return CircledMDomain(lat, [(0.45 + 0.4j, 0.15)])


@pytest.fixture
def dom2(lat):
    return CircledMDomain(lat, [(0.25 + 0.3j, 0.1), (0.7 + 0.75j, 0.12)])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = {}


@pytest.fixture
def record():
    """Store the outcome line of an acceptance criterion for the terminal summary."""

    def _record(number: int, passed: bool, detail: str):
        ACCEPTANCE[number] = (passed, detail)
        print(f"acceptance {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
