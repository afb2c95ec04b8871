import math

import numpy as np
import pytest
from hypothesis import strategies as st

from eprsim.qlinalg import Direction

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def random_direction(rng: np.random.Generator) -> Direction:
    v = rng.normal(size=3)
    return Direction.from_vector(v)


def random_directions(rng: np.random.Generator, n: int) -> list[Direction]:
    return [random_direction(rng) for _ in range(n)]


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


directions = st.builds(
    lambda z, phi: Direction(math.sqrt(max(0.0, 1 - z * z)) * math.cos(phi),
                             math.sqrt(max(0.0, 1 - z * z)) * math.sin(phi), z),
    st.floats(-1.0, 1.0),
    st.floats(0.0, 2 * math.pi),
)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
