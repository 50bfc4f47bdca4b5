import numpy as np
import pytest

from ocapotts.lattice import Lattice
from ocapotts.sampler import make_rng


def random_field(lattice: Lattice, k_states: int, seed: int = 0) -> np.ndarray:
    return make_rng(seed).integers(0, k_states, lattice.n)


@pytest.fixture
def rng():
    return make_rng(12345)


TINY_GRIDS = [(1, 4), (2, 2), (2, 3), (3, 3)]


# criterion number -> (passed, detail); filled by test_acceptance and echoed at the end of the run
ACCEPTANCE = {}


def record(key: str, passed: bool, detail: str) -> bool:
    ACCEPTANCE[key] = (bool(passed), detail)
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda s: (int("".join(c for c in s if c.isdigit())), s)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:<4} {'PASS' if ok else 'FAIL'}  {detail}")
