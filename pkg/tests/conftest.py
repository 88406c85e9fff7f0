import numpy as np
import pytest

from qimpact.lattice import PotentialSpec, build_grid


@pytest.fixture
def harmonic():
    return PotentialSpec("hard")


@pytest.fixture
def half_oscillator():
    return PotentialSpec("hard", x_w=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def wide_grid():
    return build_grid(-12.0, 12.0, 1201)


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def acceptance():
    """record(n, ok, detail) stores the verdict line for criterion n."""
    def record(n: int, ok: bool, detail: str) -> bool:
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[n] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
