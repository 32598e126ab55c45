import numpy as np
import pytest

from bbgky.dynamics import JumpModel, random_kernels
from bbgky.state_space import EntitySpace, SequenceVector, symmetrize

ACCEPTANCE_LINES: list[str] = []


def random_observables(rng, K, s_max, b0=None):
    comps = [np.asarray(rng.normal() if b0 is None else b0)]
    comps += [symmetrize(rng.uniform(-1, 1, (K,) * s)) for s in range(1, s_max + 1)]
    return SequenceVector(comps, "observable")


def random_states(rng, K, N):
    comps = [np.asarray(1.0)] + [symmetrize(rng.uniform(0, 1, (K,) * s)) for s in range(1, N + 1)]
    return SequenceVector(comps, "state")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def space3():
    return EntitySpace.uniform(3)


@pytest.fixture
def model3(space3):
    return JumpModel(space3, random_kernels(space3, np.random.default_rng(17)))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
