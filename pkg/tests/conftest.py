import numpy as np
import pytest

from scfo.bench import builtin
from scfo.engine import RunConfig, run


@pytest.fixture(scope="session")
def spec44():
    return builtin("constrained_quadratic")


@pytest.fixture(scope="session")
def spec46():
    return builtin("rosenbrock")


@pytest.fixture(scope="session")
def traj44(spec44):
    """Full adaptive run of the constrained benchmark (terminates well before 500)."""
    return run(spec44, RunConfig(budget=500, max_halvings=10))


@pytest.fixture(scope="session")
def traj46_short(spec46):
    """Budget-limited slice of the Rosenbrock run, long enough to change levels."""
    return run(spec46, RunConfig(budget=400, max_halvings=10))


def box_samples(box, n, seed):
    rng = np.random.default_rng(seed)
    return box.lower + rng.random((n, box.n)) * box.ranges
