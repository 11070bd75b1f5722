import numpy as np
import pytest

from oscillachain.model import Parameters
from oscillachain.simulate import simulate
from oscillachain.basin import run_trial


@pytest.fixture(scope="session")
def warm_kernels():
    """Compile the jit kernels once so timed tests measure physics only."""
    p = Parameters.travelling_wave(2, -0.5, 1.0)
    simulate(np.array([0.1, 0.2]), p, 1.0, dt_sample=0.5)
    run_trial(2, 2, 0, window=10.0, chunk=5.0)
    return True
