import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from measurefde import solve_picard, tanh_kernel_problem
from measurefde.esc import simulate, table1_params


@pytest.fixture(scope="session")
def tanh_run():
    """One full solve of the built-in kernel example on [0, 2], timed."""
    problem = tanh_kernel_problem(sigma=2.0, tol=1e-9)
    t0 = time.perf_counter()
    traj, iters, delta = solve_picard(problem, step=2e-3)
    elapsed = time.perf_counter() - t0
    return {"problem": problem, "traj": traj, "iters": iters,
            "delta": delta, "seconds": elapsed}


@pytest.fixture(scope="session")
def table1_run():
    """Full 200 s extremum-seeking run with the stock parameters, timed."""
    params = table1_params(t_end=200.0, dt=1e-3)
    t0 = time.perf_counter()
    trace = simulate(params)
    elapsed = time.perf_counter() - t0
    return {"params": params, "trace": trace, "seconds": elapsed}
