import numpy as np
import pytest

from nestcoal import SolverConfig, build_table, sandwich_solve


@pytest.fixture(scope="session")
def table_c1_small():
    return build_table(1.0, 30)


@pytest.fixture(scope="session")
def solved_c1():
    """High-accuracy c=1 solve shared by the oracle-heavy tests."""
    return sandwich_solve(SolverConfig(c=1.0, trunc_M=500, tol=1e-13))


@pytest.fixture(scope="session")
def solved_by_c():
    return {
        c: sandwich_solve(SolverConfig(c=c, trunc_M=500, tol=1e-12))
        for c in (0.5, 1.0, 2.0)
    }


def push_mass_up(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    """Move random fractions of mass to higher support values.

    The result's CDF is pointwise <= the input's, so the output
    stochastically dominates the input by construction.
    """
    out = probs.copy()
    M = out.size
    for i in range(M - 1):
        frac = rng.random() * 0.5
        j = rng.integers(i + 1, M)
        moved = out[i] * frac
        out[i] -= moved
        out[j] += moved
    return out


def random_pmf_probs(rng: np.random.Generator, M: int) -> np.ndarray:
    w = rng.random(M)
    return w / w.sum()
