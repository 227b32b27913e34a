import numpy as np
import pytest

from varsns.variational import GramianContributions


def random_contributions(rng, n_x, n_v, max_rank=None):
    """Per-sensor PSD blocks ``A_j^T A_j`` with random low-rank factors."""
    max_rank = max_rank or n_x
    blocks = {}
    for j in range(n_v):
        k = int(rng.integers(1, max_rank + 1))
        A = rng.normal(size=(k, n_x))
        blocks[j] = A.T @ A
    return GramianContributions(blocks)


def random_stable_matrix(rng, n):
    """Negative-definite symmetric part plus a skew part: all eigenvalues in the left half plane."""
    B = rng.normal(size=(n, n))
    C = rng.normal(size=(n, n))
    return -(B @ B.T / n + 0.1 * np.eye(n)) + 0.5 * (C - C.T)


def discrete_map(A, T):
    """Closed-form one-step map of the scheme on ``dx/dt = A x``."""
    n = A.shape[0]
    I = np.eye(n)
    Z = T * A
    return np.linalg.solve(I - 2.0 * Z / 3.0 + Z @ Z / 6.0, I + Z / 3.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
