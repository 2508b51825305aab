import numpy as np
import pytest
from scipy.linalg import ldl

from execution.ensemble import SymmetricMatrix


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def random_symmetric(rng):
    def make(n: int) -> np.ndarray:
        g = rng.standard_normal((n, n))
        return (g + g.T) / np.sqrt(2.0 * n)
    return make


@pytest.fixture
def wigner_matrix(random_symmetric):
    def make(n: int) -> SymmetricMatrix:
        return SymmetricMatrix.from_dense(random_symmetric(n))
    return make


def count_below(a: np.ndarray, x: float) -> int:
    """Number of eigenvalues of a below x, from the inertia of the LDL^T factor of a - xI."""
    _, d, _ = ldl(a - x * np.eye(a.shape[0]))
    return int(np.sum(np.linalg.eigvalsh(d) < 0))


def kth_eigenvalue(a: np.ndarray, k: int, tol: float = 1e-12) -> float:
    """k-th smallest eigenvalue (0-based) by bisection on the inertia count."""
    hi = float(np.max(np.sum(np.abs(a), axis=1))) + 1.0
    lo = -hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if count_below(a, mid) > k:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def grid_sup_distance(points: np.ndarray, cdf, num: int = 200001) -> float:
    """Brute-force sup |F - G| on a fine grid (a lower bound for the exact value)."""
    points = np.sort(np.asarray(points, dtype=float))
    lo = min(points[0], -3.0) - 1.0
    hi = max(points[-1], 3.0) + 1.0
    x = np.linspace(lo, hi, num)
    F = np.searchsorted(points, x, side="right") / len(points)
    return float(np.max(np.abs(F - cdf(x))))
