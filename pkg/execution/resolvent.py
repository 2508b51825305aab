import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from execution.ensemble import EntryDistribution, SymmetricMatrix
from execution.law import UpperHalfPoint, sc_stieltjes
from execution.spectra import Spectrum

logger = logging.getLogger(__name__)


def _z(z) -> complex:
    z = z.z if isinstance(z, UpperHalfPoint) else complex(z)
    if not z.imag > 0:
        raise ValueError(f"z must lie in the upper half-plane, got {z}")
    return z


def empirical_stieltjes(spec: Spectrum, z):
    """(1/n) sum_i 1 / (lambda_i - z); accepts a scalar z or an array of z."""
    zz = np.asarray(z.z if isinstance(z, UpperHalfPoint) else z, dtype=complex)
    if np.any(zz.imag <= 0):
        raise ValueError("z must lie in the upper half-plane")
    lam = np.asarray(spec.eigenvalues, dtype=float)
    out = np.mean(1.0 / (lam - zz[..., None]), axis=-1)
    return out if out.ndim else complex(out)


def stieltjes_matrix(spectra: Sequence[Spectrum], zs) -> np.ndarray:
    """R x Z array of s_n(z) samples, one row per replica."""
    zs = np.asarray(zs, dtype=complex)
    return np.vstack([empirical_stieltjes(s, zs) for s in spectra])


def _inverse(a: np.ndarray) -> np.ndarray:
    lu, piv = lu_factor(a, check_finite=False)
    if np.any(np.diag(lu) == 0):
        raise ValueError("singular resolvent system")
    return lu_solve((lu, piv), np.eye(a.shape[0], dtype=a.dtype), check_finite=False)


def resolvent_trace(M: SymmetricMatrix, z) -> complex:
    """(1/n) tr (M - zI)^{-1} through one complex LU factorisation."""
    z = _z(z)
    a = M.to_dense().astype(complex)
    a[np.diag_indices(M.n)] -= z
    return complex(np.trace(_inverse(a)) / M.n)


@dataclass(frozen=True)
class LeaveOneOutDiag:
    index: int
    z: complex
    beta: complex
    gamma: complex
    gamma_hat: complex
    xi: complex
    eps: complex
    a_n: complex
    b_n: complex
    es_n_estimate: complex
    s_n: complex
    w_ii: float
    resolvent_diag: complex
    n: int

    @property
    def v(self) -> float:
        return self.z.imag

    def ep_residual(self) -> float:
        """eps_i - (w_ii - gamma_i/n + xi_i/n - (s_n - Es_n))."""
        rhs = self.w_ii - self.gamma / self.n + self.xi / self.n - (self.s_n - self.es_n_estimate)
        return abs(self.eps - rhs)

    def schur_residual(self) -> float:
        return abs(self.beta - self.resolvent_diag)

    def beta_residual(self) -> float:
        """beta_i - (-a_n + a_n beta_i eps_i)."""
        return abs(self.beta - (-self.a_n + self.a_n * self.beta * self.eps))

    @property
    def beta_within_bound(self) -> bool:
        return abs(self.beta) <= 1.0 / self.v

    @property
    def xi_within_bound(self) -> bool:
        return abs(self.xi) <= 1.0 / self.v

    def within_bounds(self) -> bool:
        return self.beta_within_bound and self.xi_within_bound


def _full_resolvent(a: np.ndarray, z: complex) -> np.ndarray:
    d = a.astype(complex)
    d[np.diag_indices(a.shape[0])] -= z
    return _inverse(d)


def _leave_one_out(a: np.ndarray, G: np.ndarray, z: complex, i: int, es: complex) -> LeaveOneOutDiag:
    n = a.shape[0]
    w_ii = float(a[i, i])
    tr_full = complex(np.trace(G))
    s_n = tr_full / n

    if n == 1:
        q = 0.0
        tr_minor = tr_minor_sq = 0.0
        quad_sq = 0.0
    else:
        keep = np.arange(n) != i
        w = a[keep, i]
        minor = a[np.ix_(keep, keep)].astype(complex)
        minor[np.diag_indices(n - 1)] -= z
        lu, piv = lu_factor(minor, check_finite=False)
        y = lu_solve((lu, piv), w.astype(complex), check_finite=False)
        inv = lu_solve((lu, piv), np.eye(n - 1, dtype=complex), check_finite=False)
        q = complex(np.dot(w, y))                  # n^{-1} a_i^* D_i^{-1} a_i
        quad_sq = complex(np.dot(y, y))            # n^{-1} a_i^* D_i^{-2} a_i (D_i^{-1} complex symmetric)
        tr_minor = complex(np.trace(inv))
        tr_minor_sq = complex(np.sum(inv * inv.T))

    beta = 1.0 / (w_ii - z - q)
    a_n = 1.0 / (z + es)
    return LeaveOneOutDiag(
        index=i,
        z=z,
        beta=beta,
        gamma=n * q - tr_minor,
        gamma_hat=n * quad_sq - tr_minor_sq,
        xi=tr_full - tr_minor,
        eps=w_ii - q + es,
        a_n=a_n,
        b_n=1.0 / (z + 2.0 * es),
        es_n_estimate=es,
        s_n=s_n,
        w_ii=w_ii,
        resolvent_diag=complex(G[i, i]),
        n=n,
    )


def _es(z: complex, es_n_estimate, sigma: float) -> complex:
    if es_n_estimate is None:
        return complex(sc_stieltjes(z, sigma))
    return complex(es_n_estimate)


def leave_one_out(M: SymmetricMatrix, z, i: int, es_n_estimate: Optional[complex] = None,
                  sigma: float = 1.0) -> LeaveOneOutDiag:
    """
    Leave-one-out quantities for index i (0-based), with D_i the resolvent of the principal minor
    obtained by deleting row and column i.

    Args:
        M: the Wigner matrix W_n (entries already scaled by n^{-1/2}).
        z: point in the upper half-plane.
        i: index in [0, n).
        es_n_estimate: estimate of E s_n(z); None plugs in the semicircle transform s(z).
    """
    z = _z(z)
    if not 0 <= i < M.n:
        raise ValueError(f"index {i} outside [0, {M.n})")
    a = M.to_dense()
    return _leave_one_out(a, _full_resolvent(a, z), z, i, _es(z, es_n_estimate, sigma))


def leave_one_out_table(M: SymmetricMatrix, z, es_n_estimate: Optional[complex] = None,
                        indices: Optional[Iterable[int]] = None, sigma: float = 1.0) -> List[LeaveOneOutDiag]:
    z = _z(z)
    a = M.to_dense()
    G = _full_resolvent(a, z)
    es = _es(z, es_n_estimate, sigma)
    idx = range(M.n) if indices is None else indices
    return [_leave_one_out(a, G, z, int(i), es) for i in idx]


def self_consistent_residual(rows: Sequence[LeaveOneOutDiag]) -> float:
    """|s_n - (-a_n + (a_n/n) sum_i beta_i eps_i)| over a full table."""
    first = rows[0]
    total = sum(r.beta * r.eps for r in rows)
    return abs(first.s_n - (-first.a_n + first.a_n * total / first.n))


def mean_beta_residual(rows: Sequence[LeaveOneOutDiag]) -> float:
    """|(1/n) sum_i beta_i - s_n| over a full table."""
    return abs(sum(r.beta for r in rows) / rows[0].n - rows[0].s_n)


# ----------------------------------------------------------------------------
# Quadratic forms and rank-one perturbations
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadraticFormMoments:
    reps: int
    mean: float
    second: float
    fourth: float
    second_se: float
    expected_second: float

    @property
    def z_score(self) -> float:
        if self.second_se == 0.0:
            return 0.0 if self.second == self.expected_second else math.inf
        return abs(self.second - self.expected_second) / self.second_se


def quadratic_form_variance(A: np.ndarray, nu4: float) -> float:
    """Var(X^T A X - tr A) = (nu4 - 3) sum a_ii^2 + ||A||_F^2 + tr(A^2) for real A, i.i.d. X."""
    A = np.asarray(A, dtype=float)
    return float((nu4 - 3.0) * np.sum(np.diag(A) ** 2) + np.sum(A * A) + np.trace(A @ A))


def quadratic_form_samples(A: np.ndarray, X: EntryDistribution, reps: int, rng: np.random.Generator,
                           chunk: int = 20000) -> np.ndarray:
    """Samples of X^T A X - tr A for X with i.i.d. entries drawn from `X`."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    if reps < 2:
        raise ValueError("need at least 2 repetitions")
    n = A.shape[0]
    tr = np.trace(A)
    parts = []
    done = 0
    while done < reps:
        m = min(chunk, reps - done)
        x = X.sample(rng, (m, n))
        parts.append(np.einsum("ri,ij,rj->r", x, A, x) - tr)
        done += m
    return np.concatenate(parts)


def quadratic_form_residual(A: np.ndarray, X: EntryDistribution, reps: int, rng: np.random.Generator,
                            chunk: int = 20000) -> QuadraticFormMoments:
    r = quadratic_form_samples(A, X, reps, rng, chunk)
    sq = r ** 2
    return QuadraticFormMoments(
        reps=reps,
        mean=float(r.mean()),
        second=float(sq.mean()),
        fourth=float(np.mean(sq ** 2)),
        second_se=float(sq.std(ddof=1) / math.sqrt(reps)),
        expected_second=quadratic_form_variance(A, X.nu4),
    )


def rank_one_perturbation_gap(B: np.ndarray, q: np.ndarray, tau: float, A: np.ndarray, z) -> float:
    """|tr(((B - zI)^{-1} - (B + tau q q^* - zI)^{-1}) A)|."""
    z = _z(z)
    B = np.atleast_2d(np.asarray(B, dtype=complex))
    q = np.asarray(q, dtype=complex).reshape(-1)
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    n = B.shape[0]
    shifted = B - z * np.eye(n)
    r1 = np.linalg.solve(shifted, A)
    r2 = np.linalg.solve(shifted + tau * np.outer(q, q.conj()), A)
    return float(abs(np.trace(r1 - r2)))
