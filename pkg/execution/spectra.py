import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from numba import njit

from execution.ensemble import SymmetricMatrix

logger = logging.getLogger(__name__)

MAX_QL_ITERATIONS = 50


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    seed: Optional[int] = None

    @property
    def n(self) -> int:
        return len(self.eigenvalues)


@dataclass(frozen=True)
class StepCdf:
    """
    Right-continuous step function: jumps at `points` (sorted, distinct), value `masses[k]` on [points[k], points[k+1]).
    """
    points: np.ndarray
    masses: np.ndarray

    @property
    def jumps(self) -> np.ndarray:
        return np.diff(self.masses, prepend=0.0)


# ----------------------------------------------------------------------------
# Eigensolver
# ----------------------------------------------------------------------------

def _householder(a: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    In-place Householder similarity reduction of a dense symmetric array to tridiagonal form.
    """
    n = a.shape[0]
    for k in range(n - 2):
        u = a[k + 1:, k].copy()
        if not np.any(u[1:]):
            continue  # column already reduced
        alpha = math.sqrt(float(np.dot(u, u)))
        if u[0] < 0.0:
            alpha = -alpha
        u[0] += alpha
        h = np.dot(u, u) / 2.0
        sub = a[k + 1:, k + 1:]
        p = sub @ u / h
        g = np.dot(u, p) / (2.0 * h)
        q = p - g * u
        sub -= np.outer(q, u) + np.outer(u, q)
        a[k + 1, k] = a[k, k + 1] = -alpha
        a[k + 2:, k] = 0.0
        a[k, k + 2:] = 0.0
    d = np.diag(a).copy()
    e = np.diag(a, -1).copy()
    return d, e


def tridiagonalize(M: Union[SymmetricMatrix, np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Reduce a symmetric matrix to an orthogonally similar tridiagonal matrix.

    Returns:
        (diag, offdiag) with len(diag) == n and len(offdiag) == n - 1.
    """
    a = M.to_dense() if isinstance(M, SymmetricMatrix) else np.array(M, dtype=float)
    return _householder(a)


@njit(cache=True)
def _implicit_ql(d, e, max_iter):
    """
    Implicit-shift QL with Wilkinson-type shifts on (d, e); eigenvalues overwrite d.
    e[i] couples d[i] and d[i + 1]; e has length n with e[n - 1] unused.
    Returns -1 on success, otherwise the index that failed to converge.
    """
    n = d.shape[0]
    eps = 2.220446049250313e-16  # float64 machine epsilon
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            if it == max_iter:
                return l
            it += 1
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = 1.0
            c = 1.0
            p = 0.0
            i = m - 1
            deflated = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    deflated = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                i -= 1
            if deflated:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return -1


def tridiagonal_eigenvalues(d: np.ndarray, e: np.ndarray) -> np.ndarray:
    d = np.array(d, dtype=np.float64)
    work = np.zeros(len(d))
    work[:len(d) - 1] = e
    failed = _implicit_ql(d, work, MAX_QL_ITERATIONS)
    if failed >= 0:
        logger.error(f"QL iteration did not converge for eigenvalue index {failed}")
        raise ConvergenceError(f"eigenvalue index {failed} did not converge within {MAX_QL_ITERATIONS} iterations")
    return np.sort(d)


def symmetric_eigenvalues(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    if a.shape[0] == 0:
        return np.empty(0)
    d, e = _householder(a)
    return tridiagonal_eigenvalues(d, e)


def eigenvalues(M: SymmetricMatrix) -> Spectrum:
    """
    All eigenvalues of M, ascending: Householder tridiagonalisation followed by implicit QL.
    """
    if M.n < 1:
        raise ValueError("matrix must have n >= 1")
    d, e = tridiagonalize(M)
    return Spectrum(eigenvalues=tridiagonal_eigenvalues(d, e), seed=M.seed)


# ----------------------------------------------------------------------------
# Empirical spectral distribution
# ----------------------------------------------------------------------------

def _step_from_values(values: np.ndarray) -> StepCdf:
    points, counts = np.unique(values, return_counts=True)
    masses = np.cumsum(counts) / float(len(values))
    masses[-1] = 1.0
    return StepCdf(points=points, masses=masses)


def esd(spec: Spectrum) -> StepCdf:
    return _step_from_values(np.asarray(spec.eigenvalues, dtype=float))


def esd_eval(F: StepCdf, x):
    idx = np.searchsorted(F.points, x, side="right")
    out = np.where(idx == 0, 0.0, F.masses[np.maximum(idx - 1, 0)])
    return out if np.ndim(out) else float(out)


def step_stieltjes(F: StepCdf, z):
    """s_F(z) = sum_k mass_k / (t_k - z)."""
    z = np.asarray(z, dtype=complex)
    w = F.jumps
    out = np.sum(w / (F.points - z[..., None]), axis=-1)
    return out if out.ndim else complex(out)


def kolmogorov_distance(F: StepCdf, G) -> float:
    """
    sup_x |F(x) - G(x)| for continuous G, attained at the jump points of F
    (right limit and left limit).
    """
    g = np.asarray(G.cdf(F.points), dtype=float)
    before = np.concatenate(([0.0], F.masses[:-1]))
    return float(max(np.max(np.abs(F.masses - g)), np.max(np.abs(g - before))))


def mean_esd(spectra: Sequence[Spectrum]) -> StepCdf:
    """
    Pooled ESD of R replicas: mass 1/(R n) per eigenvalue.
    """
    if not spectra:
        raise ValueError("mean_esd needs at least one spectrum")
    sizes = {s.n for s in spectra}
    if len(sizes) != 1:
        raise ValueError(f"spectra have different sizes: {sorted(sizes)}")
    return _step_from_values(np.concatenate([np.asarray(s.eigenvalues, dtype=float) for s in spectra]))


def delta_p(spec: Spectrum, law) -> float:
    return kolmogorov_distance(esd(spec), law)


def spectrum_checks(M: SymmetricMatrix, spec: Spectrum) -> List[float]:
    """
    Relative residuals of the trace and Frobenius invariants of a computed spectrum.
    """
    lam = np.asarray(spec.eigenvalues)
    fro = M.frobenius_sq()
    trace_res = abs(lam.sum() - M.trace()) / max(1.0, math.sqrt(fro))
    fro_res = abs(np.sum(lam ** 2) - fro) / max(fro, np.finfo(float).tiny)
    return [trace_res, fro_res]
