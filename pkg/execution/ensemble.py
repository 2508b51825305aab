import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy import stats
from scipy.integrate import quad
from scipy.special import comb, gammaln

logger = logging.getLogger(__name__)

MOMENT_TOL = 1e-6
SQRT3 = math.sqrt(3.0)


class DistributionKind(str, Enum):
    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"
    UNIFORM = "uniform"
    STUDENT_T = "student_t"
    TWO_POINT = "two_point"


class TruncationMode(str, Enum):
    ZERO = "zero"            # x * 1{|x| <= T}
    CONDITION = "condition"  # law of x given |x| <= T


# ----------------------------------------------------------------------------
# Raw (pre-standardisation) laws
# ----------------------------------------------------------------------------

def _continuous(kind: DistributionKind, df: Optional[float]):
    if kind == DistributionKind.GAUSSIAN:
        return stats.norm()
    if kind == DistributionKind.UNIFORM:
        return stats.uniform(loc=-SQRT3, scale=2.0 * SQRT3)
    if kind == DistributionKind.STUDENT_T:
        return stats.t(df)
    return None


def _atoms(kind: DistributionKind, p: Optional[float]) -> Tuple[np.ndarray, np.ndarray]:
    if kind == DistributionKind.RADEMACHER:
        return np.array([-1.0, 1.0]), np.array([0.5, 0.5])
    # two_point(p): zero mean, unit variance
    return np.array([math.sqrt((1.0 - p) / p), -math.sqrt(p / (1.0 - p))]), np.array([p, 1.0 - p])


def _student_t_abs_moment(df: float, k: int) -> float:
    if k >= df:
        return math.inf
    log_m = 0.5 * k * math.log(df) + gammaln((k + 1) / 2.0) + gammaln((df - k) / 2.0) \
        - 0.5 * math.log(math.pi) - gammaln(df / 2.0)
    return math.exp(log_m)


def _support_bound(kind: DistributionKind, p: Optional[float]) -> float:
    if kind == DistributionKind.UNIFORM:
        return SQRT3
    if kind in (DistributionKind.RADEMACHER, DistributionKind.TWO_POINT):
        return float(np.max(np.abs(_atoms(kind, p)[0])))
    return math.inf


def _raw_moments(kind: DistributionKind, df: Optional[float], p: Optional[float],
                 level: Optional[float], mode: TruncationMode, kmax: int = 6) -> np.ndarray:
    """
    E[Y_T^k] for k = 0..kmax where Y_T is the raw variable after truncation at `level`.
    Entries may be +inf (odd entries then carry inf as well: absolute moment diverges).
    """
    T = math.inf if level is None else float(level)
    out = np.zeros(kmax + 1)
    dist = _continuous(kind, df)

    if dist is None:
        values, probs = _atoms(kind, p)
        keep = np.abs(values) <= T
        mass = probs[keep].sum()
        for k in range(1, kmax + 1):
            out[k] = np.sum(probs[keep] * values[keep] ** k)
        out[0] = mass if mode == TruncationMode.CONDITION else 1.0
        if mode == TruncationMode.CONDITION and level is not None:
            if mass <= 0:
                raise ValueError(f"no probability mass left inside |x| <= {T}")
            out /= mass
        return out

    if kind == DistributionKind.STUDENT_T and not math.isfinite(T):
        for k in range(kmax + 1):
            m = _student_t_abs_moment(df, k)
            out[k] = m if (k % 2 == 0 or not math.isfinite(m)) else 0.0
        return out

    lo, hi = max(-T, dist.support()[0]), min(T, dist.support()[1])
    for k in range(kmax + 1):
        if k == 0:
            out[k] = dist.cdf(hi) - dist.cdf(lo) if mode == TruncationMode.CONDITION else 1.0
            continue
        if k % 2 == 1:
            out[k] = 0.0  # symmetric laws, symmetric window
            continue
        val, _ = quad(lambda y: y ** k * dist.pdf(y), lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200)
        out[k] = val
    if mode == TruncationMode.CONDITION and level is not None:
        mass = out[0]
        if mass <= 0:
            raise ValueError(f"no probability mass left inside |x| <= {T}")
        out /= mass
    return out


def _central_moment(raw: np.ndarray, shift: float, k: int) -> float:
    if shift == 0.0:
        return float(raw[k])
    total = 0.0
    for j in range(k + 1):
        if not math.isfinite(raw[j]):
            return math.inf
        total += comb(k, j) * raw[j] * (-shift) ** (k - j)
    return float(total)


# ----------------------------------------------------------------------------
# EntryDistribution
# ----------------------------------------------------------------------------

class EntryDistribution(BaseModel):
    """
    Zero-mean entry law X = (Y_T - shift) / scale, where Y is the raw law of `kind`
    and Y_T its truncation at `truncation_level` (none when unset).
    """
    model_config = ConfigDict(frozen=True, ser_json_inf_nan="constants")

    kind: DistributionKind
    df: Optional[float] = None
    p: Optional[float] = None
    shift: float = 0.0
    scale: float = 1.0
    variance: float = 1.0
    nu2: float = 1.0
    nu3: float = 0.0
    nu4: float = 3.0
    nu6: float = 15.0
    truncation_level: Optional[float] = None
    truncation_mode: TruncationMode = TruncationMode.ZERO
    prepared_for_n: Optional[int] = None

    @property
    def truncated(self) -> bool:
        return self.truncation_level is not None

    @property
    def has_finite_sixth_moment(self) -> bool:
        return math.isfinite(self.nu6)

    @property
    def bound(self) -> float:
        """Sup of |X| (inf for unbounded laws)."""
        base = _support_bound(self.kind, self.p)
        if self.truncated:
            base = min(base, self.truncation_level)
        return (base + abs(self.shift)) / self.scale

    def moment(self, k: int, absolute: bool = False) -> float:
        if absolute and k % 2 == 1:
            return self.expect(lambda x: np.abs(x) ** k)
        raw = _raw_moments(self.kind, self.df, self.p, self.truncation_level, self.truncation_mode, kmax=k)
        return _central_moment(raw, self.shift, k) / self.scale ** k

    def expect(self, func: Callable[[np.ndarray], np.ndarray]) -> float:
        """
        E[func(X)] by summation (discrete laws) or adaptive quadrature (continuous laws).
        """
        T = math.inf if self.truncation_level is None else self.truncation_level
        cond = self.truncated and self.truncation_mode == TruncationMode.CONDITION

        def g(y):
            return func((np.asarray(y, dtype=float) - self.shift) / self.scale)

        dist = _continuous(self.kind, self.df)
        if dist is None:
            values, probs = _atoms(self.kind, self.p)
            keep = np.abs(values) <= T
            inside = float(np.sum(probs[keep] * g(values[keep])))
            outside = float(probs[~keep].sum())
            if cond:
                return inside / float(probs[keep].sum())
            return inside + outside * float(g(0.0))

        lo, hi = max(-T, dist.support()[0]), min(T, dist.support()[1])
        inside, _ = quad(lambda y: float(g(y)) * dist.pdf(y), lo, hi, epsabs=1e-13, epsrel=1e-12, limit=400)
        mass = 1.0 if not math.isfinite(T) else dist.cdf(hi) - dist.cdf(lo)
        if cond:
            return inside / mass
        return inside + (1.0 - mass) * float(g(0.0))

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return sample_entries(self, rng, size)


def _standardize(kind: DistributionKind, df: Optional[float], p: Optional[float],
                 level: Optional[float], mode: TruncationMode, variance: float,
                 n: Optional[int] = None) -> EntryDistribution:
    raw = _raw_moments(kind, df, p, level, mode)
    mean = float(raw[1]) if math.isfinite(raw[1]) else 0.0
    var = float(raw[2]) - mean * mean
    if not math.isfinite(var):
        raise ValueError(f"{kind.value} has infinite variance; cannot standardize")
    if var <= 1e-12 * max(1.0, abs(float(raw[2]))):
        raise ValueError(f"degenerate law after truncation at {level}: standard deviation is 0")
    s = math.sqrt(var)
    scale = s / math.sqrt(variance)
    moments = {k: _central_moment(raw, mean, k) / scale ** k for k in (2, 3, 4, 6)}
    return EntryDistribution(
        kind=kind, df=df, p=p, shift=mean, scale=scale, variance=variance,
        nu2=moments[2], nu3=moments[3], nu4=moments[4], nu6=moments[6],
        truncation_level=level, truncation_mode=mode, prepared_for_n=n,
    )


def make_distribution(kind, params: Optional[Dict[str, Any]] = None, variance: float = 1.0) -> EntryDistribution:
    """
    Build a zero-mean entry law of the given kind with the requested variance.

    Args:
        kind: one of gaussian, rademacher, uniform, student_t, two_point.
        params: {"df": ...} for student_t, {"p": ...} for two_point.
        variance: target second moment (1 off the diagonal, sigma^2 on it).

    Returns:
        EntryDistribution with nu2..nu6 populated (inf where the moment diverges).
    """
    params = dict(params or {})
    try:
        kind = DistributionKind(kind)
    except ValueError:
        raise ValueError(f"unknown distribution kind: {kind!r}")
    if not variance > 0:
        raise ValueError(f"variance must be > 0, got {variance}")

    df = p = None
    if kind == DistributionKind.STUDENT_T:
        if "df" not in params:
            raise ValueError("student_t requires parameter df")
        df = float(params.pop("df"))
        if not df > 2:
            raise ValueError(f"student_t requires df > 2 (finite variance), got df={df}")
    elif kind == DistributionKind.TWO_POINT:
        if "p" not in params:
            raise ValueError("two_point requires parameter p")
        p = float(params.pop("p"))
        if not 0.0 < p < 1.0:
            raise ValueError(f"two_point requires 0 < p < 1, got p={p}")
    if params:
        raise ValueError(f"unexpected parameters for {kind.value}: {sorted(params)}")

    dist = _standardize(kind, df, p, None, TruncationMode.ZERO, variance)
    if not dist.has_finite_sixth_moment:
        logger.warning(f"{kind.value}(df={df}) has infinite sixth moment")
    return dist


def truncate_center_rescale(dist: EntryDistribution, n: int, level: Optional[float] = None,
                            mode=None) -> EntryDistribution:
    """
    Truncate the raw law at n^{1/4}, recentre and rescale to the original variance.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    level = n ** 0.25 if level is None else float(level)
    mode = dist.truncation_mode if mode is None else TruncationMode(mode)
    out = _standardize(dist.kind, dist.df, dist.p, level, mode, dist.variance, n)
    logger.debug(f"Truncated {dist.kind.value} at {level:.4f} (mode={mode.value}): shift={out.shift:.3e}, scale={out.scale:.6f}")
    return out


def sample_entries(dist: EntryDistribution, rng: np.random.Generator, size) -> np.ndarray:
    T = dist.truncation_level
    cond = T is not None and dist.truncation_mode == TruncationMode.CONDITION
    kind = dist.kind

    if kind in (DistributionKind.RADEMACHER, DistributionKind.TWO_POINT):
        values, probs = _atoms(kind, dist.p)
        if cond:
            keep = np.abs(values) <= T
            values, probs = values[keep], probs[keep] / probs[keep].sum()
        if len(values) == 1:
            y = np.full(size, values[0])
        else:
            y = np.where(rng.random(size) < probs[0], values[0], values[1])
    elif cond:
        law = _continuous(kind, dist.df)
        lo, hi = law.cdf(-T), law.cdf(T)
        y = law.ppf(rng.uniform(lo, hi, size))
    elif kind == DistributionKind.GAUSSIAN:
        y = rng.standard_normal(size)
    elif kind == DistributionKind.UNIFORM:
        y = rng.uniform(-SQRT3, SQRT3, size)
    else:
        y = rng.standard_t(dist.df, size)

    if T is not None and not cond:
        y = np.where(np.abs(y) <= T, y, 0.0)
    return (y - dist.shift) / dist.scale


# ----------------------------------------------------------------------------
# Wigner matrices
# ----------------------------------------------------------------------------

class WignerSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int
    offdiag: EntryDistribution
    diag: EntryDistribution
    sigma: float = 1.0
    seed: int = 0

    @model_validator(mode="after")
    def _check(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if abs(self.offdiag.nu2 - 1.0) > MOMENT_TOL:
            raise ValueError(f"off-diagonal law must have variance 1, got {self.offdiag.nu2}")
        if abs(self.diag.nu2 - self.sigma ** 2) > MOMENT_TOL * max(1.0, self.sigma ** 2):
            raise ValueError(f"diagonal law must have variance sigma^2={self.sigma ** 2}, got {self.diag.nu2}")
        return self


def make_wigner_spec(n: int, kind="gaussian", params: Optional[Dict[str, Any]] = None, sigma: float = 1.0,
                     seed: int = 0, truncate: bool = False, diag_kind=None,
                     diag_params: Optional[Dict[str, Any]] = None, truncation_mode="zero") -> WignerSpec:
    offdiag = make_distribution(kind, params)
    diag = make_distribution(diag_kind or kind, diag_params if diag_kind else params, variance=sigma ** 2)
    if truncate:
        # the diagonal keeps its own variance sigma^2 through the pipeline
        offdiag = truncate_center_rescale(offdiag, n, mode=truncation_mode)
        diag = truncate_center_rescale(diag, n, mode=truncation_mode)
    return WignerSpec(n=n, offdiag=offdiag, diag=diag, sigma=sigma, seed=seed)


def replica_seed(master: int, n: int, replica: int) -> int:
    """Per-matrix seed, independent of the order in which replicas are produced."""
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=(int(n), int(replica)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class SymmetricMatrix:
    """
    Upper triangle (row-major, diagonal included) of W_n = n^{-1/2} (x_ij).
    """
    n: int
    packed: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        if self.packed.shape != (self.n * (self.n + 1) // 2,):
            raise ValueError(f"packed storage of length {self.packed.shape} does not match n={self.n}")

    def to_dense(self) -> np.ndarray:
        rows, cols = np.triu_indices(self.n)
        a = np.empty((self.n, self.n))
        a[rows, cols] = self.packed
        a[cols, rows] = self.packed
        return a

    def diagonal(self) -> np.ndarray:
        rows, cols = np.triu_indices(self.n)
        return self.packed[rows == cols]

    def trace(self) -> float:
        return float(self.diagonal().sum())

    def frobenius_sq(self) -> float:
        d = self.diagonal()
        return float(2.0 * np.sum(self.packed ** 2) - np.sum(d ** 2))

    @classmethod
    def from_dense(cls, a: np.ndarray, seed: Optional[int] = None) -> "SymmetricMatrix":
        a = np.asarray(a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("expected a square matrix")
        if not np.array_equal(a, a.T):
            raise ValueError("matrix is not symmetric")
        rows, cols = np.triu_indices(a.shape[0])
        return cls(n=a.shape[0], packed=a[rows, cols].copy(), seed=seed)


def sample_wigner(spec: WignerSpec) -> SymmetricMatrix:
    """
    Draw diagonal entries from spec.diag and the strict upper triangle from spec.offdiag, scaled by n^{-1/2}.
    """
    n = spec.n
    rng = np.random.default_rng(spec.seed)
    diag = spec.diag.sample(rng, n)
    off = spec.offdiag.sample(rng, n * (n - 1) // 2)

    rows, cols = np.triu_indices(n)
    packed = np.empty(n * (n + 1) // 2)
    on_diag = rows == cols
    packed[on_diag] = diag
    packed[~on_diag] = off
    packed /= math.sqrt(n)
    return SymmetricMatrix(n=n, packed=packed, seed=spec.seed)
