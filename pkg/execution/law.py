import logging
import math
import warnings
from dataclasses import dataclass
from typing import Dict, Tuple, Union

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import brentq

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# Integration window used by the gap integral (u in [-16, 16]).
GAP_WINDOW = 16.0


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class UpperHalfPoint:
    u: float
    v: float

    def __post_init__(self):
        if not self.v > 0:
            raise ValueError(f"Upper half-plane point needs v > 0, got v={self.v}")

    @property
    def z(self) -> complex:
        return complex(self.u, self.v)


def _as_complex(z) -> Union[complex, np.ndarray]:
    if isinstance(z, UpperHalfPoint):
        return z.z
    return z


def _check_sigma(sigma: float):
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")


def sc_pdf(x: ArrayLike, sigma: float = 1.0) -> ArrayLike:
    """
    Semicircle density sqrt(4 sigma^2 - x^2) / (2 pi sigma^2) on [-2 sigma, 2 sigma], 0 outside.
    """
    _check_sigma(sigma)
    x = np.asarray(x, dtype=float)
    inside = np.clip(4.0 * sigma * sigma - x * x, 0.0, None)
    out = np.sqrt(inside) / (2.0 * np.pi * sigma * sigma)
    return out if out.ndim else float(out)


def sc_cdf(x: ArrayLike, sigma: float = 1.0) -> ArrayLike:
    """
    Closed-form semicircle CDF, clamped to 0 / 1 outside the support.
    """
    _check_sigma(sigma)
    x = np.clip(np.asarray(x, dtype=float), -2.0 * sigma, 2.0 * sigma)
    root = np.sqrt(np.clip(4.0 * sigma * sigma - x * x, 0.0, None))
    out = 0.5 + x * root / (4.0 * np.pi * sigma * sigma) + np.arcsin(x / (2.0 * sigma)) / np.pi
    out = np.clip(out, 0.0, 1.0)
    return out if out.ndim else float(out)


def sc_cdf_integral(x: ArrayLike, sigma: float = 1.0) -> ArrayLike:
    """
    Antiderivative H(x) = int_{-inf}^{x} F(t) dt of the semicircle CDF.

    H(x) = x F(x) + (4 sigma^2 - x^2)^{3/2} / (6 pi sigma^2) inside the support,
    0 to the left and 2 sigma + (x - 2 sigma) to the right.
    """
    _check_sigma(sigma)
    x = np.asarray(x, dtype=float)
    xc = np.clip(x, -2.0 * sigma, 2.0 * sigma)
    cube = np.clip(4.0 * sigma * sigma - xc * xc, 0.0, None) ** 1.5
    inner = xc * sc_cdf(xc, sigma) + cube / (6.0 * np.pi * sigma * sigma)
    out = np.where(x < -2.0 * sigma, 0.0, np.where(x > 2.0 * sigma, x, inner))
    return out if out.ndim else float(out)


def sc_quantile(p: float, sigma: float = 1.0) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    _check_sigma(sigma)
    if p == 0.0:
        return -2.0 * sigma
    if p == 1.0:
        return 2.0 * sigma
    return brentq(lambda x: sc_cdf(x, sigma) - p, -2.0 * sigma, 2.0 * sigma, xtol=1e-15, rtol=1e-15, maxiter=200)


def sc_stieltjes(z, sigma: float = 1.0):
    """
    Stieltjes transform s(z) = int f(x)/(x - z) dx of the semicircle law.

    The two roots of s^2 + z s + 1 = 0 multiply to 1; the one in the upper
    half-plane is the root of modulus < 1. We compute the large root without
    cancellation and invert it.
    """
    _check_sigma(sigma)
    z = np.asarray(_as_complex(z), dtype=complex) / sigma
    if np.any(z.imag <= 0):
        raise ValueError("Stieltjes transform requires Im z > 0")
    root = np.sqrt(z * z - 4.0)
    aligned = (np.conj(z) * root).real >= 0
    big = np.where(aligned, (-z - root) / 2.0, (-z + root) / 2.0)
    s = 1.0 / big / sigma
    return s if s.ndim else complex(s)


def _quad(func, a: float, b: float, **kwargs) -> Tuple[float, float]:
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            return quad(func, a, b, **kwargs)
        except IntegrationWarning as e:
            logger.error(f"Quadrature failed on [{a}, {b}]: {e}")
            raise QuadratureError(f"quadrature did not converge on [{a}, {b}]: {e}") from e


def integral_bound_parts() -> Dict[str, float]:
    # inner: int_{-2}^{2} (u+2)^{-1/2} (2-u)^{-1/2} du
    inner, inner_err = _quad(lambda u: 1.0, -2.0, 2.0, weight="alg", wvar=(-0.5, -0.5))
    # outer: 2 * int_{2}^{16} (u-2)^{-1/2} (u+2)^{-1/2} du
    half, half_err = _quad(lambda u: 1.0 / math.sqrt(u + 2.0), 2.0, GAP_WINDOW, weight="alg", wvar=(-0.5, 0.0))
    return {
        "inner": inner,
        "outer": 2.0 * half,
        "total": inner + 2.0 * half,
        "abserr": inner_err + 2.0 * half_err,
    }


def integral_bound_value() -> float:
    """
    int_{-16}^{16} du / sqrt(|u^2 - 4|), integrable endpoint singularities at +-2 handled by algebraic weights.
    """
    return integral_bound_parts()["total"]


def gap_integral_chain(v: float) -> Dict[str, float]:
    """
    Evaluate the three members of the chain
    int 1/|z+2s(z)| du <= int 1/sqrt|z^2-4| du <= int 1/sqrt|u^2-4| du over u in [-16, 16] at height v.
    """
    if not v > 0:
        raise ValueError(f"v must be > 0, got {v}")

    def gap(u):
        z = complex(u, v)
        return 1.0 / abs(z + 2.0 * sc_stieltjes(z))

    def modulus(u):
        z = complex(u, v)
        return 1.0 / math.sqrt(abs(z * z - 4.0))

    opts = dict(points=[-2.0, 2.0], limit=400, epsabs=1e-11, epsrel=1e-10)
    return {
        "v": v,
        "gap": _quad(gap, -GAP_WINDOW, GAP_WINDOW, **opts)[0],
        "modulus": _quad(modulus, -GAP_WINDOW, GAP_WINDOW, **opts)[0],
        "real_axis": integral_bound_value(),
    }


def sc_cdf_quadrature(x: float, sigma: float = 1.0) -> float:
    """
    CDF by adaptive quadrature of the density, square-root endpoints carried by algebraic weights.
    """
    _check_sigma(sigma)
    r = 2.0 * sigma
    if x <= -r:
        return 0.0
    opts = dict(epsabs=1e-13, epsrel=1e-12, limit=200)
    total, _ = _quad(lambda t: 1.0, -r, r, weight="alg", wvar=(0.5, 0.5), **opts)
    if x >= r:
        val = total
    elif x <= 0.0:
        # integrate from the nearer edge so the other root stays away from the interval
        val, _ = _quad(lambda t: math.sqrt(r - t), -r, x, weight="alg", wvar=(0.5, 0.0), **opts)
    else:
        right, _ = _quad(lambda t: math.sqrt(t + r), x, r, weight="alg", wvar=(0.0, 0.5), **opts)
        val = total - right
    return val / (2.0 * math.pi * sigma * sigma)


def sc_stieltjes_quadrature(z, sigma: float = 1.0) -> complex:
    """
    int f(x) / (x - z) dx by quadrature, split at Re z so the peak sits on an endpoint.
    """
    _check_sigma(sigma)
    z = complex(_as_complex(z))
    if not z.imag > 0:
        raise ValueError("Stieltjes transform requires Im z > 0")
    r = 2.0 * sigma
    norm = 2.0 * math.pi * sigma * sigma
    opts = dict(epsabs=1e-11, epsrel=1e-10, limit=500)

    def piece(lo, hi, wvar, factor):
        re, _ = _quad(lambda t: factor(t) * (1.0 / (t - z)).real, lo, hi, weight="alg", wvar=wvar, **opts)
        im, _ = _quad(lambda t: factor(t) * (1.0 / (t - z)).imag, lo, hi, weight="alg", wvar=wvar, **opts)
        return complex(re, im)

    u = z.real
    if -r < u < r:
        total = piece(-r, u, (0.5, 0.0), lambda t: math.sqrt(r - t)) \
            + piece(u, r, (0.0, 0.5), lambda t: math.sqrt(t + r))
    else:
        total = piece(-r, r, (0.5, 0.5), lambda t: 1.0)
    return total / norm


def law_curve(sigma: float = 1.0, num: int = 401) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    x = np.linspace(-2.0 * sigma, 2.0 * sigma, num)
    return x, sc_pdf(x, sigma), sc_cdf(x, sigma)


@dataclass(frozen=True)
class SemicircleLaw:
    sigma: float = 1.0

    def __post_init__(self):
        _check_sigma(self.sigma)

    @property
    def support(self) -> Tuple[float, float]:
        return -2.0 * self.sigma, 2.0 * self.sigma

    def pdf(self, x):
        return sc_pdf(x, self.sigma)

    def cdf(self, x):
        return sc_cdf(x, self.sigma)

    def cdf_integral(self, x):
        return sc_cdf_integral(x, self.sigma)

    def quantile(self, p: float) -> float:
        return sc_quantile(p, self.sigma)

    def stieltjes(self, z):
        return sc_stieltjes(z, self.sigma)

    @property
    def max_density(self) -> float:
        return 1.0 / (np.pi * self.sigma)
