import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.integrate import quad

from execution.law import (
    QuadratureError,
    SemicircleLaw,
    UpperHalfPoint,
    _quad,
    gap_integral_chain,
    integral_bound_parts,
    integral_bound_value,
    law_curve,
    sc_cdf,
    sc_cdf_integral,
    sc_cdf_quadrature,
    sc_pdf,
    sc_quantile,
    sc_stieltjes,
    sc_stieltjes_quadrature,
)


def test_cdf_median_is_exact():
    assert sc_cdf(0.0) == 0.5
    assert sc_cdf(0.0, sigma=3.0) == 0.5


@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
def test_cdf_endpoints_and_clamping(sigma):
    assert sc_cdf(-2.0 * sigma, sigma) == 0.0
    assert sc_cdf(2.0 * sigma, sigma) == pytest.approx(1.0, abs=1e-15)
    assert sc_cdf(-10.0, sigma) == 0.0
    assert sc_cdf(10.0, sigma) == 1.0
    x = np.linspace(-2.5 * sigma, 2.5 * sigma, 501)
    assert np.all(np.diff(sc_cdf(x, sigma)) >= 0)


@pytest.mark.parametrize("sigma", [1.0, 1.7])
def test_cdf_matches_quadrature(sigma):
    for x in np.linspace(-2.0 * sigma, 2.0 * sigma, 41):
        assert sc_cdf(x, sigma) == pytest.approx(sc_cdf_quadrature(x, sigma), abs=1e-10)


def test_pdf_normalization_and_peak():
    mass, _ = quad(lambda t: sc_pdf(t, 1.5), -3.0, 3.0, limit=200)
    assert mass == pytest.approx(1.0, abs=1e-8)
    assert sc_pdf(0.0) == pytest.approx(1.0 / math.pi, rel=1e-15)
    assert sc_pdf(2.5) == 0.0


def test_quantile_inverts_cdf():
    for p in (0.01, 0.25, 0.5, 0.8, 0.999):
        assert sc_cdf(sc_quantile(p)) == pytest.approx(p, abs=1e-13)
    assert sc_quantile(0.0) == -2.0
    assert sc_quantile(1.0) == 2.0
    with pytest.raises(ValueError):
        sc_quantile(1.5)


def test_cdf_integral_closed_form():
    for x in (-1.5, 0.0, 0.7, 1.99):
        expected, _ = quad(lambda t: sc_cdf(t), -2.0, x, epsabs=1e-13)
        assert sc_cdf_integral(x) == pytest.approx(expected, abs=1e-10)
    assert sc_cdf_integral(-5.0) == 0.0
    assert sc_cdf_integral(2.0) == pytest.approx(2.0, abs=1e-14)
    assert sc_cdf_integral(7.0) == 7.0
    assert sc_cdf_integral(4.0, sigma=2.0) == pytest.approx(4.0, abs=1e-14)


def test_stieltjes_solves_quadratic(rng):
    z = rng.uniform(-5.0, 5.0, 2000) + 1j * 10.0 ** rng.uniform(-6.0, 2.0, 2000)
    s = sc_stieltjes(z)
    assert np.max(np.abs(s * s + z * s + 1.0)) <= 1e-12
    assert np.all(s.imag > 0)
    assert np.all(np.abs(s) <= 1.0 / z.imag + 1e-12)
    assert np.all(np.abs(s) <= 1.0 + 1e-12)


def test_stieltjes_near_support_edges_and_far_away():
    for z in (2.0 + 1e-9j, -2.0 + 1e-9j, 1e6 + 1j, 1j * 1e6):
        s = sc_stieltjes(z)
        assert abs(s * s + z * s + 1.0) <= 1e-9
        assert s.imag > 0
    # s(z) ~ -1/z at infinity
    assert sc_stieltjes(1e8j) == pytest.approx(-1.0 / 1e8j, rel=1e-10)


def test_stieltjes_at_i():
    # s(i) = i (sqrt(5) - 1) / 2
    assert sc_stieltjes(1j) == pytest.approx(1j * (math.sqrt(5.0) - 1.0) / 2.0, abs=1e-15)


@pytest.mark.parametrize("z", [0.3 + 0.05j, -1.9 + 0.2j, 2.5 + 0.1j, 0.0 + 2.0j, -3.0 + 0.5j])
def test_stieltjes_matches_quadrature(z):
    assert abs(sc_stieltjes(z) - sc_stieltjes_quadrature(z)) <= 1e-8


def test_stieltjes_sigma_scaling():
    z = np.array([0.5 + 0.2j, -3.0 + 1.0j])
    assert_allclose(sc_stieltjes(z, sigma=2.0), sc_stieltjes(z / 2.0) / 2.0, rtol=1e-14)
    s = sc_stieltjes(z, sigma=2.0)
    assert_allclose(4.0 * s * s + z * s + 1.0, 0.0, atol=1e-12)


def test_stieltjes_rejects_lower_half_plane():
    with pytest.raises(ValueError):
        sc_stieltjes(1.0 + 0.0j)
    with pytest.raises(ValueError):
        sc_stieltjes(np.array([1.0 + 1.0j, 1.0 - 1.0j]))


def test_upper_half_point():
    assert UpperHalfPoint(0.5, 0.25).z == 0.5 + 0.25j
    assert sc_stieltjes(UpperHalfPoint(0.0, 1.0)) == pytest.approx(sc_stieltjes(1j))
    with pytest.raises(ValueError):
        UpperHalfPoint(0.0, 0.0)


def test_integral_bound_value():
    parts = integral_bound_parts()
    assert parts["inner"] == pytest.approx(math.pi, abs=1e-10)
    assert parts["outer"] == pytest.approx(2.0 * math.acosh(8.0), abs=1e-10)
    value = integral_bound_value()
    assert 8.5 < value < 8.9
    assert value < 10.0


@pytest.mark.parametrize("v", [1.0, 0.2])
def test_gap_integral_chain(v):
    chain = gap_integral_chain(v)
    # |z + 2 s(z)| = |sqrt(z^2 - 4)|, so the first two members agree
    assert chain["gap"] == pytest.approx(chain["modulus"], rel=1e-8)
    assert chain["modulus"] <= chain["real_axis"]
    with pytest.raises(ValueError):
        gap_integral_chain(0.0)


def test_quadrature_failure_is_reported():
    with pytest.raises(QuadratureError):
        _quad(lambda x: 1.0 / x, 0.0, 1.0)


def test_law_object_and_curve():
    law = SemicircleLaw(2.0)
    assert law.support == (-4.0, 4.0)
    assert law.max_density == pytest.approx(1.0 / (2.0 * math.pi))
    x, pdf, cdf = law_curve(2.0, num=11)
    assert x[0] == -4.0 and x[-1] == 4.0
    assert_allclose(pdf, law.pdf(x))
    assert_allclose(cdf, law.cdf(x))
    with pytest.raises(ValueError):
        SemicircleLaw(0.0)
