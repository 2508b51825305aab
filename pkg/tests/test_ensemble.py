import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from pydantic import ValidationError
from scipy import stats

from execution.ensemble import (
    SymmetricMatrix,
    TruncationMode,
    WignerSpec,
    make_distribution,
    make_wigner_spec,
    replica_seed,
    sample_wigner,
    truncate_center_rescale,
)


@pytest.mark.parametrize("kind,params,nu4,nu6", [
    ("gaussian", None, 3.0, 15.0),
    ("rademacher", None, 1.0, 1.0),
    ("uniform", None, 9.0 / 5.0, 27.0 / 7.0),
    ("student_t", {"df": 5}, 9.0, math.inf),
])
def test_standardized_moments(kind, params, nu4, nu6):
    dist = make_distribution(kind, params)
    assert dist.nu2 == pytest.approx(1.0, abs=1e-10)
    assert dist.nu3 == pytest.approx(0.0, abs=1e-10)
    assert dist.nu4 == pytest.approx(nu4, rel=1e-8)
    if math.isinf(nu6):
        assert math.isinf(dist.nu6)
        assert not dist.has_finite_sixth_moment
    else:
        assert dist.nu6 == pytest.approx(nu6, rel=1e-8)


def test_two_point_is_centered():
    dist = make_distribution("two_point", {"p": 0.3})
    assert dist.expect(lambda x: x) == pytest.approx(0.0, abs=1e-12)
    assert dist.expect(lambda x: x ** 2) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("kind,params,message", [
    ("student_t", {"df": 2}, "df > 2"),
    ("student_t", None, "requires parameter df"),
    ("two_point", {"p": 0.0}, "0 < p < 1"),
    ("two_point", {"p": 1.0}, "0 < p < 1"),
    ("cauchy", None, "unknown distribution kind"),
    ("gaussian", {"df": 3}, "unexpected parameters"),
])
def test_invalid_parameters(kind, params, message):
    with pytest.raises(ValueError, match=message):
        make_distribution(kind, params)


def test_truncated_gaussian_zero_mode_variance():
    # x 1{|x| <= 2} keeps the zeroed mass at 0: variance 0.7385 before rescaling
    dist = truncate_center_rescale(make_distribution("gaussian"), n=16)
    assert dist.truncation_level == pytest.approx(2.0)
    assert dist.scale ** 2 == pytest.approx(0.73853, abs=1e-4)
    assert dist.nu2 == pytest.approx(1.0, abs=1e-10)
    assert dist.shift == 0.0


def test_truncated_gaussian_condition_mode_variance():
    dist = truncate_center_rescale(make_distribution("gaussian"), n=16, mode="condition")
    assert dist.truncation_mode == TruncationMode.CONDITION
    assert dist.scale ** 2 == pytest.approx(0.7737, abs=1e-4)


@pytest.mark.parametrize("mode", ["zero", "condition"])
@pytest.mark.parametrize("kind,params", [
    ("gaussian", None), ("student_t", {"df": 3}), ("uniform", None), ("two_point", {"p": 0.3}),
])
def test_truncation_keeps_mean_zero_and_variance_one(kind, params, mode):
    dist = truncate_center_rescale(make_distribution(kind, params), n=64, mode=mode)
    assert dist.expect(lambda x: x) == pytest.approx(0.0, abs=1e-9)
    assert dist.expect(lambda x: x ** 2) == pytest.approx(1.0, abs=1e-8)
    assert dist.bound <= (64 ** 0.25 + abs(dist.shift)) / dist.scale + 1e-12


def test_truncation_gives_finite_sixth_moment():
    raw = make_distribution("student_t", {"df": 3})
    assert not raw.has_finite_sixth_moment
    assert truncate_center_rescale(raw, n=256).has_finite_sixth_moment


def test_truncation_shift_for_asymmetric_law():
    # two_point(0.1): the atom at 3 is removed by T = 2, leaving a shifted law
    dist = truncate_center_rescale(make_distribution("two_point", {"p": 0.1}), n=16)
    assert dist.shift == pytest.approx(-0.3)
    assert dist.scale == pytest.approx(0.1)


def test_degenerate_truncation_rejected():
    with pytest.raises(ValueError, match="standard deviation is 0"):
        truncate_center_rescale(make_distribution("two_point", {"p": 0.1}), n=16, mode="condition")


def test_moment_method_matches_quadrature():
    dist = make_distribution("uniform")
    assert dist.moment(4) == pytest.approx(dist.expect(lambda x: x ** 4), rel=1e-10)
    assert dist.moment(3, absolute=True) == pytest.approx(dist.expect(lambda x: np.abs(x) ** 3), rel=1e-10)


def within_standard_errors(values: np.ndarray, expected: float, k: float = 5.0) -> bool:
    se = values.std(ddof=1) / math.sqrt(values.size)
    return abs(values.mean() - expected) <= k * se + 1e-12


@pytest.mark.parametrize("mode", ["zero", "condition"])
def test_samples_match_moments(rng, mode):
    dist = truncate_center_rescale(make_distribution("student_t", {"df": 3}), n=16, mode=mode)
    x = dist.sample(rng, 200000)
    assert within_standard_errors(x, 0.0)
    assert within_standard_errors(x ** 2, 1.0)
    assert np.max(np.abs(x)) <= dist.bound + 1e-12


@pytest.mark.parametrize("kind,params,truncate,mode", [
    ("gaussian", None, False, "zero"),
    ("gaussian", None, True, "zero"),
    ("gaussian", None, True, "condition"),
    ("rademacher", None, False, "zero"),
    ("uniform", None, False, "zero"),
    ("uniform", None, True, "condition"),
    ("two_point", {"p": 0.3}, False, "zero"),
    ("two_point", {"p": 0.3}, True, "zero"),
    ("student_t", {"df": 5}, True, "zero"),
    ("student_t", {"df": 5}, True, "condition"),
])
def test_offdiagonal_fourth_moment_matches_nu4(kind, params, truncate, mode):
    n = 448  # n(n-1)/2 = 100128 off-diagonal draws
    spec = make_wigner_spec(n, kind=kind, params=params, seed=replica_seed(11, n, 0), truncate=truncate,
                            truncation_mode=mode)
    x = sample_wigner(spec).to_dense()[np.triu_indices(n, 1)] * math.sqrt(n)
    assert x.size == 100128
    assert within_standard_errors(x ** 4, spec.offdiag.nu4)


def test_rademacher_samples_are_signs(rng):
    x = make_distribution("rademacher").sample(rng, 1000)
    assert set(np.unique(x)) == {-1.0, 1.0}


def test_replica_seed_is_deterministic_and_distinct():
    assert replica_seed(7, 64, 3) == replica_seed(7, 64, 3)
    seeds = {replica_seed(7, n, r) for n in (64, 128) for r in range(50)}
    assert len(seeds) == 100
    assert replica_seed(7, 64, 3) != replica_seed(8, 64, 3)


def test_sample_wigner_is_symmetric_and_reproducible():
    spec = make_wigner_spec(12, seed=5)
    a = sample_wigner(spec).to_dense()
    assert_allclose(a, a.T)
    assert np.array_equal(a, sample_wigner(spec).to_dense())
    assert not np.array_equal(a, sample_wigner(spec.model_copy(update={"seed": 6})).to_dense())


def test_sample_wigner_scaling():
    n = 1000
    spec = make_wigner_spec(n, sigma=2.0, seed=1)
    M = sample_wigner(spec)
    scaled_diag = M.diagonal() * math.sqrt(n)
    assert scaled_diag.var() == pytest.approx(4.0, abs=0.7)
    off = M.to_dense()[np.triu_indices(n, 1)] * math.sqrt(n)
    assert off.var() == pytest.approx(1.0, abs=0.01)
    # off-diagonal entries are Gaussian here
    assert stats.kstest(off[:5000], "norm").pvalue > 1e-4


def test_diagonal_law_can_differ():
    spec = make_wigner_spec(8, kind="gaussian", diag_kind="rademacher", sigma=1.0)
    d = sample_wigner(spec).diagonal() * math.sqrt(8)
    assert set(np.abs(d).round(12)) == {1.0}


def test_wigner_spec_validates_variances():
    off = make_distribution("gaussian", variance=2.0)
    diag = make_distribution("gaussian")
    with pytest.raises(ValidationError, match="variance 1"):
        WignerSpec(n=4, offdiag=off, diag=diag)
    with pytest.raises(ValidationError, match="sigma"):
        WignerSpec(n=4, offdiag=diag, diag=diag, sigma=3.0)
    with pytest.raises(ValidationError, match="n must be >= 1"):
        WignerSpec(n=0, offdiag=diag, diag=diag)


def test_symmetric_matrix_round_trip():
    a = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 5.0], [3.0, 5.0, 6.0]])
    M = SymmetricMatrix.from_dense(a)
    assert np.array_equal(M.packed, [1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
    assert np.array_equal(M.to_dense(), a)
    assert M.trace() == 11.0
    assert M.frobenius_sq() == pytest.approx(np.sum(a * a))


def test_symmetric_matrix_rejects_asymmetric():
    with pytest.raises(ValueError, match="not symmetric"):
        SymmetricMatrix.from_dense(np.array([[0.0, 1.0], [2.0, 0.0]]))
