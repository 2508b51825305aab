import math
import pickle

import numpy as np
import pytest

from execution import harness
from execution.bounds import BoundReport
from execution.config import RunConfig
from execution.harness import (
    DeltaSummary,
    ReplicaError,
    bai_experiment,
    delta_n_estimate,
    diag_experiment,
    exit_code,
    lawcheck_experiment,
    rate_experiment,
    rate_fit,
    run_diagnostics,
    run_replicas,
    summarize_deltas,
    variance_experiment,
)
from execution.law import SemicircleLaw
from execution.spectra import delta_p


def _summary(n, median):
    return DeltaSummary(n=n, replicas=1, median=median, q25=median, q75=median, mean=median)


def small_diag(**extra):
    return {
        "n_grid": [8, 16],
        "v_grid": [0.25, 0.5],
        "replicas": 3,
        "indices": [0, 1],
        "identity_n_grid": [8],
        "identity_matrices": 2,
        "identity_points": 3,
        "rank_one_trials": 50,
        "rank_one_n_max": 10,
        "quadratic_form_reps": 20000,
        "quadratic_form_matrices": 1,
        "quadratic_form_n": 4,
    } | extra


def test_replica_error_survives_pickling():
    err = pickle.loads(pickle.dumps(ReplicaError(64, 7, "no convergence")))
    assert isinstance(err, ReplicaError)
    assert (err.n, err.replica) == (64, 7)
    assert "n=64 replica=7" in str(err)


def test_single_replica_is_deterministic():
    cfg = RunConfig(n_grid=[4], replicas=1, seed=3)
    a = run_replicas(cfg)
    b = run_replicas(cfg)
    assert np.array_equal(a.spectra[4][0].eigenvalues, b.spectra[4][0].eigenvalues)
    assert a.sn[4].shape == (1, 1)


def test_worker_count_does_not_change_results():
    cfg = RunConfig(n_grid=[8, 16], replicas=5, seed=11, z_grid=[(0.0, 1.0), (1.0, 0.5)])
    serial = run_replicas(cfg)
    parallel = run_replicas(cfg.model_copy(update={"workers": 2}))
    for n in (8, 16):
        for s, p in zip(serial.spectra[n], parallel.spectra[n]):
            assert np.array_equal(s.eigenvalues, p.eigenvalues)
            assert s.seed == p.seed
        assert np.array_equal(serial.sn[n], parallel.sn[n])


def test_replicas_have_distinct_seeds_and_small_invariants():
    rs = run_replicas(RunConfig(n_grid=[32], replicas=6, seed=1))
    assert len({s.seed for s in rs.spectra[32]}) == 6
    assert rs.invariants[32].shape == (6, 2)
    assert rs.invariants[32].max() <= 1e-8


def test_median_delta_p_scale():
    n = 64
    rs = run_replicas(RunConfig(n_grid=[n], replicas=100, seed=20))
    median = float(np.median(rs.deltas(n)))
    assert 0.2 / math.sqrt(n) <= median <= 5.0 / math.sqrt(n)


def test_rate_fit_exact_square_root_decay():
    fit = rate_fit([_summary(n, 0.7 / math.sqrt(n)) for n in (128, 256, 512, 1024)])
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.witness_ratio == pytest.approx(1.0)
    assert fit.sqrt_n_median == pytest.approx([0.7] * 4)


def test_rate_fit_inverse_decay():
    fit = rate_fit([_summary(n, 3.0 / n) for n in (16, 64, 32)])
    assert fit.slope == pytest.approx(-1.0, abs=1e-12)
    assert [s.n for s in fit.summaries] == [16, 32, 64]


def test_rate_fit_degenerate_and_invalid():
    fit = rate_fit([_summary(n, 0.1) for n in (10, 20, 40)])
    assert fit.degenerate
    assert fit.slope == 0.0
    assert math.isinf(fit.slope_se)
    with pytest.raises(ValueError, match="at least 3"):
        rate_fit([_summary(10, 0.1), _summary(20, 0.05)])
    with pytest.raises(ValueError):
        rate_fit([_summary(10, 0.0), _summary(20, 0.05), _summary(40, 0.02)])


def test_summarize_deltas():
    s = summarize_deltas(16, [0.4, 0.1, 0.3, 0.2])
    assert s.median == pytest.approx(0.25)
    assert s.q25 <= s.median <= s.q75
    assert s.mean == pytest.approx(0.25)
    assert s.sqrt_n_times_median == pytest.approx(1.0)
    with pytest.raises(ValueError):
        summarize_deltas(16, [])


def test_delta_n_estimate():
    rs = run_replicas(RunConfig(n_grid=[32], replicas=30, seed=4))
    law = SemicircleLaw()
    spectra = rs.spectra[32]
    assert delta_n_estimate(spectra[:1], law) == pytest.approx(delta_p(spectra[0], law))
    assert delta_n_estimate([spectra[0]] * 12, law) == delta_p(spectra[0], law)
    assert delta_n_estimate(spectra, law) < float(np.median(rs.deltas(32)))


def test_rate_experiment_small():
    cfg = RunConfig(n_grid=[16, 32, 64], replicas=5, seed=2, checks=["rate", "delta_n"])
    rs, fit, reports = rate_experiment(cfg)
    assert fit is not None and len(fit.summaries) == 3
    names = [r.name for r in reports]
    assert names[:2] == ["rate_slope", "rate_witness"]
    assert names.count("delta_n") == 3
    assert all(r.asserted for r in reports if r.name.startswith("rate"))
    assert not any(r.asserted for r in reports if r.name == "delta_n")


def test_rate_experiment_flags_heavy_tails():
    cfg = RunConfig(n_grid=[16, 32, 64], replicas=3, checks=["rate"],
                    ensemble={"kind": "student_t", "params": {"df": 3}})
    _, _, reports = rate_experiment(cfg)
    assert all(not r.asserted and r.flags for r in reports)
    truncated = cfg.model_copy(update={"truncate": True})
    truncated = RunConfig.model_validate(truncated.model_dump())
    _, _, reports = rate_experiment(truncated)
    assert all(r.asserted and not r.flags for r in reports)


def test_rate_experiment_skips_fit_with_two_sizes():
    _, fit, reports = rate_experiment(RunConfig(n_grid=[16, 32], replicas=2, checks=["rate"]))
    assert fit is None
    assert reports == []


def test_variance_experiment_small():
    cfg = RunConfig(n_grid=[16, 32], replicas=50, seed=9, z_grid=[(0.0, 1.0), (1.0, 1.0), (-1.0, 1.0)],
                    checks=["variance", "moment", "fluctuation"])
    rs, reports = variance_experiment(cfg)
    names = [r.name for r in reports]
    assert names.count("fluctuation_integral") == 2
    assert names.count("variance_bound") == 2
    assert "variance_bound_drift" in names
    assert "moment_bound_l1_drift" in names and "moment_bound_l2_drift" in names
    assert rs.sn[16].shape == (50, 3)


def test_bai_experiment_passes():
    cfg = RunConfig(n_grid=[64], replicas=2, seed=5, checks=["bai"])
    _, reports = bai_experiment(cfg)
    assert len(reports) == 2
    assert all(r.passed for r in reports)
    assert reports[0].constants["v"] == pytest.approx(2.0 / 8.0)
    assert reports[0].grid["n"] == 64


def test_run_diagnostics_small():
    cfg = RunConfig(seed=6, diag=small_diag())
    diags = run_diagnostics(cfg)
    assert set(diags.rows) == {(8, 0.25), (8, 0.5), (16, 0.25), (16, 0.5)}
    assert len(diags.rows[(8, 0.25)]) == 3 * 2
    for (n, v), rows in diags.rows.items():
        assert all(abs(r.beta) <= 1.0 / v + 1e-12 for r in rows)
        assert all(r.es_n_estimate == diags.es_n[(n, v)] for r in rows)


def test_diag_experiment_small():
    cfg = RunConfig(seed=6, checks=["beta_exceedance", "leave_one_out_moments", "an_bn", "identities", "rank_one",
                                    "quadratic_form"],
                    diag=small_diag())
    diags, reports = diag_experiment(cfg)
    names = [r.name for r in reports]
    assert names.count("beta_exceedance") == 4
    assert "beta_exceedance_drift" in names
    assert "an_bn" in names and "resolvent_identities" in names and "rank_one_perturbation" in names
    # two kinds, one matrix each, variance and p=4 bound
    assert sum(n.startswith("quadratic_form") for n in names) == 4
    forced = [r for r in reports if r.name == "beta_exceedance" and r.grid["v"] == 0.5]
    assert all(r.asserted and r.passed for r in forced)
    assert exit_code(reports) == 0


def test_auxiliary_checks_without_diagnostics():
    diags, reports = diag_experiment(RunConfig(checks=["rank_one"], diag=small_diag()))
    assert diags is None
    assert [r.name for r in reports] == ["rank_one_perturbation"]


def test_lawcheck_experiment():
    reports = lawcheck_experiment(RunConfig(checks=["lawcheck"]))
    assert exit_code(reports) == 0


def test_exit_code():
    ok = BoundReport(name="a", lhs=[1.0], rhs=[2.0])
    bad = BoundReport(name="b", lhs=[3.0], rhs=[2.0])
    informational = BoundReport(name="c", lhs=[3.0], rhs=[2.0], asserted=False)
    assert exit_code([ok, informational]) == 0
    assert exit_code([ok, bad]) == 1
    assert exit_code([]) == 0


def test_diag_experiment_reports_leave_one_out_moments():
    cfg = RunConfig(seed=6, checks=["leave_one_out_moments"], diag=small_diag())
    diags, reports = diag_experiment(cfg)
    assert diags is not None
    assert [r.name for r in reports] == ["gamma_fourth_moment", "eps_fourth_moment"]
    for r in reports:
        assert r.grid["n"] == [8, 8, 16, 16]
        # three replicas is too few to assert
        assert not r.asserted
        assert all(math.isfinite(x) for x in r.details["scaled"])


def test_diag_worker_failure_names_the_replica(monkeypatch):
    def broken(*args, **kwargs):
        raise ValueError("singular resolvent system")

    monkeypatch.setattr(harness, "leave_one_out_table", broken)
    with pytest.raises(ReplicaError) as info:
        run_diagnostics(RunConfig(seed=6, diag=small_diag()))
    assert (info.value.n, info.value.replica) == (8, 0)
    assert "singular" in info.value.message
