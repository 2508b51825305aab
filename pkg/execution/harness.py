import logging
import math
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.stats import linregress

from execution.bounds import (
    DRIFT_FACTOR,
    EXCEEDANCE_DRIFT_FACTOR,
    BoundReport,
    an_bn_check,
    bai_rhs,
    beta_exceedance_check,
    cross_n_drift,
    fluctuation_integral,
    law_self_checks,
    leave_one_out_moment_check,
    moment_bound_check,
    quadratic_form_bound_check,
    quadratic_form_variance_check,
    rank_one_check,
    resolvent_identity_check,
    validate_constants,
    variance_bound_check,
)
from execution.config import RunConfig
from execution.ensemble import WignerSpec, make_distribution, replica_seed, sample_wigner
from execution.law import SemicircleLaw
from execution.resolvent import LeaveOneOutDiag, empirical_stieltjes, leave_one_out_table
from execution.spectra import ConvergenceError, Spectrum, delta_p, eigenvalues, esd, kolmogorov_distance, \
    mean_esd, spectrum_checks

logger = logging.getLogger(__name__)

MIN_RATE_POINTS = 3
MIN_DELTA_N_REPLICAS = 10
RATE_SLOPE_LIMIT = -0.45
WITNESS_RATIO_LIMIT = 3.0


class ReplicaError(RuntimeError):
    """Failure of one (n, replica) task; survives the trip back from a worker process."""

    def __init__(self, n: int, replica: int, message: str):
        super().__init__(f"n={n} replica={replica}: {message}")
        self.n = n
        self.replica = replica
        self.message = message

    def __reduce__(self):
        return ReplicaError, (self.n, self.replica, self.message)


def _parallel_map(func: Callable, tasks: list, workers: int) -> list:
    """Ordered map over tasks; the result never depends on the worker count."""
    if workers <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with Pool(processes=min(workers, len(tasks))) as pool:
        return pool.map(func, tasks)


def _replica_spec(base: WignerSpec, master: int, n: int, r: int) -> WignerSpec:
    return base.model_copy(update={"seed": replica_seed(master, n, r)})


# ----------------------------------------------------------------------------
# Replicas
# ----------------------------------------------------------------------------

def _replica_task(task: Tuple[WignerSpec, int, np.ndarray]):
    spec, r, zs = task
    try:
        M = sample_wigner(spec)
        spectrum = eigenvalues(M)
    except (ConvergenceError, ValueError) as e:
        logger.error(f"Replica n={spec.n} r={r} failed: {e}")
        raise ReplicaError(spec.n, r, str(e)) from e
    sn = empirical_stieltjes(spectrum, zs) if len(zs) else np.empty(0, dtype=complex)
    return spectrum, np.atleast_1d(sn), spectrum_checks(M, spectrum)


@dataclass
class ReplicaSet:
    """Spectra, s_n samples and invariant residuals for every n of a run, ordered by replica index."""
    config: RunConfig
    law: SemicircleLaw
    spectra: Dict[int, List[Spectrum]] = field(default_factory=dict)
    sn: Dict[int, np.ndarray] = field(default_factory=dict)
    invariants: Dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def n_grid(self) -> List[int]:
        return sorted(self.spectra)

    def deltas(self, n: int) -> np.ndarray:
        return np.array([delta_p(s, self.law) for s in self.spectra[n]])


def run_replicas(cfg: RunConfig, zs: Optional[np.ndarray] = None) -> ReplicaSet:
    """
    Sample cfg.replicas matrices for every n in cfg.n_grid and compute their spectra.

    Replica r at size n uses the seed replica_seed(cfg.seed, n, r), so the output is the
    same for any worker count.
    """
    zs = cfg.zs if zs is None else np.asarray(zs, dtype=complex)
    result = ReplicaSet(config=cfg, law=SemicircleLaw(cfg.ensemble.sigma))
    for n in cfg.n_grid:
        base = cfg.ensemble.wigner_spec(n)
        tasks = [(_replica_spec(base, cfg.seed, n, r), r, zs) for r in range(cfg.replicas)]
        logger.info(f"Sampling n={n}: {cfg.replicas} replicas on {cfg.workers} workers")
        out = _parallel_map(_replica_task, tasks, cfg.workers)
        result.spectra[n] = [o[0] for o in out]
        result.sn[n] = np.vstack([o[1] for o in out])
        result.invariants[n] = np.array([o[2] for o in out])
        worst = float(result.invariants[n].max())
        if worst > 1e-8:
            logger.warning(f"n={n}: eigenvalue invariant residual {worst:.3e} exceeds 1e-8")
    return result


# ----------------------------------------------------------------------------
# Rate statistics
# ----------------------------------------------------------------------------

class DeltaSummary(BaseModel):
    n: int
    replicas: int
    median: float
    q25: float
    q75: float
    mean: float

    @property
    def sqrt_n_times_median(self) -> float:
        return math.sqrt(self.n) * self.median


class RateFit(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    summaries: List[DeltaSummary]
    slope: float
    intercept: float
    slope_se: float
    r_squared: float
    degenerate: bool = False

    @property
    def sqrt_n_median(self) -> List[float]:
        return [s.sqrt_n_times_median for s in self.summaries]

    @property
    def witness_ratio(self) -> float:
        seq = self.sqrt_n_median
        return max(seq) / min(seq) if min(seq) > 0 else math.inf


def summarize_deltas(n: int, deltas: Sequence[float]) -> DeltaSummary:
    d = np.asarray(deltas, dtype=float)
    if d.size == 0:
        raise ValueError(f"no Delta_p values for n={n}")
    q25, median, q75 = np.quantile(d, [0.25, 0.5, 0.75])
    return DeltaSummary(n=n, replicas=int(d.size), median=float(median), q25=float(q25), q75=float(q75),
                        mean=float(d.mean()))


def rate_fit(points: Sequence[DeltaSummary]) -> RateFit:
    """
    Least-squares line through (log n, log median Delta_p).
    """
    points = sorted(points, key=lambda s: s.n)
    if len({p.n for p in points}) < MIN_RATE_POINTS:
        raise ValueError(f"rate fit needs at least {MIN_RATE_POINTS} distinct n values, got {len(points)}")
    medians = np.array([p.median for p in points])
    if np.any(medians <= 0):
        raise ValueError("rate fit needs strictly positive medians")
    x = np.log([p.n for p in points])
    y = np.log(medians)
    if np.all(y == y[0]):
        logger.warning("Rate fit input is degenerate (all medians equal)")
        return RateFit(summaries=list(points), slope=0.0, intercept=float(y[0]), slope_se=math.inf,
                       r_squared=0.0, degenerate=True)
    fit = linregress(x, y)
    return RateFit(summaries=list(points), slope=float(fit.slope), intercept=float(fit.intercept),
                   slope_se=float(fit.stderr), r_squared=float(fit.rvalue ** 2))


def delta_n_estimate(spectra: Sequence[Spectrum], law: SemicircleLaw) -> float:
    """Kolmogorov distance between the replica-averaged ESD and the law."""
    if len(spectra) < MIN_DELTA_N_REPLICAS:
        logger.warning(f"Delta_n estimated from only {len(spectra)} replicas")
    return kolmogorov_distance(mean_esd(spectra), law)


def _within_hypotheses(cfg: RunConfig) -> bool:
    ens = cfg.ensemble
    if ens.truncate:
        return True
    return make_distribution(ens.kind, ens.params).has_finite_sixth_moment


def rate_experiment(cfg: RunConfig) -> Tuple[ReplicaSet, Optional[RateFit], List[BoundReport]]:
    """Delta_p per replica, the log-log slope and the sqrt(n) * median witness."""
    rs = run_replicas(cfg, zs=np.empty(0, dtype=complex))
    summaries = [summarize_deltas(n, rs.deltas(n)) for n in rs.n_grid]
    for s in summaries:
        logger.info(f"n={s.n}: median Delta_p {s.median:.5f} (IQR {s.q25:.5f}-{s.q75:.5f}), "
                    f"sqrt(n)*median {s.sqrt_n_times_median:.4f}")

    flags = [] if _within_hypotheses(cfg) else ["entry law has no finite sixth moment and is not truncated"]
    asserted = not flags
    reports = []
    fit = None
    if len(summaries) >= MIN_RATE_POINTS:
        fit = rate_fit(summaries)
        logger.info(f"Rate fit: slope {fit.slope:.4f} +- {fit.slope_se:.4f}, R^2 {fit.r_squared:.4f}")
        if "rate" in cfg.checks:
            reports.append(BoundReport(
                name="rate_slope", lhs=[fit.slope], rhs=[RATE_SLOPE_LIMIT], asserted=asserted, flags=flags,
                details={"slope_se": fit.slope_se, "r_squared": fit.r_squared, "degenerate": fit.degenerate},
            ))
            reports.append(BoundReport(
                name="rate_witness", lhs=[fit.witness_ratio], rhs=[WITNESS_RATIO_LIMIT], asserted=asserted,
                flags=flags, details={"sqrt_n_times_median": fit.sqrt_n_median},
            ))
    else:
        logger.warning(f"Rate fit skipped: {len(summaries)} n values (< {MIN_RATE_POINTS})")

    if "delta_n" in cfg.checks:
        for n in rs.n_grid:
            dn = delta_n_estimate(rs.spectra[n], rs.law)
            median = float(np.median(rs.deltas(n)))
            reports.append(BoundReport(name="delta_n", lhs=[dn], rhs=[median], asserted=False,
                                       grid={"n": n, "replicas": len(rs.spectra[n])}))
    return rs, fit, reports


# ----------------------------------------------------------------------------
# Variance / moment experiment
# ----------------------------------------------------------------------------

def fluctuation_report(sn: np.ndarray, zs: np.ndarray, n: int) -> BoundReport:
    """int E|s_n - E s_n| du per height v present in the grid (reported, not asserted)."""
    values, heights = [], []
    for v in sorted(set(zs.imag)):
        cols = np.where(zs.imag == v)[0]
        cols = cols[np.argsort(zs.real[cols])]
        if cols.size < 2:
            continue
        values.append(fluctuation_integral(sn[:, cols], zs.real[cols]))
        heights.append(float(v))
    return BoundReport(name="fluctuation_integral", lhs=values, rhs=[math.inf] * len(values), asserted=False,
                       grid={"n": n, "v": heights})


def variance_experiment(cfg: RunConfig) -> Tuple[ReplicaSet, List[BoundReport]]:
    rs = run_replicas(cfg)
    zs = cfg.zs
    reports = []
    variance, moments = [], {1: [], 2: []}
    for n in rs.n_grid:
        if "variance" in cfg.checks:
            variance.append(variance_bound_check(rs.sn[n], zs, n, c0=cfg.c0, sigma=cfg.ensemble.sigma))
        if "moment" in cfg.checks:
            for l in (1, 2):
                moments[l].append(moment_bound_check(rs.sn[n], zs, n, l, c0=cfg.c0))
        if "fluctuation" in cfg.checks:
            reports.append(fluctuation_report(rs.sn[n], zs, n))
    for group in (variance, moments[1], moments[2]):
        reports.extend(group)
        if len(group) > 1:
            reports.append(cross_n_drift(group, DRIFT_FACTOR))
    return rs, reports


# ----------------------------------------------------------------------------
# Bai inequality experiment
# ----------------------------------------------------------------------------

def _bai_task(task) -> BoundReport:
    spectrum, sigma, constants = task
    report = bai_rhs(esd(spectrum), SemicircleLaw(sigma), constants)
    report.grid["n"] = spectrum.n
    report.grid["seed"] = spectrum.seed
    return report


def bai_experiment(cfg: RunConfig) -> Tuple[ReplicaSet, List[BoundReport]]:
    rs = run_replicas(cfg, zs=np.empty(0, dtype=complex))
    tasks = []
    for n in rs.n_grid:
        c = validate_constants(cfg.bai.A, cfg.bai.B, cfg.bai.eps, cfg.bai.v_scale / math.sqrt(n))
        tasks += [(s, cfg.ensemble.sigma, c) for s in rs.spectra[n]]
    return rs, _parallel_map(_bai_task, tasks, cfg.workers)


# ----------------------------------------------------------------------------
# Leave-one-out diagnostics
# ----------------------------------------------------------------------------

@dataclass
class Diagnostics:
    """Leave-one-out rows keyed by (n, v), with the E s_n estimate used for each cell."""
    u: float
    rows: Dict[Tuple[int, float], List[LeaveOneOutDiag]] = field(default_factory=dict)
    es_n: Dict[Tuple[int, float], complex] = field(default_factory=dict)
    replicas: int = 0


def _stieltjes_task(task):
    spec, r, zs = task
    return _replica_task((spec, r, zs))[1]


def _diag_task(task) -> List[List[LeaveOneOutDiag]]:
    spec, r, zs, es, indices = task
    try:
        M = sample_wigner(spec)
        return [leave_one_out_table(M, z, e, indices) for z, e in zip(zs, es)]
    except (ConvergenceError, ValueError) as e:
        logger.error(f"Leave-one-out n={spec.n} r={r} failed: {e}")
        raise ReplicaError(spec.n, r, str(e)) from e


def run_diagnostics(cfg: RunConfig) -> Diagnostics:
    """
    Two passes per n: the first estimates E s_n(z) as the replica mean of s_n, the second
    regenerates the same matrices from their seeds and tabulates the leave-one-out quantities.
    """
    d = cfg.diag
    zs = np.array([complex(d.u, v) for v in d.v_grid])
    out = Diagnostics(u=d.u, replicas=d.replicas)
    for n in d.n_grid:
        base = cfg.ensemble.wigner_spec(n)
        specs = [_replica_spec(base, cfg.seed, n, r) for r in range(d.replicas)]
        logger.info(f"Diagnostics n={n}: pass 1 over {d.replicas} replicas")
        sn = np.vstack(_parallel_map(_stieltjes_task, [(s, r, zs) for r, s in enumerate(specs)], cfg.workers))
        es = sn.mean(axis=0)
        indices = None if d.indices is None else [i for i in d.indices if i < n]
        logger.info(f"Diagnostics n={n}: pass 2 (leave-one-out)")
        tables = _parallel_map(_diag_task, [(s, r, zs, es, indices) for r, s in enumerate(specs)], cfg.workers)
        for k, v in enumerate(d.v_grid):
            out.rows[(n, v)] = [row for t in tables for row in t[k]]
            out.es_n[(n, v)] = complex(es[k])
    return out


def diag_experiment(cfg: RunConfig) -> Tuple[Optional[Diagnostics], List[BoundReport]]:
    reports = []
    diags = None
    if {"beta_exceedance", "leave_one_out_moments", "an_bn"} & set(cfg.checks):
        diags = run_diagnostics(cfg)
        if "beta_exceedance" in cfg.checks:
            cells = [beta_exceedance_check(rows, n, v, cfg.c0, replicas=diags.replicas)
                     for (n, v), rows in diags.rows.items()]
            reports.extend(cells)
            reports.append(cross_n_drift(cells, EXCEEDANCE_DRIFT_FACTOR, name="beta_exceedance_drift",
                                         skip_zero=True, one_sided=True))
        if "leave_one_out_moments" in cfg.checks:
            reports.extend(leave_one_out_moment_check(diags.rows, cfg.c0, replicas=diags.replicas))
        if "an_bn" in cfg.checks:
            keys = list(diags.es_n)
            reports.append(an_bn_check([diags.es_n[k] for k in keys], [complex(diags.u, v) for _, v in keys]))
    reports.extend(auxiliary_checks(cfg))
    return diags, reports


def auxiliary_checks(cfg: RunConfig) -> List[BoundReport]:
    """Exact identities, rank-one perturbations and quadratic forms on their own seeded streams."""
    d = cfg.diag
    reports = []
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0,)))
    if "identities" in cfg.checks:
        zs = rng.uniform(-3.0, 3.0, d.identity_points) + 1j * rng.uniform(0.05, 2.0, d.identity_points)
        matrices = []
        for n in d.identity_n_grid:
            base = cfg.ensemble.wigner_spec(n)
            matrices += [sample_wigner(_replica_spec(base, cfg.seed, n, m)) for m in range(d.identity_matrices)]
        reports.append(resolvent_identity_check(matrices, zs))
    if "rank_one" in cfg.checks:
        reports.append(rank_one_check(d.rank_one_trials, rng, d.rank_one_n_max))
    if "quadratic_form" in cfg.checks:
        for kind in d.quadratic_form_kinds:
            dist = make_distribution(kind)
            for _ in range(d.quadratic_form_matrices):
                A = rng.standard_normal((d.quadratic_form_n, d.quadratic_form_n))
                reports.append(quadratic_form_variance_check(A, dist, d.quadratic_form_reps, rng))
                reports.append(quadratic_form_bound_check(A, dist, 4, d.quadratic_form_reps, rng))
    return reports


def lawcheck_experiment(cfg: RunConfig) -> List[BoundReport]:
    rng = np.random.default_rng(cfg.seed)
    return law_self_checks(rng, sigma=cfg.ensemble.sigma)


def exit_code(reports: Sequence[BoundReport]) -> int:
    """0 when every asserted report passes, 1 otherwise."""
    failed = [r.name for r in reports if r.asserted and not r.passed]
    if failed:
        logger.warning(f"Failed checks: {', '.join(failed)}")
        return 1
    return 0
