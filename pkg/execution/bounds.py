import logging
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.integrate import trapezoid

from execution.ensemble import DistributionKind, EntryDistribution, SymmetricMatrix
from execution.law import (
    SemicircleLaw,
    _quad,
    gap_integral_chain,
    integral_bound_parts,
    sc_cdf,
    sc_cdf_quadrature,
    sc_pdf,
    sc_stieltjes,
    sc_stieltjes_quadrature,
)
from execution.resolvent import leave_one_out_table, mean_beta_residual, quadratic_form_residual, \
    quadratic_form_samples, rank_one_perturbation_gap, self_consistent_residual
from execution.spectra import StepCdf, esd_eval, kolmogorov_distance, step_stieltjes

logger = logging.getLogger(__name__)

# Policy thresholds for "bounded uniformly" (not constants of the inequalities themselves).
MIN_REPLICAS = 50
MIN_DIAG_REPLICAS = 100
STABILITY_FACTOR = 10.0
DRIFT_FACTOR = 2.0
EXCEEDANCE_DRIFT_FACTOR = 4.0
IDENTITY_TOL = 1e-10
AN_BN_TOL = 0.05
QUADRATIC_FORM_LIMIT = 10.0
ROUNDOFF_REL = 1e-14


class ConstantsError(ValueError):
    pass


class BaiConstants(BaseModel):
    model_config = ConfigDict(frozen=True)

    A: float
    B: float
    eps: float
    v: float
    rho: float
    zeta: float

    @property
    def prefactor(self) -> float:
        return 1.0 / (math.pi * (1.0 - self.zeta) * (2.0 * self.rho - 1.0))


class BoundReport(BaseModel):
    """
    Outcome of one inequality check: passed is recomputed as all(lhs <= rhs).
    """
    model_config = ConfigDict(ser_json_inf_nan="constants")

    name: str
    lhs: List[float]
    rhs: List[float]
    passed: bool = False
    asserted: bool = True
    constants: Dict[str, float] = {}
    grid: Dict[str, Any] = {}
    details: Dict[str, Any] = {}
    flags: List[str] = []

    @model_validator(mode="after")
    def _compute_passed(self):
        if len(self.lhs) != len(self.rhs):
            raise ValueError(f"lhs has {len(self.lhs)} entries but rhs has {len(self.rhs)}")
        self.passed = bool(all(l <= r for l, r in zip(self.lhs, self.rhs)))
        return self


def _floats(values) -> List[float]:
    return [float(x) for x in np.ravel(np.asarray(values, dtype=float))]


# ----------------------------------------------------------------------------
# Bai inequality
# ----------------------------------------------------------------------------

def validate_constants(A: float, B: float, eps: float, v: float) -> BaiConstants:
    if not A > B > 0:
        raise ConstantsError(f"constraint A > B > 0 failed: A={A}, B={B}")
    if not v > 0:
        raise ConstantsError(f"constraint v > 0 failed: v={v}")
    rho = 2.0 / math.pi * math.atan(eps)
    if not eps > 1.0:  # rho > 1/2 exactly when eps > 1
        raise ConstantsError(f"constraint rho > 1/2 failed: rho={rho:.6f} for eps={eps}")
    zeta = 4.0 * B / (math.pi * (A - B) * (2.0 * rho - 1.0))
    if not 0.0 < zeta < 1.0:
        raise ConstantsError(f"constraint 0 < zeta < 1 failed: zeta={zeta:.6f}")
    return BaiConstants(A=A, B=B, eps=eps, v=v, rho=rho, zeta=zeta)


def _stieltjes_gap_integral(F: StepCdf, G: SemicircleLaw, A: float, v: float) -> float:
    """int_{-A}^{A} |s_F(u + iv) - s_G(u + iv)| du, in pieces no wider than v."""
    pieces = max(64, int(math.ceil(2.0 * A / v)))
    edges = np.linspace(-A, A, pieces + 1)

    def integrand(u):
        z = complex(u, v)
        return abs(step_stieltjes(F, z) - G.stieltjes(z))

    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        total += _quad(integrand, lo, hi, limit=100, epsabs=1e-11, epsrel=1e-9)[0]
    return total


def _abs_gap_on(F: StepCdf, G: SemicircleLaw, lo: float, hi: float) -> float:
    """Exact int_lo^hi |F - G| dx: F is constant between jumps, G integrates through H."""
    if hi <= lo:
        return 0.0
    r = 2.0 * G.sigma
    inner = F.points[(F.points > lo) & (F.points < hi)]
    knots = np.unique(np.concatenate(([lo, hi], inner, [x for x in (-r, r) if lo < x < hi])))
    H = G.cdf_integral
    total = 0.0
    for x0, x1 in zip(knots[:-1], knots[1:]):
        c = esd_eval(F, x0)
        g0, g1 = G.cdf(x0), G.cdf(x1)
        area = H(x1) - H(x0)
        if g0 >= c:
            total += area - c * (x1 - x0)
        elif g1 <= c:
            total += c * (x1 - x0) - area
        else:
            xs = G.quantile(c)
            total += c * (xs - x0) - (H(xs) - H(x0)) + (H(x1) - H(xs)) - c * (x1 - xs)
    return float(total)


def tail_gap_integral(F: StepCdf, G: SemicircleLaw, B: float) -> float:
    """int_{|x| > B} |F(x) - G(x)| dx."""
    r = 2.0 * G.sigma
    right = max(r, float(F.points[-1]), B)
    left = min(-r, float(F.points[0]), -B)
    return _abs_gap_on(F, G, B, right) + _abs_gap_on(F, G, left, -B)


def smoothness_sup(G: SemicircleLaw, h: float, step: float) -> Dict[str, float]:
    """
    sup_x int_{|u| <= h} |G(x + u) - G(x)| du = sup_x H(x+h) + H(x-h) - 2H(x) on a grid,
    plus the Lipschitz slack of that function between grid nodes.
    """
    r = 2.0 * G.sigma
    num = int(math.ceil((2.0 * (r + h)) / step)) + 1
    x = np.linspace(-r - h, r + h, num)
    actual_step = x[1] - x[0] if num > 1 else 0.0
    H = G.cdf_integral
    phi = H(x + h) + H(x - h) - 2.0 * H(x)
    lipschitz = min(1.0, 2.0 * h * G.max_density)
    return {"grid_max": float(np.max(phi)), "slack": lipschitz * actual_step / 2.0, "step": float(actual_step)}


def bai_rhs(F: StepCdf, G: SemicircleLaw, c: BaiConstants) -> BoundReport:
    """
    Evaluate both sides of the Bai inequality for a step CDF F against the semicircle law G.

    Args:
        F: empirical (or pooled) spectral distribution.
        G: semicircle law.
        c: validated constants; c.v is the height of the Stieltjes integral.

    Returns:
        BoundReport with lhs = [||F - G||] and rhs = [prefactor * (term1 + term2 + term3)].
    """
    v = c.v
    term1 = _stieltjes_gap_integral(F, G, c.A, v)
    term2 = 2.0 * math.pi / v * tail_gap_integral(F, G, c.B)
    smooth = smoothness_sup(G, 2.0 * v * c.eps, v / 10.0)
    term3 = (smooth["grid_max"] + smooth["slack"]) / v
    rhs = c.prefactor * (term1 + term2 + term3)
    lhs = kolmogorov_distance(F, G)
    report = BoundReport(
        name="bai_inequality",
        lhs=[lhs],
        rhs=[rhs],
        constants=c.model_dump() | {"prefactor": c.prefactor},
        grid={"sigma": G.sigma, "smoothness_step": smooth["step"]},
        details={"term1": term1, "term2": term2, "term3": term3, "smoothness_slack": smooth["slack"]},
    )
    logger.info(f"Bai inequality at v={v:.4f}: lhs={lhs:.5f} rhs={rhs:.5f} "
                f"(terms {term1:.4f}, {term2:.4f}, {term3:.4f})")
    return report


# ----------------------------------------------------------------------------
# Variance / moment bounds
# ----------------------------------------------------------------------------

def _samples(sn_samples, zs):
    sn = np.asarray(sn_samples, dtype=complex)
    zs = np.asarray(zs, dtype=complex).reshape(-1)
    if sn.ndim != 2:
        raise ValueError("s_n samples must be a replicas x grid array")
    if sn.shape[1] != zs.shape[0]:
        raise ValueError(f"{sn.shape[1]} sample columns but {zs.shape[0]} grid points")
    if sn.shape[0] < MIN_REPLICAS:
        raise ValueError(f"need at least {MIN_REPLICAS} replicas for a variance estimate, got {sn.shape[0]}")
    if np.any(zs.imag <= 0):
        raise ValueError("grid points must lie in the upper half-plane")
    return sn, zs


def _drop_roundoff(values: np.ndarray, center: np.ndarray, power: int) -> np.ndarray:
    """Zero out central moments that are pure round-off, |value| <= (1e-14 |center|^2)^power."""
    floor = (ROUNDOFF_REL * np.abs(center) ** 2) ** power
    return np.where(values <= floor, 0.0, values)


def _stability_report(name: str, ratio: np.ndarray, zs: np.ndarray, n: int, c0: float,
                      constants: Dict[str, float]) -> BoundReport:
    v0 = c0 / math.sqrt(n)
    in_regime = zs.imag >= v0
    if not np.any(in_regime):
        raise ValueError(f"no grid point satisfies v >= c0 n^(-1/2) = {v0:.4f}")
    flags = []
    if not np.all(in_regime):
        flags.append(f"{int(np.sum(~in_regime))} grid points below v0={v0:.4f} excluded (out of regime)")
    max_ratio = float(np.max(ratio[in_regime]))
    median_ratio = float(np.median(ratio[in_regime]))
    return BoundReport(
        name=name,
        lhs=[max_ratio],
        rhs=[STABILITY_FACTOR * median_ratio],
        constants=constants | {"c0": c0, "stability_factor": STABILITY_FACTOR},
        grid={"n": n, "u": _floats(zs.real), "v": _floats(zs.imag), "in_regime": [bool(x) for x in in_regime]},
        details={"ratio": _floats(ratio), "max_ratio": max_ratio, "median_ratio": median_ratio,
                 "statistic": max_ratio},
        flags=flags,
    )


def variance_bound_check(sn_samples, zs, n: int, c0: float = 2.0, sigma: float = 1.0) -> BoundReport:
    """
    Tabulate Var(s_n(z)) * n |z + 2 sigma^2 s(z)|^2 over the grid and test it for uniform boundedness.
    """
    sn, zs = _samples(sn_samples, zs)
    var = np.var(sn, axis=0, ddof=1)  # complex input: mean |s - mean|^2
    var = _drop_roundoff(var, sn.mean(axis=0), 1)
    gap = np.abs(zs + 2.0 * sigma * sigma * sc_stieltjes(zs, sigma))
    ratio = var * n * gap ** 2
    report = _stability_report("variance_bound", ratio, zs, n, c0, {"sigma": sigma})
    report.details["variance"] = _floats(var)
    report.details["replicas"] = int(sn.shape[0])
    logger.info(f"Variance bound n={n}: max ratio {report.details['max_ratio']:.4f}, "
                f"median {report.details['median_ratio']:.4f}")
    return report


def moment_bound_check(sn_samples, zs, n: int, l: int, c0: float = 2.0) -> BoundReport:
    """E|s_n - E s_n|^{2l} * n^{2l} v^{3l} over the grid, l in {1, 2}."""
    if l not in (1, 2):
        raise ValueError(f"l must be 1 or 2, got {l}")
    sn, zs = _samples(sn_samples, zs)
    center = sn.mean(axis=0)
    dev = _drop_roundoff((np.abs(sn - center) ** (2 * l)).mean(axis=0), center, l)
    scaled = dev * float(n) ** (2 * l) * zs.imag ** (3 * l)
    report = _stability_report(f"moment_bound_l{l}", scaled, zs, n, c0, {"l": l})
    report.details["replicas"] = int(sn.shape[0])
    logger.info(f"Moment bound l={l} n={n}: max scaled moment {report.details['max_ratio']:.4g}")
    return report


def _larger_n_same_v(reports: Sequence[BoundReport], i: int) -> List[int]:
    gi = reports[i].grid
    return [j for j, rj in enumerate(reports)
            if rj.grid.get("n", 0) > gi.get("n", 0) and rj.grid.get("v") == gi.get("v")]


def _growth(reports: Sequence[BoundReport], values: np.ndarray) -> float:
    """Largest statistic ratio from a smaller n to a larger n at the same height v."""
    worst = 1.0
    for i in range(len(reports)):
        for j in _larger_n_same_v(reports, i):
            if values[i] > 0:
                worst = max(worst, values[j] / values[i])
            elif values[j] > 0:
                # nothing seen at the smaller n, something at the larger one
                return math.inf
    return float(worst)


def cross_n_drift(reports: Sequence[BoundReport], factor: float = DRIFT_FACTOR, name: Optional[str] = None,
                  skip_zero: bool = False, one_sided: bool = False) -> BoundReport:
    """
    Ratio of the largest to the smallest per-report statistic (max ratio for variance / moment
    reports, scaled frequency for exceedance reports).

    Args:
        skip_zero: drop cells whose statistic is exactly 0 (no exceedances observed) and flag them.
            With one_sided, a zero cell is only dropped when every larger-n cell at the same v
            is zero as well; growth out of a zero cell is infinite drift.
        one_sided: only growth from smaller to larger n at equal v counts as drift (for
            statistics that are bounded above but may decay).
    """
    if not reports:
        raise ValueError("cross_n_drift needs at least one report")
    labels = [r.details.get("label", str(r.grid.get("n"))) for r in reports]
    values = np.array([float(r.details["statistic"]) for r in reports])
    flags = []
    keep = np.ones(len(values), dtype=bool)
    if skip_zero:
        keep = values > 0
        if one_sided:
            for i in np.where(~keep)[0]:
                keep[i] = any(values[j] > 0 for j in _larger_n_same_v(reports, i))
        zero = [lab for lab, k in zip(labels, keep) if not k]
        if zero:
            flags.append(f"cells with zero statistic excluded: {', '.join(zero)}")
    kept = values[keep]
    if one_sided:
        drift = _growth([r for r, k in zip(reports, keep) if k], kept)
    elif kept.size == 0 or np.all(kept == 0):
        drift = 1.0
    elif np.any(kept == 0):
        drift = math.inf
    else:
        drift = float(kept.max() / kept.min())
    return BoundReport(
        name=name or f"{reports[0].name}_drift",
        lhs=[drift],
        rhs=[factor],
        asserted=all(r.asserted for r in reports),
        constants={"factor": factor, "one_sided": float(one_sided)},
        grid={"cells": labels},
        details={"statistic": _floats(values)},
        flags=flags,
    )


def fluctuation_integral(sn_samples, us) -> float:
    """int E|s_n(u + iv) - E s_n(u + iv)| du over the u-grid (trapezoid rule)."""
    sn = np.asarray(sn_samples, dtype=complex)
    us = np.asarray(us, dtype=float)
    if sn.ndim != 2 or sn.shape[1] != us.shape[0]:
        raise ValueError("s_n samples must be a replicas x len(us) array")
    if us.shape[0] < 2:
        raise ValueError("need at least two u points")
    mean_abs = np.mean(np.abs(sn - sn.mean(axis=0)), axis=0)
    return float(trapezoid(mean_abs, us))


# ----------------------------------------------------------------------------
# Leave-one-out diagnostics
# ----------------------------------------------------------------------------

def beta_exceedance_check(diags, n: int, v: float, c0: float = 2.0,
                          replicas: Optional[int] = None) -> BoundReport:
    """
    Frequency of |beta_i| > 2 at height v, scaled by n^2 v^2.

    When 1/v <= 2 the exceedance is impossible and the check is a hard zero; otherwise the
    scaled frequency is reported (rhs = inf) and judged across cells by cross_n_drift.
    """
    betas = np.array([d.beta for d in diags], dtype=complex)
    if betas.size == 0:
        raise ValueError("beta_exceedance_check needs at least one sample")
    count = int(np.sum(np.abs(betas) > 2.0))
    freq = count / betas.size
    scaled = freq * n * n * v * v
    flags = []
    if v < c0 / math.sqrt(n):
        flags.append(f"out of regime: v={v} < c0 n^(-1/2)={c0 / math.sqrt(n):.4f}")
    if replicas is not None and replicas < MIN_DIAG_REPLICAS:
        flags.append(f"only {replicas} replicas (< {MIN_DIAG_REPLICAS})")
    forced = 1.0 / v <= 2.0
    report = BoundReport(
        name="beta_exceedance",
        lhs=[freq] if forced else [scaled],
        rhs=[0.0] if forced else [math.inf],
        asserted=forced or not flags,
        constants={"threshold": 2.0, "c0": c0},
        grid={"n": n, "v": v},
        details={"count": count, "samples": int(betas.size), "frequency": freq, "scaled": scaled,
                 "forced_zero": forced, "statistic": scaled, "label": f"n={n},v={v}"},
        flags=flags,
    )
    logger.info(f"beta exceedance n={n} v={v}: {count}/{betas.size} (scaled {scaled:.4g})")
    return report


def leave_one_out_moment_check(rows_by_cell: Dict[Tuple[int, float], Sequence], c0: float = 2.0,
                               replicas: Optional[int] = None) -> List[BoundReport]:
    """
    Fourth moments of the leave-one-out fluctuations per (n, v) cell, scaled to be O(1):
    E|gamma_i|^4 v^2 / n^2 and E|eps_i|^4 n^2 v^2.

    A statistic counts as bounded when its largest in-regime cell stays within
    STABILITY_FACTOR of the median cell. Cells with v < c0 n^{-1/2} are flagged and left out.

    Returns:
        Two reports, "gamma_fourth_moment" and "eps_fourth_moment".
    """
    if not rows_by_cell:
        raise ValueError("leave_one_out_moment_check needs at least one (n, v) cell")
    cells = sorted(rows_by_cell)
    gamma4, eps4, samples = [], [], []
    for n, v in cells:
        rows = rows_by_cell[(n, v)]
        if not rows:
            raise ValueError(f"no leave-one-out rows for n={n}, v={v}")
        gamma = np.array([r.gamma for r in rows], dtype=complex)
        eps = np.array([r.eps for r in rows], dtype=complex)
        gamma4.append(float(np.mean(np.abs(gamma) ** 4)) * v * v / (n * n))
        eps4.append(float(np.mean(np.abs(eps) ** 4)) * n * n * v * v)
        samples.append(len(rows))
    in_regime = np.array([v >= c0 / math.sqrt(n) for n, v in cells])
    if not np.any(in_regime):
        raise ValueError("no (n, v) cell satisfies v >= c0 n^(-1/2)")

    flags = []
    excluded = [f"n={n},v={v}" for (n, v), k in zip(cells, in_regime) if not k]
    if excluded:
        flags.append(f"cells below v0 = c0 n^(-1/2) excluded (out of regime): {', '.join(excluded)}")
    if replicas is not None and replicas < MIN_DIAG_REPLICAS:
        flags.append(f"only {replicas} replicas (< {MIN_DIAG_REPLICAS})")

    reports = []
    for name, values in (("gamma_fourth_moment", np.array(gamma4)), ("eps_fourth_moment", np.array(eps4))):
        max_scaled = float(np.max(values[in_regime]))
        median_scaled = float(np.median(values[in_regime]))
        reports.append(BoundReport(
            name=name,
            lhs=[max_scaled],
            rhs=[STABILITY_FACTOR * median_scaled],
            asserted=replicas is None or replicas >= MIN_DIAG_REPLICAS,
            constants={"c0": c0, "stability_factor": STABILITY_FACTOR},
            grid={"n": [n for n, _ in cells], "v": [v for _, v in cells],
                  "in_regime": [bool(k) for k in in_regime]},
            details={"scaled": _floats(values), "samples": samples, "max_scaled": max_scaled,
                     "median_scaled": median_scaled},
            flags=list(flags),
        ))
        logger.info(f"{name}: max {max_scaled:.4g}, median {median_scaled:.4g} over {int(in_regime.sum())} cells")
    return reports


def an_bn_check(es_n, zs, tol: float = AN_BN_TOL) -> BoundReport:
    """
    Diagnostic for |a_n| < 1, |a_n (z + 2s)| <= |1 - a_n^2| and |b_n| <= 2 / |z + 2s|.
    These hold asymptotically, so the report is not asserted.
    """
    es = np.asarray(es_n, dtype=complex).reshape(-1)
    zs = np.asarray(zs, dtype=complex).reshape(-1)
    if es.shape != zs.shape:
        raise ValueError("es_n and zs must have the same length")
    a_n = 1.0 / (zs + es)
    b_n = 1.0 / (zs + 2.0 * es)
    gap = np.abs(zs + 2.0 * sc_stieltjes(zs))
    lhs = np.concatenate([np.abs(a_n), np.abs(a_n) * gap, np.abs(b_n)])
    rhs = np.concatenate([np.ones_like(gap), np.abs(1.0 - a_n ** 2) * (1.0 + tol), 2.0 / gap * (1.0 + tol)])
    return BoundReport(
        name="an_bn",
        lhs=_floats(lhs),
        rhs=_floats(rhs),
        asserted=False,
        constants={"tolerance": tol},
        grid={"u": _floats(zs.real), "v": _floats(zs.imag)},
        details={"blocks": ["|a_n|", "|a_n(z+2s)|", "|b_n|"]},
    )


def resolvent_identity_check(matrices: Sequence[SymmetricMatrix], zs, es_n_estimate=None,
                             tol: float = IDENTITY_TOL) -> BoundReport:
    """
    Max residuals of the exact leave-one-out identities and the interlacing bounds |beta|, |xi| <= 1/v.
    """
    if not matrices:
        raise ValueError("resolvent_identity_check needs at least one matrix")
    names = ["schur", "eps_decomposition", "beta_identity", "mean_beta", "self_consistent",
             "beta_times_v", "xi_times_v"]
    worst = np.zeros(len(names))
    for M in matrices:
        for z in np.asarray(zs, dtype=complex).reshape(-1):
            rows = leave_one_out_table(M, z, es_n_estimate)
            v = z.imag
            cells = [
                max(r.schur_residual() for r in rows),
                max(r.ep_residual() for r in rows),
                max(r.beta_residual() for r in rows),
                mean_beta_residual(rows),
                self_consistent_residual(rows),
                max(abs(r.beta) for r in rows) * v,
                max(abs(r.xi) for r in rows) * v,
            ]
            worst = np.maximum(worst, cells)
    return BoundReport(
        name="resolvent_identities",
        lhs=_floats(worst),
        rhs=[tol] * 5 + [1.0, 1.0],
        constants={"tolerance": tol},
        grid={"matrices": len(matrices), "n": sorted({M.n for M in matrices})},
        details={"labels": names},
    )


# ----------------------------------------------------------------------------
# Quadratic forms and rank-one perturbations
# ----------------------------------------------------------------------------

def quadratic_form_variance_check(A: np.ndarray, dist: EntryDistribution, reps: int,
                                  rng: np.random.Generator, z_limit: float = 5.0) -> BoundReport:
    """Empirical E|X^T A X - tr A|^2 against its closed form, within z_limit standard errors."""
    m = quadratic_form_residual(A, dist, reps, rng)
    return BoundReport(
        name="quadratic_form_variance",
        lhs=[abs(m.second - m.expected_second)],
        rhs=[z_limit * m.second_se],
        constants={"nu4": dist.nu4, "z_limit": z_limit},
        grid={"n": int(np.asarray(A).shape[0]), "reps": reps, "kind": dist.kind.value},
        details={"empirical": m.second, "closed_form": m.expected_second, "se": m.second_se,
                 "z_score": m.z_score},
    )


def _abs_moment(dist: EntryDistribution, k: float) -> float:
    if dist.kind == DistributionKind.STUDENT_T and not dist.truncated and k >= dist.df:
        return math.inf
    return dist.expect(lambda x: np.abs(x) ** k)


def quadratic_form_bound_check(A: np.ndarray, dist: EntryDistribution, p: float, reps: int,
                               rng: np.random.Generator, limit: float = QUADRATIC_FORM_LIMIT) -> BoundReport:
    """
    E|X^T A X - tr A|^p against (nu4 tr AA^T)^{p/2} + nu_{2p} tr (AA^T)^{p/2}; the ratio is expected
    to stay below a moderate constant C_p.
    """
    if not p >= 2:
        raise ValueError(f"p must be >= 2, got {p}")
    A = np.asarray(A, dtype=float)
    r = quadratic_form_samples(A, dist, reps, rng)
    moment = float(np.mean(np.abs(r) ** p))
    singular = np.linalg.svd(A, compute_uv=False)
    nu_2p = _abs_moment(dist, 2.0 * p)
    scale = (dist.nu4 * float(np.sum(singular ** 2))) ** (p / 2.0) + nu_2p * float(np.sum(singular ** p))
    ratio = moment / scale if scale > 0 else (0.0 if moment == 0 else math.inf)
    flags = [] if math.isfinite(nu_2p) else [f"nu_{2 * p:g} is infinite; bound is vacuous"]
    return BoundReport(
        name=f"quadratic_form_moment_p{p:g}",
        lhs=[ratio],
        rhs=[limit],
        constants={"p": p, "nu4": dist.nu4, "nu_2p": nu_2p, "limit": limit},
        grid={"n": int(A.shape[0]), "reps": reps, "kind": dist.kind.value},
        details={"moment": moment, "scale": scale},
        flags=flags,
    )


def rank_one_check(trials: int, rng: np.random.Generator, n_max: int = 50) -> BoundReport:
    """
    |tr((B - z)^{-1} - (B + tau q q^* - z)^{-1}) A| * v / ||A|| over random Hermitian rank-one updates.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    ratios = np.empty(trials)
    for t in range(trials):
        n = int(rng.integers(1, n_max + 1))
        g = rng.standard_normal((n, n))
        B = (g + g.T) / math.sqrt(2.0 * n)
        q = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2.0 * n)
        tau = float(rng.standard_normal() * 10.0 ** rng.uniform(-1.0, 2.0))
        A = rng.standard_normal((n, n))
        z = complex(rng.uniform(-3.0, 3.0), 10.0 ** rng.uniform(-2.0, 0.5))
        gap = rank_one_perturbation_gap(B, q, tau, A, z)
        ratios[t] = gap * z.imag / np.linalg.norm(A, 2)
    worst = float(ratios.max())
    logger.info(f"Rank-one perturbation: {trials} trials, worst ratio {worst:.4f}")
    return BoundReport(
        name="rank_one_perturbation",
        lhs=[worst],
        rhs=[1.0],
        grid={"trials": trials, "n_max": n_max},
        details={"median_ratio": float(np.median(ratios)), "violations": int(np.sum(ratios > 1.0))},
    )


# ----------------------------------------------------------------------------
# Semicircle self-checks
# ----------------------------------------------------------------------------

def law_self_checks(rng: np.random.Generator, sigma: float = 1.0,
                    chain_heights: Sequence[float] = (1.0, 0.25, 0.05)) -> List[BoundReport]:
    """Closed forms of the semicircle module checked against quadrature and their defining equations."""
    reports = []

    parts = integral_bound_parts()
    total = parts["total"]
    reports.append(BoundReport(
        name="gap_integral",
        lhs=[total],
        rhs=[10.0],
        details=parts | {"expected_window": [8.5, 8.9]},
        flags=[] if 8.5 < total < 8.9 else [f"value {total:.6f} outside (8.5, 8.9)"],
    ))

    lhs, rhs = [], []
    for v in chain_heights:
        chain = gap_integral_chain(v)
        lhs += [chain["gap"], chain["modulus"]]
        rhs += [chain["modulus"] * (1.0 + 1e-9), chain["real_axis"]]
    reports.append(BoundReport(name="gap_integral_chain", lhs=lhs, rhs=rhs,
                               grid={"v": list(chain_heights)}))

    xs = np.linspace(-2.0 * sigma, 2.0 * sigma, 1000)
    err = max(abs(sc_cdf(x, sigma) - sc_cdf_quadrature(x, sigma)) for x in xs)
    reports.append(BoundReport(name="cdf_quadrature", lhs=[err], rhs=[1e-10], grid={"points": len(xs)}))

    reports.append(BoundReport(name="cdf_median", lhs=[abs(sc_cdf(0.0, sigma) - 0.5)], rhs=[0.0]))

    r = 2.0 * sigma
    mass, _ = _quad(lambda t: 1.0, -r, r, weight="alg", wvar=(0.5, 0.5))
    reports.append(BoundReport(name="pdf_mass", lhs=[abs(mass / (2.0 * math.pi * sigma * sigma) - 1.0)],
                               rhs=[1e-10]))

    zs = rng.uniform(-5.0, 5.0, 10000) + 1j * 10.0 ** rng.uniform(-3.0, 1.0, 10000)
    s = sc_stieltjes(zs, sigma)
    residual = float(np.max(np.abs(sigma * sigma * s * s + zs * s + 1.0)))
    reports.append(BoundReport(name="stieltjes_equation", lhs=[residual], rhs=[1e-12], grid={"points": 10000}))

    zq = rng.uniform(-3.0, 3.0, 50) + 1j * rng.uniform(0.05, 2.0, 50)
    err = max(abs(sc_stieltjes(z, sigma) - sc_stieltjes_quadrature(z, sigma)) for z in zq)
    reports.append(BoundReport(name="stieltjes_quadrature", lhs=[err], rhs=[1e-8], grid={"points": 50}))

    # density sanity: peak value 1 / (pi sigma)
    peak = sc_pdf(0.0, sigma)
    reports.append(BoundReport(name="pdf_peak", lhs=[abs(peak - 1.0 / (math.pi * sigma))], rhs=[1e-12]))

    for rep in reports:
        logger.info(f"lawcheck {rep.name}: {'PASS' if rep.passed else 'FAIL'}")
    return reports
