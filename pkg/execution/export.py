import csv
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np

from execution import __version__
from execution.bounds import BoundReport
from execution.config import RunConfig
from execution.harness import Diagnostics, RateFit, ReplicaSet, bai_experiment, diag_experiment, exit_code, \
    lawcheck_experiment, rate_experiment, run_replicas, summarize_deltas, variance_experiment
from execution.law import law_curve

logger = logging.getLogger(__name__)

RATE_COLUMNS = ["n", "median", "q25", "q75", "sqrt_n_times_median"]
REPORT_COLUMNS = ["name", "index", "lhs", "rhs", "passed", "asserted", "flags"]
DIAG_QUANTITIES = ["beta", "gamma", "gamma_hat", "xi", "eps", "a_n", "b_n", "es_n"]
DIAG_COLUMNS = (["n", "v", "index"] + [f"{q}_{part}" for q in DIAG_QUANTITIES for part in ("re", "im")]
                + ["beta_within_bound", "xi_within_bound"])
FORMATS = ("csv", "json")


@dataclass
class Table:
    columns: List[str]
    rows: List[List[Any]]


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(cfg.canonical_json().encode("utf-8")).hexdigest()


def metadata(cfg: RunConfig, command: str) -> Dict[str, str]:
    """Header written on every result file; no timestamps so reruns are byte-identical."""
    return {
        "command": command,
        "config_sha256": config_hash(cfg),
        "seed": str(cfg.seed),
        "version": __version__,
    }


# ----------------------------------------------------------------------------
# Tables
# ----------------------------------------------------------------------------

def rate_table(fit: RateFit) -> Table:
    return Table(RATE_COLUMNS, [[s.n, s.median, s.q25, s.q75, s.sqrt_n_times_median] for s in fit.summaries])


def reports_table(reports: Sequence[BoundReport]) -> Table:
    rows = []
    for r in reports:
        for k, (l, h) in enumerate(zip(r.lhs, r.rhs)):
            rows.append([r.name, k, l, h, int(r.passed), int(r.asserted), "; ".join(r.flags)])
    return Table(REPORT_COLUMNS, rows)


def spectra_table(rs: ReplicaSet) -> Table:
    rows = []
    for n in rs.n_grid:
        for r, spec in enumerate(rs.spectra[n]):
            rows += [[n, r, spec.seed, k, float(lam)] for k, lam in enumerate(spec.eigenvalues)]
    return Table(["n", "replica", "seed", "k", "eigenvalue"], rows)


def diag_table(diags: Diagnostics) -> Table:
    rows = []
    for (n, v), cell in diags.rows.items():
        for d in cell:
            values = (d.beta, d.gamma, d.gamma_hat, d.xi, d.eps, d.a_n, d.b_n, d.es_n_estimate)
            rows.append([n, v, d.index] + [x for c in values for x in (c.real, c.imag)]
                        + [int(d.beta_within_bound), int(d.xi_within_bound)])
    return Table(DIAG_COLUMNS, rows)


def witness_table(fit: RateFit) -> Table:
    """Plot data: sqrt(n) * median Delta_p against n."""
    return Table(["n", "sqrt_n_times_median"], [[s.n, s.sqrt_n_times_median] for s in fit.summaries])


def law_curve_table(sigma: float = 1.0, num: int = 401) -> Table:
    """Plot data: x, density and CDF of the semicircle law."""
    x, pdf, cdf = law_curve(sigma, num)
    return Table(["x", "pdf", "cdf"], [[float(a), float(b), float(c)] for a, b, c in zip(x, pdf, cdf)])


def _as_table(report) -> Table:
    if isinstance(report, Table):
        return report
    if isinstance(report, RateFit):
        return rate_table(report)
    if isinstance(report, (list, tuple)) and all(isinstance(r, BoundReport) for r in report):
        return reports_table(report)
    raise TypeError(f"cannot export {type(report).__name__}")


def _json_payload(report) -> Any:
    if isinstance(report, RateFit):
        return report.model_dump(mode="python") | {"sqrt_n_times_median": report.sqrt_n_median}
    if isinstance(report, (list, tuple)) and all(isinstance(r, BoundReport) for r in report):
        return [r.model_dump(mode="python") for r in report]
    table = _as_table(report)
    return {"columns": table.columns, "rows": table.rows}


def _cell(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


# ----------------------------------------------------------------------------
# Writers / readers
# ----------------------------------------------------------------------------

def export(report, path: Union[str, Path], fmt: str, meta: Dict[str, str]) -> Path:
    """
    Write a RateFit, a list of BoundReports or a Table to `path`.

    CSV files start with "# key: value" metadata lines followed by a header row;
    JSON files hold {"metadata": ..., "data": ...}.
    """
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}, got {fmt!r}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        if fmt == "json":
            text = json.dumps({"metadata": meta, "data": _json_payload(report)}, indent=2, sort_keys=True)
            path.write_text(text + "\n", encoding="utf-8")
        else:
            table = _as_table(report)
            with open(path, "w", encoding="utf-8", newline="") as f:
                for key, value in meta.items():
                    f.write(f"# {key}: {value}\n")
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow(table.columns)
                writer.writerows([[_cell(x) for x in row] for row in table.rows])
    except OSError as e:
        logger.error(f"Export to {path} failed: {e}")
        raise
    logger.info(f"Wrote {path}")
    return path


def read_csv(path: Union[str, Path]) -> Tuple[Dict[str, str], List[str], List[List[str]]]:
    meta, lines = {}, []
    with open(path, "r", encoding="utf-8", newline="") as f:
        for line in f:
            if line.startswith("# "):
                key, _, value = line[2:].rstrip("\n").partition(": ")
                meta[key] = value
            else:
                lines.append(line)
    rows = list(csv.reader(lines))
    if not rows:
        return meta, [], []
    return meta, rows[0], rows[1:]


def read_json(path: Union[str, Path]) -> Tuple[Dict[str, str], Any]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return doc["metadata"], doc["data"]


def read_reports(path: Union[str, Path]) -> List[BoundReport]:
    _, data = read_json(path)
    return [BoundReport.model_validate(d) for d in data]


def read_rate_fit(path: Union[str, Path]) -> RateFit:
    _, data = read_json(path)
    data = dict(data)
    data.pop("sqrt_n_times_median", None)
    return RateFit.model_validate(data)


def numeric(rows: List[List[str]]) -> np.ndarray:
    """CSV cells back to floats."""
    return np.array(rows, dtype=float)


# ----------------------------------------------------------------------------
# Command runner shared by the CLI and the HTTP service
# ----------------------------------------------------------------------------

EIGEN_INVARIANT_TOL = 1e-8


@dataclass
class RunOutcome:
    command: str
    reports: List[BoundReport]
    files: List[Path]
    lines: List[str]

    @property
    def exit_code(self) -> int:
        return exit_code(self.reports)


def run_and_export(command: str, cfg: RunConfig, out_dir: Union[str, Path]) -> RunOutcome:
    """
    Run one experiment, write its result files under out_dir and collect a printable summary.
    """
    out_dir = Path(out_dir)
    meta = metadata(cfg, command)
    ext = cfg.format
    reports: List[BoundReport] = []
    files: List[Path] = []
    lines: List[str] = []

    if command == "simulate":
        rs = run_replicas(cfg)
        files.append(export(spectra_table(rs), out_dir / f"spectra.{ext}", ext, meta))
        files.append(export(law_curve_table(cfg.ensemble.sigma), out_dir / "law_curve.csv", "csv", meta))
        for n in rs.n_grid:
            s = summarize_deltas(n, rs.deltas(n))
            lines.append(f"n={n}: median Delta_p {s.median:.5f} over {s.replicas} replicas")
        worst = max(float(rs.invariants[n].max()) for n in rs.n_grid)
        reports.append(BoundReport(name="eigen_invariants", lhs=[worst], rhs=[EIGEN_INVARIANT_TOL]))
    elif command == "rate":
        _, fit, reports = rate_experiment(cfg)
        if fit is not None:
            files.append(export(fit, out_dir / f"rate.{ext}", ext, meta))
            files.append(export(witness_table(fit), out_dir / "rate_witness.csv", "csv", meta))
            for s in fit.summaries:
                lines.append(f"n={s.n}: median {s.median:.5f}  IQR [{s.q25:.5f}, {s.q75:.5f}]  "
                             f"sqrt(n)*median {s.sqrt_n_times_median:.4f}")
            lines.append(f"slope {fit.slope:.4f} +- {fit.slope_se:.4f} (R^2 {fit.r_squared:.4f})")
    elif command == "variance":
        _, reports = variance_experiment(cfg)
    elif command == "bai":
        _, reports = bai_experiment(cfg)
    elif command == "diag":
        diags, reports = diag_experiment(cfg)
        if diags is not None:
            files.append(export(diag_table(diags), out_dir / f"diag.{ext}", ext, meta))
    elif command == "lawcheck":
        reports = lawcheck_experiment(cfg)
        gap = next(r for r in reports if r.name == "gap_integral")
        lines.append(f"gap integral over [-16, 16]: {gap.lhs[0]:.6f} (< {gap.rhs[0]:g}) "
                     f"{'PASS' if gap.passed else 'FAIL'}")
    else:
        raise ValueError(f"unknown command {command!r}")

    files.append(export(reports, out_dir / f"reports.{ext}", ext, meta))
    return RunOutcome(command=command, reports=reports, files=files, lines=lines)
