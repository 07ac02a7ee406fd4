"""Solver comparison harness and report serialization."""
import csv
import io
import json
import platform
import time
from dataclasses import dataclass, field

import numpy as np
import scipy

from .solvers import ShiftedProblem, SolverConfig, solve

__all__ = [
    "BenchReport",
    "CSV_COLUMNS",
    "RunConfig",
    "emit_report",
    "environment_info",
    "read_report",
    "report_rows",
    "run_compare",
    "solves_per_iteration",
]

CSV_COLUMNS = (
    "solver",
    "shift_index",
    "shift_re",
    "shift_im",
    "iterations",
    "precond_solves",
    "residual",
    "converged",
    "wall_ms",
)


@dataclass
class RunConfig:
    """One comparison: a problem, its shifts, and the solvers to run on it.

    ``solvers`` entries are ``(label, SolverConfig)`` pairs so that one run
    can compare the same method at several preconditioner counts.
    """

    K: object
    b: np.ndarray
    sigmas: np.ndarray
    solvers: list
    M: object = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.solvers:
            raise ValueError("no solvers requested")
        self.sigmas = np.atleast_1d(np.asarray(self.sigmas, dtype=np.complex128))
        if self.sigmas.size == 0:
            raise ValueError("no shifts given")
        for label, cfg in self.solvers:
            if not isinstance(cfg, SolverConfig):
                raise TypeError(f"solver {label!r} needs a SolverConfig")


@dataclass
class BenchReport:
    rows: list
    metadata: dict

    def to_dict(self):
        return {"metadata": self.metadata, "rows": self.rows}

    @classmethod
    def from_dict(cls, d):
        return cls(rows=list(d["rows"]), metadata=dict(d["metadata"]))

    @property
    def all_converged(self):
        return all(r["converged"] for r in self.rows)


def solves_per_iteration(cfg):
    if cfg.kind == "mpgmres-sh":
        return len(cfg.taus)
    if cfg.kind == "fgmres-sh":
        return 1
    return 1 if cfg.taus else 0


def environment_info():
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "machine": platform.machine(),
    }


def run_compare(run):
    """Run every configured solver on the same problem and collect per-shift rows.

    A solver that raises is recorded with ``converged = False`` for every
    shift (and the error text in the metadata); the remaining solvers still
    run.
    """
    prob = ShiftedProblem(run.K, run.b, run.sigmas, run.M)
    rows = []
    runs = []
    for label, cfg in run.solvers:
        entry = {"solver": label, "kind": cfg.kind, "taus": [[t.real, t.imag] for t in cfg.taus]}
        t0 = time.perf_counter()
        try:
            rep = solve(prob, cfg)
        except Exception as exc:  # noqa: BLE001 - recorded per cell
            wall_ms = 1e3 * (time.perf_counter() - t0)
            entry.update(error=f"{type(exc).__name__}: {exc}", wall_ms=wall_ms)
            runs.append(entry)
            for j, s in enumerate(prob.sigmas):
                rows.append(_row(label, j, s, 0, 0, 1.0, False, wall_ms))
            continue
        wall_ms = 1e3 * rep.wall_time
        rows += report_rows(label, cfg, rep, prob)
        entry.update(
            total_iterations=int(rep.total_iterations),
            precond_solves=int(rep.precond_solves),
            inner_products=int(rep.inner_products),
            wall_ms=wall_ms,
            breakdown=bool(rep.breakdown),
        )
        runs.append(entry)
    meta = {
        "n": int(prob.n),
        "nshifts": int(prob.sigmas.size),
        "generalized": run.M is not None,
        "runs": runs,
        "environment": environment_info(),
        **run.metadata,
    }
    return BenchReport(rows, meta)


def report_rows(label, cfg, rep, prob):
    """Per-shift report rows from a :class:`SolveReport`.

    ``precond_solves`` counts the solves performed up to the iteration at
    which that shift converged; ``residual`` is the true relative residual.
    """
    per_it = solves_per_iteration(cfg)
    res = rep.true_residuals(prob) / float(np.linalg.norm(prob.b))
    wall_ms = 1e3 * rep.wall_time
    return [
        _row(label, j, s, int(rep.iterations[j]), int(rep.iterations[j]) * per_it,
             float(res[j]), bool(rep.converged[j]), wall_ms)
        for j, s in enumerate(prob.sigmas)
    ]


def _row(label, j, s, iters, solves, res, conv, wall_ms):
    return {
        "solver": label,
        "shift_index": int(j),
        "shift_re": float(np.real(s)),
        "shift_im": float(np.imag(s)),
        "iterations": int(iters),
        "precond_solves": int(solves),
        "residual": float(res),
        "converged": bool(conv),
        "wall_ms": float(wall_ms),
    }


def emit_report(report, fmt="json", path=None):
    """Serialize `report` as ``"json"`` or ``"csv"``; write to `path` or return the text."""
    if fmt == "json":
        text = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    elif fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in report.rows:
            w.writerow({k: r[k] for k in CSV_COLUMNS})
        text = buf.getvalue()
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    if path is None or str(path) == "-":
        return text
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return text


def read_report(path, fmt=None):
    """Load a report written by :func:`emit_report` (CSV loses the metadata)."""
    fmt = fmt or ("csv" if str(path).endswith(".csv") else "json")
    with open(path, encoding="utf-8") as fh:
        if fmt == "json":
            return BenchReport.from_dict(json.load(fh))
        rows = []
        for r in csv.DictReader(fh):
            rows.append({
                "solver": r["solver"],
                "shift_index": int(r["shift_index"]),
                "shift_re": float(r["shift_re"]),
                "shift_im": float(r["shift_im"]),
                "iterations": int(r["iterations"]),
                "precond_solves": int(r["precond_solves"]),
                "residual": float(r["residual"]),
                "converged": r["converged"] == "True",
                "wall_ms": float(r["wall_ms"]),
            })
        return BenchReport(rows, {})
