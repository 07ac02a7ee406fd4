"""Command-line front end: ``shifted-krylov {solve,bench,matfun,generate}``.

Exit status is 0 when every requested solve converged, 1 when some did
not, and 2 for invalid input.
"""
import argparse
import json
import re
import sys
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from . import matfun as mf
from .bench import BenchReport, RunConfig, emit_report, environment_info, report_rows, run_compare
from .problems import (
    OMEGA_RANGE,
    gen_tau_grid,
    load_matrix_market,
    synthetic_spd,
    aquifer_problem,
    write_matrix_market,
)
from .solvers import SOLVER_KINDS, ShiftedProblem, SolverConfig

__all__ = ["build_parser", "main", "parse_complex", "parse_shift_range", "parse_shifts"]


class UsageError(ValueError):
    pass


# -- parsing helpers -----------------------------------------------------------

def parse_complex(tok):
    """Parse ``"1.5"``, ``"2i"``, ``"-3+4i"``, ``"1e-3-2.5i"`` (``j`` also accepted)."""
    t = tok.strip().replace(" ", "").replace("I", "i").replace("J", "j")
    if not t:
        raise UsageError("empty number")
    if t.endswith("i"):
        t = t[:-1] + "j"
    if t in ("j", "+j"):
        t = "1j"
    elif t == "-j":
        t = "-1j"
    try:
        return complex(t)
    except ValueError:
        raise UsageError(f"cannot parse {tok!r} as a complex number") from None


def parse_shifts(spec):
    """Comma-separated complex list, or ``@path`` to read one value per line."""
    if spec.startswith("@"):
        text = Path(spec[1:]).read_text()
        toks = [t for line in text.splitlines() for t in line.split(",") if t.strip()]
    else:
        toks = [t for t in spec.split(",") if t.strip()]
    if not toks:
        raise UsageError("no shifts given")
    return np.array([parse_complex(t) for t in toks])


def parse_shift_range(spec):
    """``lo:hi:count[:imag]``: evenly spaced, multiplied by ``i`` when tagged ``imag``."""
    parts = spec.split(":")
    if len(parts) not in (3, 4) or (len(parts) == 4 and parts[3] != "imag"):
        raise UsageError(f"--shift-range expects lo:hi:count[:imag], got {spec!r}")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise UsageError(f"--shift-range expects numbers, got {spec!r}") from None
    if count < 1:
        raise UsageError("--shift-range count must be positive")
    s = np.linspace(lo, hi, count).astype(np.complex128)
    return 1j * s if len(parts) == 4 else s


def load_vector(path):
    p = Path(path)
    if p.suffix == ".npy":
        v = np.load(p)
    elif p.suffix == ".mtx":
        v = scipy.io.mmread(str(p))
        v = v.toarray() if sp.issparse(v) else np.asarray(v)
    else:
        v = np.loadtxt(p, dtype=complex)
    return np.asarray(v).reshape(-1)


def _taus_from_shifts(sigmas, n_p):
    """Spread `n_p` preconditioner shifts over the requested shifts.

    Purely imaginary positive shifts get a log-spaced grid over their range;
    anything else uses shifts at evenly spaced positions of the sorted list.
    """
    s = np.asarray(sigmas)
    if np.all(s.real == 0) and np.all(s.imag > 0) and s.imag.min() < s.imag.max():
        return tuple(gen_tau_grid(s.imag.min(), s.imag.max(), n_p).taus)
    order = s[np.lexsort((s.imag, s.real))]
    pick = np.unique(np.linspace(0, order.size - 1, n_p).round().astype(int))
    if pick.size < n_p:
        raise UsageError(f"cannot place {n_p} distinct preconditioners on {order.size} shifts")
    return tuple(order[pick])


# -- parser ---------------------------------------------------------------------


def _common(p):
    g = p.add_argument_group("problem")
    g.add_argument("--matrix", help="Matrix Market file for K (or A)")
    g.add_argument("--mass", help="Matrix Market file for M (default: identity)")
    g.add_argument("--phasor", metavar="NXxNY",
                   help="generate the 2-D phasor test problem instead of reading --matrix")
    g.add_argument("--rhs", help="right-hand side (.npy, .mtx or text); 'random' for a seeded "
                   "Gaussian vector; default normalized ones")
    g.add_argument("--seed", type=int, default=0)
    s = p.add_argument_group("shifts")
    s.add_argument("--shifts", help="comma-separated complex list like '1,2i,-3+4i', or @file")
    s.add_argument("--shift-range", help="lo:hi:count[:imag]")
    c = p.add_argument_group("solver")
    c.add_argument("--solver", action="append", choices=SOLVER_KINDS,
                   help="solver kind; repeat to compare several")
    c.add_argument("--taus", help="comma-separated preconditioner shifts")
    c.add_argument("--ntaus", help="number of preconditioners placed over the shift range; "
                   "a comma list like 2,3,5 runs each count")
    c.add_argument("--m-per-prec", type=int, default=5)
    c.add_argument("--btol", type=float, default=1e-10)
    c.add_argument("--atol", type=float, default=0.0)
    c.add_argument("--epsilon", type=float, default=0.0)
    c.add_argument("--max-iter", type=int, default=500)
    o = p.add_argument_group("output")
    o.add_argument("--out", default="-", help="report path ('-' for stdout)")
    o.add_argument("--format", choices=("json", "csv"), default="json")


def build_parser():
    p = argparse.ArgumentParser(
        prog="shifted-krylov",
        description="Shifted linear systems with multiple shift-and-invert preconditioners.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    sp_solve = sub.add_parser("solve", help="solve a shifted family with one solver")
    _common(sp_solve)
    sp_bench = sub.add_parser("bench", help="compare solvers on the same shifted family")
    _common(sp_bench)

    sp_mf = sub.add_parser("matfun", help="evaluate f(A) b by contour quadrature")
    _common(sp_mf)
    sp_mf.add_argument("--func", choices=sorted(mf.FUNCTIONS), required=True)
    sp_mf.add_argument("--rule", choices=mf.RULE_KINDS, default="hale-higham-1")
    sp_mf.add_argument("--eps", type=float, default=1e-6, help="quadrature tolerance for adaptive N")
    sp_mf.add_argument("--nodes", type=int, help="fixed number of quadrature nodes")
    sp_mf.add_argument("--vector-out", help="write f(A) b here (.npy or text)")

    sp_gen = sub.add_parser("generate", help="write a test problem as Matrix Market files")
    sp_gen.add_argument("kind", choices=("phasor", "spd"))
    sp_gen.add_argument("--nx", type=int, default=50)
    sp_gen.add_argument("--ny", type=int, default=50)
    sp_gen.add_argument("--nshift", type=int, default=50)
    sp_gen.add_argument("--n", type=int, default=1000, help="size for 'spd'")
    sp_gen.add_argument("--cond", type=float, default=1e6, help="condition number for 'spd'")
    sp_gen.add_argument("--seed", type=int, default=0)
    sp_gen.add_argument("--out-dir", required=True)
    return p


# -- assembling inputs -----------------------------------------------------------


def _load_problem(args):
    if args.matrix and args.phasor:
        raise UsageError("--matrix and --phasor are mutually exclusive")
    meta = {}
    sigmas = None
    if args.phasor:
        if args.mass:
            raise UsageError("--mass cannot be combined with --phasor")
        m = re.fullmatch(r"(\d+)(?:x(\d+))?", args.phasor)
        if not m:
            raise UsageError(f"--phasor expects NX or NXxNY, got {args.phasor!r}")
        nx = int(m.group(1))
        ny = int(m.group(2) or nx)
        pr = aquifer_problem(nx, ny, seed=args.seed)
        K, M, b = pr.K, pr.M, pr.b
        sigmas = pr.sigmas
        meta["problem"] = {"kind": "phasor", "nx": nx, "ny": ny, "seed": args.seed}
    elif args.matrix:
        K = load_matrix_market(args.matrix)
        M = load_matrix_market(args.mass) if args.mass else None
        b = None
        meta["problem"] = {"matrix": str(args.matrix), "mass": args.mass}
    else:
        raise UsageError("one of --matrix or --phasor is required")
    if K.shape[0] != K.shape[1]:
        raise UsageError(f"matrix must be square, got {K.shape}")
    if M is not None and M.shape != K.shape:
        raise UsageError(f"mass matrix shape {M.shape} does not match {K.shape}")
    n = K.shape[0]
    if args.rhs == "random":
        b = np.random.default_rng(args.seed).standard_normal(n)
        b /= np.linalg.norm(b)
    elif args.rhs:
        b = load_vector(args.rhs)
    elif b is None:
        b = np.ones(n) / np.sqrt(n)
    if b.shape[0] != n:
        raise UsageError(f"right-hand side has length {b.shape[0]}, matrix has {n}")
    return K, M, b, sigmas, meta


def _shifts(args, default=None):
    if args.shifts and args.shift_range:
        raise UsageError("--shifts and --shift-range are mutually exclusive")
    if args.shifts:
        return parse_shifts(args.shifts)
    if args.shift_range:
        return parse_shift_range(args.shift_range)
    if default is not None:
        return default
    raise UsageError("give --shifts or --shift-range")


def _solver_configs(args, sigmas, default_kinds):
    kinds = args.solver or default_kinds
    if args.taus and args.ntaus:
        raise UsageError("--taus and --ntaus are mutually exclusive")
    if args.taus:
        tau_sets = [tuple(parse_shifts(args.taus))]
    else:
        counts = [int(c) for c in (args.ntaus or "3").split(",") if c.strip()]
        if any(c < 1 for c in counts):
            raise UsageError("--ntaus values must be positive")
        tau_sets = [_taus_from_shifts(sigmas, c) for c in counts]
    multi = len(tau_sets) > 1
    out = []
    for taus in tau_sets:
        for kind in kinds:
            t = taus
            if kind == "gmres-sh" and len(taus) > 1:
                t = (taus[len(taus) // 2],)
            label = f"{kind}/np{len(taus)}" if multi else kind
            cfg = SolverConfig(
                taus=t, m_per_prec=args.m_per_prec, btol=args.btol, atol=args.atol,
                epsilon=args.epsilon, max_total_iterations=args.max_iter, kind=kind,
            )
            out.append((label, cfg))
    return out


def _emit(report, args):
    text = emit_report(report, args.format, None if args.out == "-" else args.out)
    if args.out == "-":
        sys.stdout.write(text)


def _summary(report):
    for run in report.metadata.get("runs", []):
        if "error" in run:
            print(f"{run['solver']}: FAILED {run['error']}", file=sys.stderr)
            continue
        rows = [r for r in report.rows if r["solver"] == run["solver"]]
        nconv = sum(r["converged"] for r in rows)
        print(
            f"{run['solver']}: {nconv}/{len(rows)} converged, {run['total_iterations']} iterations, "
            f"{run['precond_solves']} preconditioner solves, {run['wall_ms']:.1f} ms",
            file=sys.stderr,
        )


def cmd_solve(args, default_kinds):
    K, M, b, sigmas, meta = _load_problem(args)
    sigmas = _shifts(args, sigmas)
    cfgs = _solver_configs(args, sigmas, default_kinds)
    report = run_compare(RunConfig(K, b, sigmas, cfgs, M, metadata=meta))
    _emit(report, args)
    _summary(report)
    return 0 if report.all_converged else 1


def cmd_matfun(args):
    if args.mass or args.phasor:
        raise UsageError("matfun takes a single symmetric positive definite --matrix")
    if args.shifts or args.shift_range:
        raise UsageError("matfun derives its shifts from the quadrature rule")
    K, _, b, _, meta = _load_problem(args)
    bounds = mf.estimate_spectrum_bounds(K, seed=args.seed)
    N = args.nodes or mf.select_N_adaptive(bounds, args.func, args.eps, kind=args.rule)
    rule = mf.build_rule(bounds, args.func, N, args.rule)
    kind = (args.solver or ["mpgmres-sh"])[0]
    ntaus = int(args.ntaus) if args.ntaus else (1 if kind == "gmres-sh" else 3)
    taus = tuple(parse_shifts(args.taus)) if args.taus else ()
    cfg = SolverConfig(taus=taus, m_per_prec=args.m_per_prec, btol=args.btol,
                       atol=args.atol if args.atol else 1e-10, epsilon=args.epsilon,
                       max_total_iterations=args.max_iter, kind=kind)
    fold = not (np.iscomplexobj(K.data) and np.any(K.data.imag)) and not np.any(np.imag(b))
    idx, _ = mf.solved_nodes(rule, fold)
    if not taus:
        cfg = SolverConfig(**{**cfg.__dict__, "taus": mf.default_taus(rule.nodes[idx], ntaus)})
    meta.update(func=args.func, rule=args.rule, N=int(N), bounds=[bounds.m_hat, bounds.M_hat])
    try:
        x, rep = mf.eval_matfun(args.func, K, b, rule, cfg, fold=fold, full_output=True)
    except mf.MatfunConvergenceError as exc:
        x, rep = None, exc.report
    prob = ShiftedProblem(K, b, -rule.nodes[idx])
    run = {"solver": kind, "kind": kind, "taus": [[t.real, t.imag] for t in cfg.taus],
           "total_iterations": int(rep.total_iterations), "precond_solves": int(rep.precond_solves),
           "inner_products": int(rep.inner_products), "wall_ms": 1e3 * rep.wall_time,
           "breakdown": bool(rep.breakdown)}
    meta.update(n=int(K.shape[0]), nshifts=int(idx.size), generalized=False, runs=[run],
                environment=environment_info())
    report = BenchReport(report_rows(kind, cfg, rep, prob), meta)
    if args.vector_out and x is not None:
        if args.vector_out.endswith(".npy"):
            np.save(args.vector_out, x)
        else:
            np.savetxt(args.vector_out, x)
    _emit(report, args)
    _summary(report)
    return 0 if report.all_converged else 1


def cmd_generate(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "phasor":
        pr = aquifer_problem(args.nx, args.ny, args.nshift, seed=args.seed)
        write_matrix_market(out / "K.mtx", pr.K, symmetry="symmetric")
        write_matrix_market(out / "M.mtx", pr.M, symmetry="symmetric")
        np.save(out / "b.npy", pr.b)
        (out / "shifts.txt").write_text("".join(f"{float(w)!r}i\n" for w in pr.omegas))
        meta = {"kind": "phasor", "nx": args.nx, "ny": args.ny, "nshift": args.nshift,
                "seed": args.seed, "omega_range": list(OMEGA_RANGE)}
    else:
        A = synthetic_spd(args.n, args.cond, seed=args.seed)
        write_matrix_market(out / "A.mtx", A, symmetry="symmetric")
        meta = {"kind": "spd", "n": args.n, "cond": args.cond, "seed": args.seed}
    (out / "problem.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(f"wrote {args.kind} problem to {out}", file=sys.stderr)
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "solve":
            if args.solver and len(args.solver) > 1:
                raise UsageError("solve runs one solver; use bench to compare")
            return cmd_solve(args, ["mpgmres-sh"])
        if args.command == "bench":
            return cmd_solve(args, ["mpgmres-sh", "fgmres-sh", "gmres-sh"])
        if args.command == "matfun":
            return cmd_matfun(args)
        return cmd_generate(args)
    except (UsageError, ValueError, FileNotFoundError, KeyError) as exc:
        print(f"shifted-krylov: error: {exc}", file=sys.stderr)
        return 2
    except mf.MatfunConvergenceError as exc:
        print(f"shifted-krylov: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
