"""Shifted linear systems ``(K + sigma_j M) x = b`` with multiple shift-and-invert preconditioners.

The main entry points are :func:`solve_mpgmres_sh` and its baselines
:func:`solve_fgmres_sh` and :func:`solve_gmres_sh`, all driven by a
:class:`ShiftedProblem` and a :class:`SolverConfig`. :func:`eval_matfun`
builds ``f(A) b`` on top of them.
"""
from .arnoldi import MpArnoldiState, assemble_projected, expand_complete, expand_flexible, expand_selective
from .bench import BenchReport, RunConfig, emit_report, run_compare
from .core import (
    BreakdownError,
    DegeneratePencilError,
    DimensionError,
    OpCounter,
    SingularMatrixError,
    lu_factor,
    lu_solve,
    small_gen_eig,
    spmv,
    thin_qr,
)
from .matfun import (
    MatfunConvergenceError,
    QuadratureRule,
    SpectrumBounds,
    build_circle_rule,
    build_conformal_rule,
    build_rule,
    estimate_spectrum_bounds,
    eval_matfun,
    select_N_adaptive,
)
from .preconditioners import InnerSolveError, PreconditionerSet, ShiftInvertPreconditioner, build_shift_invert
from .problems import (
    PhasorProblem,
    TauGrid,
    gen_phasor_2d,
    gen_tau_grid,
    load_matrix_market,
    load_reference_matrix,
    synthetic_spd,
    aquifer_problem,
    write_matrix_market,
)
from .solvers import (
    ShiftedProblem,
    SolveReport,
    SolverConfig,
    convergence_check,
    estimate_shifted_norm,
    per_shift_least_squares,
    solve,
    solve_fgmres_sh,
    solve_gmres_sh,
    solve_mpgmres_sh,
)

__version__ = "0.1.0"
