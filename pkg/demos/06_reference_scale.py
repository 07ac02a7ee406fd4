# %% [markdown]
# # Matrix functions at reference scale
#
# Runs the three functions on SPD matrices with the sizes and condition
# numbers of the plbuckle, nasa1824 and 1138_bus matrices. Real copies are
# used when found (see ``load_reference_matrix``); otherwise a synthetic
# matrix with the same size and condition number stands in. Takes a couple
# of minutes.

# %%
import sys
import time

import numpy as np

from shifted_krylov import SolverConfig
from shifted_krylov.matfun import (
    FUNCTIONS,
    build_rule,
    estimate_spectrum_bounds,
    eval_matfun,
    select_N_adaptive,
)
from shifted_krylov.problems import REFERENCE_MATRICES, load_reference_matrix, synthetic_spd

names = sys.argv[1:] or list(REFERENCE_MATRICES)

# %%
for name in names:
    try:
        A, src = load_reference_matrix(name), "file"
    except FileNotFoundError:
        info = REFERENCE_MATRICES[name]
        A, src = synthetic_spd(info["n"], info["cond"], seed=1), "synthetic"
    b = np.random.default_rng(0).standard_normal(A.shape[0])
    b /= np.linalg.norm(b)
    lam, Q = np.linalg.eigh(A.toarray())
    bounds = estimate_spectrum_bounds(A)
    for f in ("exp-neg", "log", "sqrt"):
        rule = build_rule(bounds, f, select_N_adaptive(bounds, f, 1e-6))
        ref = Q @ (FUNCTIONS[f](lam) * (Q.T @ b))
        out = []
        for kind in ("mpgmres-sh", "fgmres-sh"):
            t0 = time.perf_counter()
            x, rep = eval_matfun(f, A, b, rule, SolverConfig(btol=1e-10, atol=1e-10, kind=kind,
                                                             max_total_iterations=3000), full_output=True)
            err = np.linalg.norm(x - ref) / np.linalg.norm(ref)
            out.append(f"{kind} it {rep.total_iterations:4d} solves {rep.precond_solves:4d} "
                       f"err {err:.1e} {time.perf_counter() - t0:5.1f}s")
        print(f"{name} ({src}) {f:8s} N={rule.N:4d} | " + " | ".join(out))
