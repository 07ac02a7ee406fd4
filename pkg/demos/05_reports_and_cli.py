# %% [markdown]
# # Benchmark reports
#
# ``run_compare`` runs several solver configurations on one problem and
# returns per-shift rows that serialize to CSV or JSON. The same harness
# backs the ``shifted-krylov`` command.

# %%
import io
import tempfile
from pathlib import Path

import pandas as pd  # only for display

from shifted_krylov import SolverConfig
from shifted_krylov.bench import RunConfig, emit_report, run_compare
from shifted_krylov.cli import main
from shifted_krylov.problems import gen_tau_grid, aquifer_problem

pr = aquifer_problem(20, 20, nshift=10)
taus = gen_tau_grid(pr.omegas[0], pr.omegas[-1], 3).taus
run = RunConfig(pr.K, pr.b, pr.sigmas, [
    ("mpgmres-sh", SolverConfig(taus=taus)),
    ("fgmres-sh", SolverConfig(taus=taus, kind="fgmres-sh")),
], pr.M)
report = run_compare(run)
df = pd.read_csv(io.StringIO(emit_report(report, "csv")))
print(df.groupby("solver")[["iterations", "precond_solves", "residual"]].max())

# %%
# The command-line front end
with tempfile.TemporaryDirectory() as d:
    d = Path(d)
    main(["generate", "phasor", "--nx", "20", "--ny", "20", "--nshift", "10", "--out-dir", str(d)])
    code = main(["bench", "--matrix", str(d / "K.mtx"), "--mass", str(d / "M.mtx"),
                 "--rhs", str(d / "b.npy"), "--shifts", f"@{d / 'shifts.txt'}",
                 "--ntaus", "2,3", "--format", "csv", "--out", str(d / "bench.csv")])
    print("exit code", code)
    print(pd.read_csv(d / "bench.csv").groupby("solver")["precond_solves"].max())
