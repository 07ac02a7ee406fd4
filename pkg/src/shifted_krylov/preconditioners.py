"""Shift-and-invert preconditioners ``(K + tau M)^{-1}``."""
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import (
    DimensionError,
    OpCounter,
    SingularMatrixError,
    as_complex_csr,
    as_complex_vector,
    lu_factor,
    lu_solve,
)

__all__ = [
    "InnerSolveError",
    "PreconditionerSet",
    "ShiftInvertPreconditioner",
    "build_shift_invert",
    "shifted_matrix",
    "worker_threads",
]


class InnerSolveError(ArithmeticError):
    """An inexact preconditioner apply missed its accuracy target."""


def worker_threads():
    """Thread cap from ``SHIFTED_KRYLOV_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("SHIFTED_KRYLOV_THREADS", "1")))
    except ValueError:
        return 1


def shifted_matrix(K, M, tau):
    """Assemble ``K + tau * M`` in CSR; ``M=None`` means the identity."""
    K = as_complex_csr(K)
    if K.shape[0] != K.shape[1]:
        raise DimensionError(f"K must be square, got {K.shape}")
    if M is None:
        M = sp.identity(K.shape[0], dtype=np.complex128, format="csr")
    else:
        M = as_complex_csr(M)
        if M.shape != K.shape:
            raise DimensionError(f"M has shape {M.shape}, K has {K.shape}")
    S = (K + tau * M).tocsr()
    S.sum_duplicates()
    return S


class ShiftInvertPreconditioner:
    """Apply ``(K + tau M)^{-1}`` exactly (LU) or to relative accuracy ``epsilon``.

    Inexact applies run unrestarted GMRES on the assembled shifted matrix and
    check the true relative residual afterwards.
    """

    def __init__(self, K, M=None, tau=0.0, mode="exact", epsilon=0.0, max_inner=500):
        if mode not in ("exact", "inexact"):
            raise ValueError(f"unknown preconditioner mode {mode!r}")
        if mode == "inexact" and not epsilon > 0:
            raise ValueError("inexact mode needs epsilon > 0")
        self.tau = complex(tau)
        self.mode = mode
        self.epsilon = float(epsilon) if mode == "inexact" else 0.0
        self.max_inner = int(max_inner)
        self.matrix = shifted_matrix(K, M, self.tau)
        self.n = self.matrix.shape[0]
        self.factor = None
        self.inner_iterations = 0
        if mode == "exact":
            try:
                self.factor = lu_factor(self.matrix)
            except SingularMatrixError as exc:
                raise SingularMatrixError(f"K + tau*M is singular for tau={self.tau}: {exc}") from exc

    def solve(self, v):
        v = as_complex_vector(v, self.n)
        if self.factor is not None:
            return lu_solve(self.factor, v)
        return self._inner_solve(v)

    __call__ = solve

    def _inner_solve(self, v):
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return np.zeros_like(v)
        # aim a little below epsilon; scipy monitors its own recurrence residual
        target = 0.5 * self.epsilon
        x = np.zeros_like(v)
        for _ in range(3):
            r = v - self.matrix @ x
            iters = [0]

            def _count(_):
                iters[0] += 1

            dx, _info = spla.gmres(
                self.matrix, r, rtol=target * nv / max(np.linalg.norm(r), 1e-300),
                atol=0.0, restart=self.max_inner, maxiter=1, callback=_count,
                callback_type="pr_norm",
            )
            x = x + dx
            self.inner_iterations += iters[0]
            if np.linalg.norm(v - self.matrix @ x) <= self.epsilon * nv:
                return x
        raise InnerSolveError(
            f"inner GMRES for tau={self.tau} reached relative residual "
            f"{np.linalg.norm(v - self.matrix @ x) / nv:.2e} > {self.epsilon:.1e}"
        )


def build_shift_invert(K, M=None, tau=0.0, mode="exact", epsilon=None, max_inner=500):
    """Build one shift-and-invert preconditioner.

    ``epsilon`` defaults to 0 (exact mode); passing a positive value with
    ``mode="inexact"`` selects the inner Krylov solve.
    """
    if epsilon is None:
        epsilon = 0.0
    return ShiftInvertPreconditioner(K, M, tau, mode=mode, epsilon=epsilon, max_inner=max_inner)


class PreconditionerSet:
    """Ordered collection of shift-and-invert preconditioners with distinct shifts."""

    def __init__(self, preconditioners, counter=None):
        self.preconditioners = list(preconditioners)
        if not self.preconditioners:
            raise ValueError("need at least one preconditioner")
        taus = [P.tau for P in self.preconditioners]
        for i in range(len(taus)):
            for j in range(i):
                if taus[i] == taus[j]:
                    raise ValueError(f"preconditioner shifts must be distinct, tau={taus[i]} repeats")
        self.counter = counter if counter is not None else OpCounter()

    @classmethod
    def build(cls, K, M=None, taus=(), mode="exact", epsilon=None, max_inner=500, counter=None):
        return cls(
            [build_shift_invert(K, M, t, mode=mode, epsilon=epsilon, max_inner=max_inner) for t in taus],
            counter=counter,
        )

    def __len__(self):
        return len(self.preconditioners)

    def __getitem__(self, j):
        return self.preconditioners[j]

    def __iter__(self):
        return iter(self.preconditioners)

    @property
    def n_p(self):
        return len(self.preconditioners)

    @property
    def taus(self):
        return np.array([P.tau for P in self.preconditioners], dtype=np.complex128)

    @property
    def epsilon(self):
        return max(P.epsilon for P in self.preconditioners)

    def apply(self, j, v):
        """Apply preconditioner `j` to one vector, counting the solve."""
        x = self.preconditioners[j].solve(v)
        self.counter.precond_solves += 1
        return x

    def apply_block(self, vhat, which=None):
        """Return ``[P_1^{-1} vhat, ..., P_np^{-1} vhat]`` as an (n, n_p) block.

        `which` restricts the apply to a subset of preconditioner indices.
        """
        idx = range(self.n_p) if which is None else list(which)
        vhat = as_complex_vector(vhat)
        nthreads = min(worker_threads(), len(idx))
        if nthreads > 1:
            with ThreadPoolExecutor(nthreads) as pool:
                cols = list(pool.map(lambda j: self.preconditioners[j].solve(vhat), idx))
        else:
            cols = [self.preconditioners[j].solve(vhat) for j in idx]
        self.counter.precond_solves += len(cols)
        return np.column_stack(cols)
