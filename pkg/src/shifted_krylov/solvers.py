"""MPGMRES-Sh, FGMRES-Sh and GMRES-Sh drivers for shifted families.

All three solve ``(K + sigma_j M) x_j = b`` for every shift from a single
shared basis, starting from ``x0 = 0``.
"""
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .arnoldi import MpArnoldiState, assemble_projected, expand_flexible, expand_selective
from .core import (
    DegeneratePencilError,
    OpCounter,
    as_complex_csr,
    as_complex_vector,
    small_gen_eig,
)
from .preconditioners import PreconditionerSet

__all__ = [
    "PencilNormCache",
    "ShiftedLeastSquares",
    "ShiftedProblem",
    "SolveReport",
    "SolverConfig",
    "convergence_check",
    "estimate_shifted_norm",
    "fgmres_cycle_index",
    "per_shift_least_squares",
    "solve",
    "solve_fgmres_sh",
    "solve_gmres_sh",
    "solve_mpgmres_sh",
]

SOLVER_KINDS = ("mpgmres-sh", "fgmres-sh", "gmres-sh")


@dataclass
class ShiftedProblem:
    """The family ``(K + sigma_j M) x_j = b``; ``M=None`` is the identity."""

    K: object
    b: np.ndarray
    sigmas: np.ndarray
    M: object = None

    def __post_init__(self):
        self.K = as_complex_csr(self.K)
        n = self.K.shape[0]
        if self.K.shape[1] != n:
            raise ValueError(f"K must be square, got {self.K.shape}")
        if self.M is not None:
            self.M = as_complex_csr(self.M)
            if self.M.shape != self.K.shape:
                raise ValueError(f"M has shape {self.M.shape}, K has {self.K.shape}")
        self.b = as_complex_vector(self.b, n)
        self.sigmas = np.atleast_1d(np.asarray(self.sigmas, dtype=np.complex128))

    @property
    def n(self):
        return self.K.shape[0]

    def residual(self, x, sigma):
        Mx = x if self.M is None else self.M @ x
        return self.b - (self.K @ x + sigma * Mx)


@dataclass
class SolverConfig:
    taus: tuple = ()
    m_per_prec: int = 5
    btol: float = 1e-10
    atol: float = 0.0
    epsilon: float = 0.0
    max_total_iterations: int = 500
    kind: str = "mpgmres-sh"
    drop_tol: float = 1e-10
    reorth: bool = True
    max_inner: int = 500

    def __post_init__(self):
        self.taus = tuple(complex(t) for t in np.atleast_1d(self.taus)) if len(np.atleast_1d(self.taus)) else ()
        if self.btol < 0 or self.atol < 0 or self.epsilon < 0:
            raise ValueError("btol, atol and epsilon must be nonnegative")
        if len(set(self.taus)) != len(self.taus):
            raise ValueError("preconditioner shifts must be distinct")
        if self.kind not in SOLVER_KINDS:
            raise ValueError(f"unknown solver kind {self.kind!r}; expected one of {SOLVER_KINDS}")
        if self.m_per_prec < 1 or self.max_total_iterations < 1:
            raise ValueError("m_per_prec and max_total_iterations must be positive")


@dataclass
class SolveReport:
    solver: str
    sigmas: np.ndarray
    solutions: np.ndarray
    histories: list
    converged: np.ndarray
    iterations: np.ndarray
    precond_solves: int
    inner_products: int
    wall_time: float
    total_iterations: int
    y_l1: np.ndarray = None
    rank_deficient: np.ndarray = None
    breakdown: bool = False
    norm_estimates: np.ndarray = None
    extra: dict = field(default_factory=dict)

    @property
    def residuals(self):
        return np.array([h[-1] if h else np.nan for h in self.histories])

    @property
    def all_converged(self):
        return bool(np.all(self.converged))

    def true_residuals(self, prob):
        return np.array(
            [np.linalg.norm(prob.residual(self.solutions[:, j], s)) for j, s in enumerate(self.sigmas)]
        )


# -- small dense pieces ------------------------------------------------------


def per_shift_least_squares(Hbar_sigma, beta):
    """Solve ``min_y || beta e_1 - Hbar_sigma y ||_2``.

    Returns
    -------
    y : array
    residual_norm : float
    rank_deficient : bool
        True when LAPACK found the matrix rank deficient; `y` is then the
        minimum-norm solution.
    """
    Hs = np.asarray(Hbar_sigma, dtype=np.complex128)
    rhs = np.zeros(Hs.shape[0], dtype=np.complex128)
    rhs[0] = beta
    y, _, rank, _ = np.linalg.lstsq(Hs, rhs, rcond=None)
    res = float(np.linalg.norm(rhs - Hs @ y))
    return y, res, bool(rank < Hs.shape[1])


def _pencil_norm_estimate(Hs, Hp):
    k = min(Hs.shape)
    try:
        lam, _ = small_gen_eig(Hs[:k, :k], Hp[:k, :k])
    except DegeneratePencilError:
        return float(np.linalg.norm(Hs)), True
    if lam.size == 0:
        return float(np.linalg.norm(Hs)), True
    return float(np.max(np.abs(lam))), False


class PencilNormCache:
    """Harmonic Ritz norm estimates for every shift from one eigensolve.

    The projected matrices are affine in the shift, ``H(sigma; T) = H(0; T) +
    sigma H``, so the eigenvalues of ``H(sigma; T) z = lambda H z`` are those
    of ``H(0; T) z = mu H z`` plus ``sigma``. The unshifted pencil is solved
    once per basis size and reused for all shifts.

    Parameters
    ----------
    pencil : callable
        Returns ``(H(0; T), H)`` for the current basis.
    """

    def __init__(self, pencil):
        self.pencil = pencil
        self.key = None
        self.mu = None
        self.mats = None

    def __call__(self, sigma, key):
        if key != self.key:
            A0, B = self.pencil()
            k = min(A0.shape)
            try:
                self.mu, _ = small_gen_eig(A0[:k, :k], B[:k, :k])
            except DegeneratePencilError:
                self.mu = None
            self.mats = (A0, B)
            self.key = key
        if self.mu is None or self.mu.size == 0:
            A0, B = self.mats
            return float(np.linalg.norm(A0 + sigma * B))
        return float(np.max(np.abs(self.mu + sigma)))


def estimate_shifted_norm(state, sigma, full_output=False):
    """Estimate ``||K + sigma M||`` from harmonic Ritz values.

    Solves the square pencil ``H(sigma; T) z = lambda H z`` built from the
    leading square blocks of the projected matrices and returns the largest
    ``|lambda|``. A degenerate pencil falls back to ``||H(sigma; T)||_F``.
    """
    est, degenerate = _pencil_norm_estimate(assemble_projected(state, sigma), state.Hbar)
    return (est, degenerate) if full_output else est


def convergence_check(res_norm, b_norm, x_norm, norm_est, y_l1, cfg):
    """``res <= btol ||b|| + atol ||A + sigma I|| ||x|| + epsilon ||y||_1``."""
    bound = cfg.btol * b_norm + cfg.atol * norm_est * x_norm + cfg.epsilon * y_l1
    return bool(res_norm <= bound)


def fgmres_cycle_index(k, n_p, m_per_prec):
    """Preconditioner used by FGMRES-Sh at iteration ``k`` (1-based)."""
    return ((k - 1) // m_per_prec) % n_p


# -- incremental least squares ---------------------------------------------


class ShiftedLeastSquares:
    """QR of the per-shift projected matrices, updated as columns are appended.

    The projected matrix of every solver here only ever gains columns (and
    rows below the old ones), so earlier orthogonal transforms stay valid and
    each update costs one small QR per shift. If an update adds fewer rows than
    columns (deflation) the object switches to dense least squares on the
    full matrices supplied by the caller.
    """

    def __init__(self, beta, nshift, cap=32):
        self.beta = beta
        self.S = nshift
        self.nz = 0
        self.nv = 1
        self.R = np.zeros((nshift, cap, cap), dtype=np.complex128)
        self.g = np.zeros((nshift, cap + 1), dtype=np.complex128)
        self.g[:, 0] = beta
        self.transforms = []
        self.dense = False
        self._dense_res = {}
        self._full = None

    def _grow(self, nz, nv):
        cap = self.R.shape[1]
        if nz > cap or nv > self.g.shape[1]:
            new = max(nz, nv, 2 * cap)
            R = np.zeros((self.S, new, new), dtype=np.complex128)
            R[:, :cap, :cap] = self.R
            self.R = R
            g = np.zeros((self.S, new + 1), dtype=np.complex128)
            g[:, : self.g.shape[1]] = self.g
            self.g = g

    def append(self, cols, full=None):
        """Append columns.

        cols : (S, nv_new, p) array
            New columns for every shift, all rows of the enlarged matrix.
        full : callable, optional
            ``full(s)`` returns the whole projected matrix for shift ``s``;
            required once the update falls back to dense mode.
        """
        S, nv_new, p = cols.shape
        nz_old = self.nz
        self._full = full
        self._dense_res = {}
        self.nz += p
        self.nv = nv_new
        t = nv_new - nz_old
        if self.dense or t < p:
            self.dense = True
            return
        self._grow(self.nz, nv_new)
        cols = cols.copy()
        for a, Qh in self.transforms:
            r = Qh.shape[1]
            cols[:, a : a + r, :] = Qh @ cols[:, a : a + r, :]
        Q, Rt = np.linalg.qr(cols[:, nz_old:nv_new, :], mode="complete")
        Qh = np.conj(np.swapaxes(Q, 1, 2))
        self.transforms.append((nz_old, Qh))
        self.g[:, nz_old:nv_new] = (Qh @ self.g[:, nz_old:nv_new, None])[:, :, 0]
        self.R[:, :nz_old, nz_old : self.nz] = cols[:, :nz_old, :]
        self.R[:, nz_old : self.nz, nz_old : self.nz] = Rt[:, :p, :]

    def residuals(self, which=None):
        idx = range(self.S) if which is None else which
        if self.dense:
            return np.array([self._dense(s)[1] for s in idx])
        tail = self.g[:, self.nz : self.nv]
        return np.linalg.norm(tail[list(idx)], axis=1)

    def _dense(self, s):
        if s not in self._dense_res:
            y, res, _ = per_shift_least_squares(self._full(s), self.beta)
            self._dense_res[s] = (y, res)
        return self._dense_res[s]

    def solve(self, s):
        """Least-squares coefficients ``y`` for shift ``s``; flags rank deficiency."""
        if self.dense:
            y, _ = self._dense(s)
            return y, True
        R = self.R[s, : self.nz, : self.nz]
        d = np.abs(np.diag(R))
        if self.nz == 0:
            return np.zeros(0, dtype=np.complex128), False
        if d.min() <= 1e-13 * d.max():
            # near-singular triangle: the tail norm is no longer the minimum
            self.dense = True
            return self.solve(s)
        y = scipy.linalg.solve_triangular(R, self.g[s, : self.nz])
        return y, False


# -- drivers -------------------------------------------------------------------


def _iteration_budget(cfg):
    return cfg.max_total_iterations


class _ShiftTracker:
    """Per-shift bookkeeping shared by the three drivers."""

    def __init__(self, prob, cfg):
        self.prob = prob
        self.cfg = cfg
        S = prob.sigmas.size
        self.S = S
        self.bnorm = float(np.linalg.norm(prob.b))
        self.histories = [[] for _ in range(S)]
        self.converged = np.zeros(S, dtype=bool)
        self.iterations = np.zeros(S, dtype=int)
        self.frozen_y = [None] * S
        self.rank_def = np.zeros(S, dtype=bool)
        self.norm_est = np.full(S, np.nan)

    def active(self):
        return np.flatnonzero(~self.converged)

    def check(self, it, lsq, basis_for_x, norm_estimator):
        cfg = self.cfg
        act = self.active()
        if act.size == 0:
            return
        res = lsq.residuals(act)
        need_y = cfg.epsilon > 0 or cfg.atol > 0
        for s, r in zip(act, res):
            self.histories[s].append(float(r))
            self.iterations[s] = it
            y = None
            y_l1 = 0.0
            if need_y:
                y, rd = lsq.solve(s)
                y_l1 = float(np.sum(np.abs(y)))
            if r <= cfg.btol * self.bnorm + cfg.epsilon * y_l1:
                ok = True
            elif cfg.atol > 0:
                x_norm = float(np.linalg.norm(basis_for_x(y.size) @ y))
                est = norm_estimator(s)
                self.norm_est[s] = est
                ok = convergence_check(r, self.bnorm, x_norm, est, y_l1, cfg)
            else:
                ok = False
            if ok:
                self.converged[s] = True
                if y is None:
                    y, rd = lsq.solve(s)
                self.frozen_y[s] = y
                self.rank_def[s] = rd

    def finish(self, lsq, Zfull, solver, counter, t0, total_it, breakdown):
        n = self.prob.n
        X = np.zeros((n, self.S), dtype=np.complex128)
        y_l1 = np.zeros(self.S)
        for s in range(self.S):
            y = self.frozen_y[s]
            if y is None:
                y, rd = lsq.solve(s)
                self.rank_def[s] = rd
            X[:, s] = Zfull[:, : y.size] @ y
            y_l1[s] = float(np.sum(np.abs(y)))
        return SolveReport(
            solver=solver,
            sigmas=self.prob.sigmas.copy(),
            solutions=X,
            histories=self.histories,
            converged=self.converged.copy(),
            iterations=self.iterations.copy(),
            precond_solves=counter.precond_solves,
            inner_products=counter.inner_products,
            wall_time=time.perf_counter() - t0,
            total_iterations=total_it,
            y_l1=y_l1,
            rank_deficient=self.rank_def.copy(),
            breakdown=breakdown,
            norm_estimates=self.norm_est.copy(),
        )


def _state_columns(state, sigmas, z0):
    """New projected columns ``E + Hbar (sigma - T)`` for every shift, block ``z0:``."""
    H = state.Hbar[:, z0:]
    taus = state.taus[z0:]
    cols = H[None, :, :] * (sigmas[:, None, None] - taus[None, None, :])
    cols[:, state.sources[z0:], np.arange(H.shape[1])] += 1.0
    return cols


def _run_state_solver(prob, cfg, P, step, name, counter):
    t0 = time.perf_counter()
    state = MpArnoldiState(prob.b, drop_tol=cfg.drop_tol, reorth=cfg.reorth, counter=counter)
    track = _ShiftTracker(prob, cfg)
    lsq = ShiftedLeastSquares(state.beta, track.S)
    norms = PencilNormCache(lambda: (assemble_projected(state, 0.0), state.Hbar))
    it = 0
    for it in range(1, _iteration_budget(cfg) + 1):
        z0 = state.nz
        step(state, it)
        lsq.append(
            _state_columns(state, prob.sigmas, z0),
            full=lambda s: assemble_projected(state, prob.sigmas[s]),
        )
        track.check(it, lsq, lambda k: state.Z[:, :k], lambda s: norms(prob.sigmas[s], state.nz))
        if track.converged.all() or state.breakdown:
            break
    report = track.finish(lsq, state.Z, name, counter, t0, it, state.breakdown)
    report.extra["state"] = state
    return report


def _preconditioners(prob, cfg, counter):
    if not cfg.taus:
        raise ValueError(f"{cfg.kind} needs at least one preconditioner shift")
    mode = "inexact" if cfg.epsilon > 0 else "exact"
    return PreconditionerSet.build(
        prob.K, prob.M, cfg.taus, mode=mode, epsilon=cfg.epsilon, max_inner=cfg.max_inner, counter=counter
    )


def solve_mpgmres_sh(prob, cfg, preconditioners=None):
    """Selective MPGMRES-Sh: every iteration applies all ``n_p`` preconditioners
    to the newest basis vector and minimizes each shift's residual over ``span(Z)``.
    """
    counter = OpCounter()
    P = preconditioners if preconditioners is not None else _preconditioners(prob, cfg, counter)
    P.counter = counter
    return _run_state_solver(
        prob, cfg, P, lambda st, it: expand_selective(st, P, prob.M), "mpgmres-sh", counter
    )


def solve_fgmres_sh(prob, cfg, preconditioners=None):
    """FGMRES-Sh: one preconditioner per iteration, ``m_per_prec`` consecutive
    iterations per shift before moving to the next, wrapping around.
    """
    counter = OpCounter()
    P = preconditioners if preconditioners is not None else _preconditioners(prob, cfg, counter)
    P.counter = counter

    def step(st, it):
        expand_flexible(st, P, fgmres_cycle_index(it, P.n_p, cfg.m_per_prec), prob.M)

    return _run_state_solver(prob, cfg, P, step, "fgmres-sh", counter)


def solve_gmres_sh(prob, cfg, preconditioners=None):
    """GMRES-Sh with one shift-and-invert preconditioner, or none.

    Preconditioned: Arnoldi on ``M P^{-1}`` gives
    ``(K + sigma M) P^{-1} V_m = V_{m+1} ([I; 0] + (sigma - tau) Hbar)``.
    Unpreconditioned (``M`` must be the identity): Arnoldi on ``K`` gives
    ``Hbar(sigma) = Hbar + sigma [I; 0]``.
    """
    t0 = time.perf_counter()
    counter = OpCounter()
    if len(cfg.taus) > 1:
        raise ValueError("GMRES-Sh takes a single preconditioner shift")
    if preconditioners is None and cfg.taus:
        preconditioners = _preconditioners(prob, cfg, counter)
    P = preconditioners
    if P is not None:
        P.counter = counter
        tau = P[0].tau
    elif prob.M is not None:
        raise ValueError("unpreconditioned GMRES-Sh needs M = identity")
    track = _ShiftTracker(prob, cfg)
    sig = prob.sigmas
    n = prob.n
    maxit = _iteration_budget(cfg)
    beta = float(np.linalg.norm(prob.b))
    V = np.zeros((n, maxit + 1), dtype=np.complex128)
    Zs = np.zeros((n, maxit), dtype=np.complex128) if P is not None else None
    H = np.zeros((maxit + 1, maxit), dtype=np.complex128)
    V[:, 0] = prob.b / beta
    lsq = ShiftedLeastSquares(beta, track.S)
    breakdown = False

    def projected(s, k):
        if P is not None:
            Hs = (sig[s] - tau) * H[: k + 1, :k]
            Hs[:k, :k] += np.eye(k)
        else:
            Hs = H[: k + 1, :k].copy()
            Hs[:k, :k] += sig[s] * np.eye(k)
        return Hs[: (k if breakdown else k + 1)]

    def pencil():
        k = kref[0]
        rows = k if breakdown else k + 1
        Hk = H[:rows, :k]
        eye = np.eye(rows, k)
        return (eye - tau * Hk, Hk) if P is not None else (Hk.copy(), eye)

    norms = PencilNormCache(pencil)

    k = 0
    kref = [0]
    for k in range(1, maxit + 1):
        v = V[:, k - 1]
        if P is not None:
            z = P.apply(0, v)
            Zs[:, k - 1] = z
            w = z if prob.M is None else prob.M @ z
        else:
            w = prob.K @ v
        w = np.asarray(w, dtype=np.complex128).copy()
        wnorm0 = np.linalg.norm(w)
        for _ in range(2 if cfg.reorth else 1):
            for j in range(k):
                c = np.vdot(V[:, j], w)
                counter.inner_products += 1
                H[j, k - 1] += c
                w -= c * V[:, j]
        h = np.linalg.norm(w)
        counter.inner_products += 1
        nrows = k + 1
        if h <= cfg.drop_tol * wnorm0:
            breakdown = True
            nrows = k
        else:
            H[k, k - 1] = h
            V[:, k] = w / h
        if P is not None:
            cols = (sig[:, None] - tau) * H[None, :nrows, k - 1]
            cols[:, k - 1] += 1.0
        else:
            cols = np.broadcast_to(H[:nrows, k - 1], (track.S, nrows)).copy()
            cols[:, k - 1] += sig
        kref[0] = k
        lsq.append(cols[:, :, None], full=lambda s, k=k: projected(s, k))
        basis = Zs if P is not None else V
        track.check(k, lsq, lambda m: basis[:, :m], lambda sv: norms(sig[sv], k))
        if track.converged.all() or breakdown:
            break
    basis = Zs if P is not None else V
    return track.finish(lsq, basis, "gmres-sh", counter, t0, k, breakdown)


def solve(prob, cfg, preconditioners=None):
    """Dispatch on ``cfg.kind``."""
    return {
        "mpgmres-sh": solve_mpgmres_sh,
        "fgmres-sh": solve_fgmres_sh,
        "gmres-sh": solve_gmres_sh,
    }[cfg.kind](prob, cfg, preconditioners)
