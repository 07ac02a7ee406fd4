"""Multipreconditioned Arnoldi decomposition for shifted systems.

With shift-and-invert preconditioners ``P_j = K + tau_j M`` every search
direction ``z = P_j^{-1} v`` satisfies ``K z + tau_j M z = v``. Collecting
the directions in ``Z``, their shifts in ``T`` and the source basis vectors
in a 0/1 selection matrix ``E`` gives ``K Z + M Z T = V E``. Orthogonalizing
``M Z`` gives ``M Z = V Hbar``. Together these give the per-shift relation

    (K + sigma M) Z = V (E + Hbar (sigma I - T)),

so one basis serves every shift. Multiplication by ``K + sigma M`` is never
needed.
"""
import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .core import BreakdownError, OpCounter, as_complex_vector, thin_qr

__all__ = [
    "COMPLETE_COLUMN_CAP",
    "COMPLETE_DROP_TOL",
    "MpArnoldiState",
    "assemble_projected",
    "expand_complete",
    "expand_flexible",
    "expand_selective",
]

COMPLETE_COLUMN_CAP = 256
COMPLETE_DROP_TOL = 1e-9


class MpArnoldiState:
    """Basis ``V``, search directions ``Z`` and coefficients after ``m`` iterations.

    Attributes
    ----------
    beta : float
        ``||b||_2``; ``V[:, 0] = b / beta``.
    m : int
        Completed iterations.
    v_blocks, z_blocks : list of (start, stop)
        Column ranges of each block in ``V`` and ``Z``.
    breakdown : bool
        Set once an expansion produced no new basis vector.
    deflated : list of (iteration, z_column)
        Search directions whose image under ``M`` added nothing to ``V``.
    discarded : list of arrays
        Candidate directions the complete variant left out of ``Z``.
    """

    def __init__(self, b, drop_tol=1e-10, reorth=True, counter=None):
        b = as_complex_vector(b)
        self.n = b.shape[0]
        self.beta = float(np.linalg.norm(b))
        if self.beta == 0.0:
            raise ValueError("right-hand side is zero")
        self.drop_tol = drop_tol
        self.reorth = reorth
        self.counter = counter if counter is not None else OpCounter()
        cap = 16
        self._V = np.zeros((self.n, cap), dtype=np.complex128)
        self._Z = np.zeros((self.n, cap), dtype=np.complex128)
        self._H = np.zeros((cap, cap), dtype=np.complex128)
        self._tau = np.zeros(cap, dtype=np.complex128)
        self._src = np.zeros(cap, dtype=np.intp)
        self._V[:, 0] = b / self.beta
        self.nv = 1
        self.nz = 0
        self.m = 0
        self.v_blocks = [(0, 1)]
        self.z_blocks = []
        self.breakdown = False
        self.deflated = []
        self.discarded = []

    # -- views --------------------------------------------------------
    @property
    def V(self):
        return self._V[:, : self.nv]

    @property
    def Z(self):
        return self._Z[:, : self.nz]

    @property
    def Hbar(self):
        """Coefficients with ``M Z = V Hbar``; shape ``(nv, nz)``."""
        return self._H[: self.nv, : self.nz]

    @property
    def taus(self):
        """Diagonal of ``T``: the shift that produced each column of ``Z``."""
        return self._tau[: self.nz]

    @property
    def sources(self):
        """Row of ``E`` holding the 1 for each column of ``Z``."""
        return self._src[: self.nz]

    def selection_matrix(self):
        """Sparse 0/1 matrix ``E`` with ``K Z + M Z T = V E``."""
        return sp.csr_matrix(
            (np.ones(self.nz), (self.sources, np.arange(self.nz))), shape=(self.nv, self.nz)
        )

    def shift_diagonal(self):
        return np.diag(self.taus)

    def V_block(self, k):
        a, b = self.v_blocks[k]
        return self._V[:, a:b]

    # -- storage ------------------------------------------------------
    def _reserve(self, nv, nz):
        cv, cz = self._V.shape[1], self._Z.shape[1]
        if nv > cv:
            new = max(nv, 2 * cv)
            V = np.zeros((self.n, new), dtype=np.complex128)
            V[:, :cv] = self._V
            self._V = V
        if nz > cz:
            new = max(nz, 2 * cz)
            Z = np.zeros((self.n, new), dtype=np.complex128)
            Z[:, :cz] = self._Z
            self._Z = Z
            tau = np.zeros(new, dtype=np.complex128)
            tau[:cz] = self._tau
            self._tau = tau
            src = np.zeros(new, dtype=np.intp)
            src[:cz] = self._src
            self._src = src
        rows = max(self._H.shape[0], self._V.shape[1])
        cols = max(self._H.shape[1], self._Z.shape[1])
        if (rows, cols) != self._H.shape:
            H = np.zeros((rows, cols), dtype=np.complex128)
            H[: self._H.shape[0], : self._H.shape[1]] = self._H
            self._H = H

    def append(self, Znew, taus, sources, M=None, drop_tol=None):
        """Orthogonalize ``M @ Znew`` against ``V`` and append the results.

        This is the shared tail of every expansion step: block Gram-Schmidt
        against each existing ``V`` block, optional second pass, then a thin
        QR of what is left.
        """
        Znew = np.asarray(Znew, dtype=np.complex128)
        if Znew.ndim == 1:
            Znew = Znew[:, None]
        p = Znew.shape[1]
        W = Znew.copy() if M is None else np.asarray(M @ Znew, dtype=np.complex128)
        if W.ndim == 1:
            W = W[:, None]
        ref = np.linalg.norm(W, axis=0)
        coef = np.zeros((self.nv + p, p), dtype=np.complex128)
        for sweep in range(2 if self.reorth else 1):
            for a, b in self.v_blocks:
                Vj = self._V[:, a:b]
                Hj = Vj.conj().T @ W
                self.counter.inner_products += Hj.size
                W -= Vj @ Hj
                coef[a:b] += Hj
        try:
            tol = self.drop_tol if drop_tol is None else drop_tol
            Q, R, kept = thin_qr(W, tol, ref_norms=ref, reorth=self.reorth, counter=self.counter)
        except BreakdownError:
            Q, R, kept = np.zeros((self.n, 0), dtype=np.complex128), np.zeros((0, p), dtype=np.complex128), []
        r = len(kept)
        coef = coef[: self.nv + r]
        coef[self.nv :] = R

        # A deflated direction that is already in span(Z) only adds an
        # inconsistent near-duplicate column to the projected problem; drop it.
        # One that is new (invariant subspace reached) must stay.
        cols = list(kept)
        for i in range(p):
            if i in kept:
                continue
            self.deflated.append((self.m + 1, i))
            if not self._redundant(Znew[:, i], Znew[:, kept]):
                cols.append(i)
        cols.sort()
        q = len(cols)
        taus = np.broadcast_to(np.asarray(taus, dtype=np.complex128), (p,))
        sources = np.broadcast_to(np.asarray(sources, dtype=np.intp), (p,))

        self._reserve(self.nv + r, self.nz + q)
        z0 = self.nz
        self._Z[:, z0 : z0 + q] = Znew[:, cols]
        self._tau[z0 : z0 + q] = taus[cols]
        self._src[z0 : z0 + q] = sources[cols]
        self._H[: self.nv + r, z0 : z0 + q] = coef[:, cols]
        if r:
            self._V[:, self.nv : self.nv + r] = Q
            self.v_blocks.append((self.nv, self.nv + r))
        self.z_blocks.append((z0, z0 + q))
        self.nv += r
        self.nz += q
        self.m += 1
        if r == 0:
            self.breakdown = True
        return kept

    def _redundant(self, z, extra, tol=1e-8):
        C = np.hstack([self.Z, extra]) if extra.size else self.Z
        nz = np.linalg.norm(z)
        if C.shape[1] == 0 or nz == 0.0:
            return nz == 0.0
        y = np.linalg.lstsq(C, z, rcond=None)[0]
        return np.linalg.norm(z - C @ y) <= tol * nz


def _check_expandable(state):
    if state.breakdown:
        raise BreakdownError("the Krylov space is exhausted; no basis vector to expand")


def expand_selective(state, P, M=None):
    """One selective iteration: apply every preconditioner to the newest basis vector."""
    _check_expandable(state)
    src = state.nv - 1
    Znew = P.apply_block(state.V[:, src])
    state.append(Znew, P.taus, np.full(P.n_p, src), M)
    return state


def expand_flexible(state, P, j, M=None):
    """One flexible iteration: apply preconditioner ``j`` only."""
    _check_expandable(state)
    src = state.nv - 1
    z = P.apply(j, state.V[:, src])
    state.append(z[:, None], [P[j].tau], [src], M)
    return state


def expand_complete(state, P, M=None, cap=COMPLETE_COLUMN_CAP, drop_tol=COMPLETE_DROP_TOL):
    """One complete iteration: apply every preconditioner to every column of the newest ``V`` block.

    Most of the ``n_p * |V^{(k)}|`` candidate directions lie in the span of
    the current ``Z`` up to rounding that the solves amplify. Keeping them
    pollutes the projected problem, so the candidates are projected against
    ``V`` and a column-pivoted QR keeps those whose pivot exceeds
    ``drop_tol`` times the largest candidate norm. The rest are discarded
    and logged in ``state.deflated``. Kept columns stay in
    preconditioner-major order.
    """
    _check_expandable(state)
    a, b = state.v_blocks[-1]
    ncols = P.n_p * (b - a)
    if ncols > cap:
        raise ValueError(f"complete expansion would add {ncols} columns (cap {cap})")
    blocks, taus, src = [], [], []
    for j in range(P.n_p):
        for c in range(a, b):
            blocks.append(P.apply(j, state.V[:, c]))
            taus.append(P[j].tau)
            src.append(c)
    Znew = np.column_stack(blocks)
    if ncols > P.n_p:
        W = Znew if M is None else np.asarray(M @ Znew, dtype=np.complex128)
        ref = np.linalg.norm(W, axis=0).max()
        V = state.V
        for _ in range(2):
            W = W - V @ (V.conj().T @ W)
        _, R, piv = scipy.linalg.qr(W, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        rank = int(np.count_nonzero(diag > drop_tol * ref))
        sel = np.sort(piv[: max(1, rank)])
        drop = piv[max(1, rank):]
        state.deflated.extend((state.m + 1, int(i)) for i in drop)
        state.discarded.append(Znew[:, np.sort(drop)])
        Znew = Znew[:, sel]
        taus = [taus[i] for i in sel]
        src = [src[i] for i in sel]
    state.append(Znew, taus, src, M, drop_tol=drop_tol)
    return state


def assemble_projected(state, sigma):
    """Per-shift projected matrix ``E + Hbar (sigma I - T)``, shape ``(nv, nz)``."""
    Hs = state.Hbar * (sigma - state.taus)[None, :]
    Hs[state.sources, np.arange(state.nz)] += 1.0
    return Hs
