"""Dense and sparse kernels shared by the solvers.

Everything is complex128. Real inputs are promoted on entry so that the
solvers only ever see one scalar type.
"""
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "BreakdownError",
    "DegeneratePencilError",
    "DimensionError",
    "LuFactorization",
    "OpCounter",
    "SingularMatrixError",
    "as_complex_csr",
    "as_complex_vector",
    "lu_factor",
    "lu_solve",
    "small_gen_eig",
    "spmv",
    "thin_qr",
]

DENSE_LU_LIMIT = 4000


class DimensionError(ValueError):
    """Operand shapes do not conform."""


class SingularMatrixError(ArithmeticError):
    """A factorization met a pivot that is zero to working accuracy."""


class BreakdownError(ArithmeticError):
    """Every column of a block was numerically dependent."""


class DegeneratePencilError(ArithmeticError):
    """Both matrices of a pencil share a numerical null space."""


@dataclass
class OpCounter:
    """Tally of the expensive operations performed by a solve."""

    precond_solves: int = 0
    inner_products: int = 0

    def reset(self):
        self.precond_solves = 0
        self.inner_products = 0


def as_complex_csr(A):
    """Return `A` as a complex CSR matrix with sorted, summed indices."""
    if sp.issparse(A):
        A = sp.csr_matrix(A, dtype=np.complex128)
    else:
        A = sp.csr_matrix(np.asarray(A, dtype=np.complex128))
    A.sum_duplicates()
    A.sort_indices()
    return A


def as_complex_vector(v, n=None):
    v = np.asarray(v, dtype=np.complex128).reshape(-1)
    if n is not None and v.shape[0] != n:
        raise DimensionError(f"vector has length {v.shape[0]}, expected {n}")
    return v


def spmv(A, v):
    """Sparse matrix-vector product ``A @ v`` with a shape check."""
    v = np.asarray(v)
    if A.shape[1] != v.shape[0]:
        raise DimensionError(f"cannot multiply {A.shape} matrix by length-{v.shape[0]} vector")
    return A @ v


def thin_qr(W, drop_tol=1e-10, ref_norms=None, reorth=True, counter=None):
    """Thin QR of a tall block by modified Gram-Schmidt with column dropping.

    Parameters
    ----------
    W : (n, p) array
    drop_tol : float
        A column is deflated when its remaining norm falls to
        ``drop_tol * ref`` or below.
    ref_norms : float or (p,) array, optional
        Reference scale per column. Defaults to the Frobenius norm of `W`.
    reorth : bool
        Run a second Gram-Schmidt sweep against the kept columns.
    counter : OpCounter, optional
        Receives one inner product per projection and one per norm.

    Returns
    -------
    Q : (n, r) array
        Orthonormal columns, one per kept column of `W`.
    R : (r, p) array
        Coefficients with ``Q @ R[:, kept] == W[:, kept]``; ``R[:, kept]``
        is upper triangular. Deflated columns keep their projections.
    kept : list of int
        Indices of the columns of `W` that produced a column of `Q`.

    Raises
    ------
    BreakdownError
        If every column is deflated.
    """
    W = np.array(W, dtype=np.complex128, copy=True)
    if W.ndim == 1:
        W = W[:, None]
    n, p = W.shape
    if ref_norms is None:
        ref_norms = np.full(p, np.linalg.norm(W))
    else:
        ref_norms = np.broadcast_to(np.asarray(ref_norms, dtype=float), (p,))

    Q = np.empty((n, min(n, p)), dtype=np.complex128)
    R = np.zeros((min(n, p), p), dtype=np.complex128)
    kept = []
    for i in range(p):
        w = W[:, i]
        for sweep in range(2 if reorth else 1):
            for r, j in enumerate(kept):
                c = np.vdot(Q[:, r], w)
                if counter is not None:
                    counter.inner_products += 1
                R[r, i] += c
                w -= c * Q[:, r]
        nrm = np.sqrt(np.vdot(w, w).real)
        if counter is not None:
            counter.inner_products += 1
        if nrm <= drop_tol * ref_norms[i] or nrm == 0.0 or len(kept) == n:
            continue
        r = len(kept)
        Q[:, r] = w / nrm
        R[r, i] = nrm
        kept.append(i)
    if not kept:
        raise BreakdownError("all columns of the block were deflated")
    r = len(kept)
    return Q[:, :r], R[:r, :], kept


class LuFactorization:
    """Row-pivoted LU of a square matrix, sparse (SuperLU) or dense (LAPACK).

    Use :func:`lu_factor` to build one. The object is immutable after
    construction and may be shared between threads.
    """

    def __init__(self, shape, solve, lower, upper, perm):
        self.shape = shape
        self._solve = solve
        self.lower = lower
        self.upper = upper
        self.perm = perm

    def solve(self, b):
        return self._solve(b)


def lu_factor(A, pivot_tol=1e-14):
    """Factor a square matrix.

    Sparse input goes to SuperLU with a COLAMD column ordering; dense input
    (or sparse with ``n <= DENSE_LU_LIMIT`` given as an ndarray) uses LAPACK
    ``getrf``.

    Raises
    ------
    SingularMatrixError
        When a pivot is below ``pivot_tol`` times the largest pivot.
    """
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"LU needs a square matrix, got {A.shape}")
    n = A.shape[0]
    if sp.issparse(A):
        A = sp.csc_matrix(A, dtype=np.complex128)
        try:
            lu = spla.splu(A, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SingularMatrixError(str(exc)) from exc
        piv = np.abs(lu.U.diagonal())
        if n and piv.min() <= pivot_tol * piv.max():
            raise SingularMatrixError(f"pivot ratio {piv.min() / piv.max():.2e} below tolerance")
        return LuFactorization((n, n), lu.solve, lu.L, lu.U, (lu.perm_r, lu.perm_c))

    A = np.asarray(A, dtype=np.complex128)
    with warnings.catch_warnings():
        # an exactly zero pivot is reported below as SingularMatrixError
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv_idx = scipy.linalg.lu_factor(A, check_finite=True)
    piv = np.abs(np.diag(lu))
    if n and piv.min() <= pivot_tol * piv.max():
        raise SingularMatrixError(f"pivot ratio {piv.min() / max(piv.max(), 1e-300):.2e} below tolerance")

    def solve(b, _f=(lu, piv_idx)):
        return scipy.linalg.lu_solve(_f, b)

    return LuFactorization((n, n), solve, np.tril(lu, -1) + np.eye(n), np.triu(lu), piv_idx)


def lu_solve(F, b):
    """Solve with a :class:`LuFactorization`."""
    b = np.asarray(b, dtype=np.complex128)
    if b.shape[0] != F.shape[0]:
        raise DimensionError(f"rhs has length {b.shape[0]}, factor is {F.shape}")
    return F.solve(b)


def small_gen_eig(Asmall, Bsmall, tol=1e-12, return_vectors=False):
    """Finite eigenvalues of the pencil ``Asmall - lambda * Bsmall``.

    Pairs with ``|beta| <= tol * ||B||`` (infinite eigenvalues) are dropped.

    Returns
    -------
    lam : array
        Finite eigenvalues.
    n_omitted : int
        Number of infinite eigenvalues dropped.
    vecs : array, only if `return_vectors`
        Right eigenvectors matching `lam`, one per column.

    Raises
    ------
    DegeneratePencilError
        If some pair has both ``alpha`` and ``beta`` negligible, i.e. the
        pencil is singular.
    """
    Asmall = np.asarray(Asmall, dtype=np.complex128)
    Bsmall = np.asarray(Bsmall, dtype=np.complex128)
    if Asmall.shape != Bsmall.shape or Asmall.shape[0] != Asmall.shape[1]:
        raise DimensionError(f"pencil needs equal square matrices, got {Asmall.shape}, {Bsmall.shape}")
    na = np.linalg.norm(Asmall)
    nb = np.linalg.norm(Bsmall)
    out = scipy.linalg.eig(Asmall, Bsmall, right=return_vectors, homogeneous_eigvals=True)
    if return_vectors:
        (alpha, beta), vecs = out
    else:
        alpha, beta = out
    if np.any((np.abs(alpha) <= tol * max(na, 1e-300)) & (np.abs(beta) <= tol * max(nb, 1e-300))):
        raise DegeneratePencilError("pencil is singular")
    finite = np.abs(beta) > tol * nb
    lam = alpha[finite] / beta[finite]
    n_omitted = int(np.count_nonzero(~finite))
    if return_vectors:
        return lam, n_omitted, vecs[:, finite]
    return lam, n_omitted
