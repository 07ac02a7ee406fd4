import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from shifted_krylov.core import (
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


def test_spmv_identity(rng):
    v = rng.standard_normal(7) + 1j * rng.standard_normal(7)
    assert_array_equal(spmv(sp.identity(7, format="csr"), v), v)


def test_spmv_diagonal():
    assert_array_equal(spmv(sp.diags([2.0, 3.0]).tocsr(), np.array([1.0, 1.0])), [2.0, 3.0])


def _triple_loop(A, v):
    n, m = A.shape
    out = np.zeros(n, dtype=complex)
    for i in range(n):
        s = 0j
        for j in range(m):
            s += A[i, j] * v[j]
        out[i] = s
    return out


@pytest.mark.parametrize("n", [1, 13, 100])
def test_spmv_matches_dense_oracle(rng, n):
    A = sp.random(n, n, density=0.2, random_state=np.random.RandomState(n), format="csr")
    A = A + 1j * sp.random(n, n, density=0.2, random_state=np.random.RandomState(n + 1), format="csr")
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    ref = _triple_loop(A.toarray(), v)
    assert np.linalg.norm(spmv(A, v) - ref) <= 1e-14 * max(np.linalg.norm(ref), 1e-300)


def test_spmv_dimension_mismatch():
    with pytest.raises(DimensionError):
        spmv(sp.identity(3, format="csr"), np.ones(4))


def test_spmv_leaves_matrix_unmodified(rng):
    A = sp.random(20, 20, density=0.3, format="csr", random_state=np.random.RandomState(0))
    before = A.copy()
    spmv(A, rng.standard_normal(20))
    assert (A != before).nnz == 0


# -- thin QR ---------------------------------------------------------------


def test_thin_qr_orthonormal_input(rng):
    W, _ = np.linalg.qr(rng.standard_normal((30, 4)))
    Q, R, kept = thin_qr(W)
    assert kept == [0, 1, 2, 3]
    assert_allclose(np.abs(R), np.eye(4), atol=1e-14)
    assert_allclose(np.abs(np.sum(Q.conj() * W, axis=0)), np.ones(4), atol=1e-14)


def test_thin_qr_single_column(rng):
    v = rng.standard_normal(10) + 1j * rng.standard_normal(10)
    Q, R, kept = thin_qr(v[:, None])
    assert_allclose(Q[:, 0], v / np.linalg.norm(v), atol=1e-15)
    assert_allclose(R, [[np.linalg.norm(v)]])


def test_thin_qr_exact_dependence(rng):
    v = rng.standard_normal(12)
    Q, R, kept = thin_qr(np.column_stack([v, 2 * v]))
    assert kept == [0]
    assert Q.shape == (12, 1)


def test_thin_qr_all_deflated():
    with pytest.raises(BreakdownError):
        thin_qr(np.zeros((5, 2)))


def test_thin_qr_wide_block(rng):
    W = rng.standard_normal((2, 3))
    Q, R, kept = thin_qr(W)
    assert kept == [0, 1]
    assert_allclose(Q @ R, W, atol=1e-14)


def test_thin_qr_counts_inner_products(rng):
    c = OpCounter()
    thin_qr(rng.standard_normal((20, 3)), reorth=False, counter=c)
    # projections 0 + 1 + 2, plus one norm per column
    assert c.inner_products == 6


@st.composite
def blocks(draw):
    n = draw(st.integers(4, 40))
    p = draw(st.integers(1, min(n, 8)))
    seed = draw(st.integers(0, 2**32 - 1))
    rank = draw(st.integers(1, p))
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    W = W @ (rng.standard_normal((rank, p)) + 1j * rng.standard_normal((rank, p)))
    scale = 10.0 ** draw(st.integers(-6, 6))
    return scale * W


@settings(max_examples=200, deadline=None)
@given(blocks())
def test_thin_qr_invariants(W):
    Q, R, kept = thin_qr(W, drop_tol=1e-10)
    r = len(kept)
    assert np.linalg.norm(Q.conj().T @ Q - np.eye(r)) <= 1e-12 * np.sqrt(r)
    assert np.linalg.norm(Q @ R[:, kept] - W[:, kept]) <= 1e-12 * np.linalg.norm(W)
    assert np.allclose(np.tril(R[:, kept], -1), 0)


# -- LU ----------------------------------------------------------------------


def test_lu_identity(rng):
    b = rng.standard_normal(6)
    assert_allclose(lu_solve(lu_factor(np.eye(6)), b), b)


@pytest.mark.parametrize("sparse", [False, True])
def test_lu_diagonal(sparse):
    A = sp.diags([2.0, 3.0]).tocsc() if sparse else np.diag([2.0, 3.0])
    assert_allclose(lu_solve(lu_factor(A), np.array([2.0, 3.0])), [1.0, 1.0])


@pytest.mark.parametrize("sparse", [False, True])
def test_lu_backward_error(rng, sparse):
    n = 50
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)) + 10 * np.eye(n)
    b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    F = lu_factor(sp.csc_matrix(A) if sparse else A)
    x = lu_solve(F, b)
    assert np.linalg.norm(A @ x - b) <= 1e-12 * np.linalg.norm(A, 2) * np.linalg.norm(x)


@pytest.mark.parametrize("sparse", [False, True])
def test_lu_singular(sparse):
    A = np.array([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(SingularMatrixError):
        lu_factor(sp.csc_matrix(A) if sparse else A)


def test_lu_solve_dimension():
    with pytest.raises(DimensionError):
        lu_solve(lu_factor(np.eye(3)), np.ones(2))


# -- small generalized eigenproblem -------------------------------------------


def test_gen_eig_scaled_identity():
    lam, omitted = small_gen_eig(2 * np.eye(4), np.eye(4))
    assert omitted == 0
    assert_allclose(lam, 2.0)


def test_gen_eig_diagonal_pair():
    a = np.array([1.0, -3.0, 5.0])
    b = np.array([2.0, 1.0, 4.0])
    lam, _ = small_gen_eig(np.diag(a), np.diag(b))
    assert_allclose(np.sort(lam.real), np.sort(a / b))


def test_gen_eig_matches_inverse_oracle(rng):
    n = 12
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    B = rng.standard_normal((n, n)) + 5 * np.eye(n)
    lam, _, vecs = small_gen_eig(A, B, return_vectors=True)
    ref = np.linalg.eigvals(np.linalg.solve(B, A))
    assert abs(np.abs(lam).max() - np.abs(ref).max()) <= 1e-8 * np.abs(ref).max()
    for k in range(lam.size):
        z = vecs[:, k]
        res = np.linalg.norm(A @ z - lam[k] * B @ z)
        assert res <= 1e-8 * (np.linalg.norm(A) + abs(lam[k]) * np.linalg.norm(B)) * np.linalg.norm(z)


def test_gen_eig_infinite_omitted():
    lam, omitted = small_gen_eig(np.diag([1.0, 2.0]), np.diag([1.0, 0.0]))
    assert omitted == 1
    assert_allclose(lam, [1.0])


def test_gen_eig_degenerate():
    with pytest.raises(DegeneratePencilError):
        small_gen_eig(np.diag([1.0, 0.0]), np.diag([1.0, 0.0]))
