"""Test problems: a 2-D phasor groundwater operator, shift grids and Matrix Market I/O."""
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "MatrixMarketError",
    "PhasorProblem",
    "REFERENCE_MATRICES",
    "TauGrid",
    "gen_phasor_2d",
    "gen_tau_grid",
    "linear_shifts",
    "load_matrix_market",
    "load_reference_matrix",
    "reference_data_dirs",
    "synthetic_spd",
    "aquifer_problem",
    "write_matrix_market",
]

# condition numbers of the reference SPD matrices
REFERENCE_MATRICES = {
    "plbuckle": {"n": 1282, "cond": 1.28e6},
    "nasa1824": {"n": 1824, "cond": 1.89e6},
    "1138_bus": {"n": 1138, "cond": 8.57e6},
}

OMEGA_RANGE = (2 * np.pi / 600, 2 * np.pi / 3)


class MatrixMarketError(ValueError):
    """Unreadable or unsupported Matrix Market file."""


@dataclass
class PhasorProblem:
    """``(K + i omega_k M) x = b`` for every frequency in `omegas`."""

    K: sp.csr_matrix
    M: sp.csr_matrix
    b: np.ndarray
    omegas: np.ndarray
    shape: tuple = None

    @property
    def sigmas(self):
        return 1j * np.asarray(self.omegas, dtype=float)

    @property
    def n(self):
        return self.K.shape[0]


@dataclass
class TauGrid:
    taus: np.ndarray
    omega_range: tuple


def gen_phasor_2d(nx, ny, cond_field, Ss, source_index=None, omegas=(), length=(1.0, 1.0)):
    """Five-point finite-difference phasor operator on a rectangle.

    Discretizes ``-div(k grad phi) + i omega Ss phi = q`` on ``nx * ny``
    interior nodes of a uniform grid with homogeneous Dirichlet values on
    the boundary nodes. Rows are scaled by the cell area ``hx * hy`` so that
    ``K`` is symmetric positive definite and ``M = diag(Ss hx hy)``.

    Parameters
    ----------
    nx, ny : int
        Interior nodes per direction (at least 3).
    cond_field : float or array of length ``nx * ny``
        Nodal conductivity, x-fastest ordering. Face values are harmonic
        means of the two adjacent nodes; faces touching the boundary use
        the interior node's value.
    Ss : float or array of length ``nx * ny``
        Specific storage.
    source_index : int, optional
        Node carrying the unit point source; defaults to the center node.
    omegas : sequence of float
    length : (Lx, Ly)

    Returns
    -------
    PhasorProblem
    """
    if nx < 3 or ny < 3:
        raise ValueError("need at least 3 interior nodes per direction")
    n = nx * ny
    k = np.broadcast_to(np.asarray(cond_field, dtype=float), (n,)).reshape(ny, nx)
    if np.any(~np.isfinite(k)) or np.any(k <= 0):
        raise ValueError("conductivity must be positive and finite")
    ss = np.broadcast_to(np.asarray(Ss, dtype=float), (n,))
    if np.any(ss <= 0):
        raise ValueError("specific storage must be positive")
    hx = length[0] / (nx + 1)
    hy = length[1] / (ny + 1)
    cx = hy / hx
    cy = hx / hy

    def hmean(a, b):
        return 2 * a * b / (a + b)

    # face transmissibilities; edges of the array are boundary faces
    tx = np.empty((ny, nx + 1))
    tx[:, 1:-1] = hmean(k[:, :-1], k[:, 1:])
    tx[:, 0] = k[:, 0]
    tx[:, -1] = k[:, -1]
    ty = np.empty((ny + 1, nx))
    ty[1:-1, :] = hmean(k[:-1, :], k[1:, :])
    ty[0, :] = k[0, :]
    ty[-1, :] = k[-1, :]
    tx *= cx
    ty *= cy

    idx = np.arange(n).reshape(ny, nx)
    diag = (tx[:, :-1] + tx[:, 1:] + ty[:-1, :] + ty[1:, :]).ravel()
    rows = [idx.ravel()]
    cols = [idx.ravel()]
    vals = [diag]
    for a, b_, t in (
        (idx[:, :-1], idx[:, 1:], tx[:, 1:-1]),
        (idx[:-1, :], idx[1:, :], ty[1:-1, :]),
    ):
        rows += [a.ravel(), b_.ravel()]
        cols += [b_.ravel(), a.ravel()]
        vals += [-t.ravel(), -t.ravel()]
    K = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    K.sum_duplicates()
    K.sort_indices()
    M = sp.diags(ss * hx * hy, format="csr")
    if source_index is None:
        source_index = int(idx[ny // 2, nx // 2])
    if not 0 <= source_index < n:
        raise IndexError(f"source_index {source_index} outside 0..{n - 1}")
    b = np.zeros(n)
    b[source_index] = 1.0
    return PhasorProblem(K, M, b, np.asarray(omegas, dtype=float), (ny, nx))


def gen_tau_grid(omega_lo, omega_hi, n_p):
    """Imaginary preconditioner shifts ``i omega`` evenly spaced in log scale.

    One preconditioner sits at the logarithmic midpoint.
    """
    if not (0 < omega_lo < omega_hi) or not np.isfinite(omega_hi):
        raise ValueError(f"need 0 < omega_lo < omega_hi, got ({omega_lo}, {omega_hi})")
    if n_p < 1:
        raise ValueError("n_p must be at least 1")
    if n_p == 1:
        w = np.array([np.sqrt(omega_lo * omega_hi)])
    else:
        w = np.exp(np.linspace(np.log(omega_lo), np.log(omega_hi), n_p))
        w[0], w[-1] = omega_lo, omega_hi
    return TauGrid(1j * w, (omega_lo, omega_hi))


def linear_shifts(lo, hi, count, imaginary=True):
    """``count`` shifts evenly spaced in ``[lo, hi]``, times ``i`` if `imaginary`."""
    s = np.linspace(lo, hi, int(count))
    return 1j * s if imaginary else s.astype(np.complex128)


def aquifer_problem(nx=50, ny=50, nshift=50, seed=0, mean_logk=-11.52, var_logk=2.79, log_ss=-11.52,
                   length=500.0):
    """Square aquifer with independent log-normal nodal conductivity.

    Defaults give ``n = 2500`` unknowns and 50 frequencies evenly spaced in
    ``[2 pi / 600, 2 pi / 3]``.
    """
    rng = np.random.default_rng(seed)
    logk = mean_logk + np.sqrt(var_logk) * rng.standard_normal(nx * ny)
    omegas = np.linspace(*OMEGA_RANGE, nshift)
    return gen_phasor_2d(nx, ny, np.exp(logk), np.exp(log_ss), None, omegas, (length, length))


# -- Matrix Market -------------------------------------------------------------


def load_matrix_market(path):
    """Read a coordinate-format Matrix Market file as CSR.

    Symmetric, skew-symmetric and Hermitian storage is expanded and
    duplicate entries are summed. Pattern matrices get unit values.

    Raises
    ------
    MatrixMarketError
        For a malformed header, out-of-range indices or array format.
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such file: {path}")
    try:
        info = scipy.io.mminfo(path)
    except (ValueError, IndexError) as exc:
        raise MatrixMarketError(f"{path}: bad Matrix Market header ({exc})") from exc
    if info[3] != "coordinate":
        raise MatrixMarketError(f"{path}: only coordinate format is supported, got {info[3]!r}")
    try:
        A = scipy.io.mmread(path)
    except (ValueError, IndexError) as exc:
        raise MatrixMarketError(f"{path}: {exc}") from exc
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.sort_indices()
    return A


def write_matrix_market(path, A, symmetry=None, comment=""):
    """Write a sparse matrix in coordinate format with round-trip precision."""
    A = sp.coo_matrix(A)
    scipy.io.mmwrite(os.fspath(path), A, comment=comment, field=None, precision=17, symmetry=symmetry)


def reference_data_dirs():
    """Directories searched for reference matrices, in order."""
    dirs = []
    env = os.environ.get("SHIFTED_KRYLOV_DATA")
    if env:
        dirs += [Path(p) for p in env.split(os.pathsep) if p]
    dirs += [Path.cwd() / "data", Path(__file__).resolve().parents[2] / "data"]
    return dirs


def load_reference_matrix(name, data_dir=None):
    """Load one of the reference SPD matrices by name from a local ``.mtx`` file.

    Looks for ``<name>.mtx`` (also inside a ``<name>/`` subdirectory) in
    `data_dir` or :func:`reference_data_dirs`.

    Raises
    ------
    FileNotFoundError
        If no copy is found.
    """
    if name not in REFERENCE_MATRICES:
        raise KeyError(f"unknown reference matrix {name!r}")
    dirs = [Path(data_dir)] if data_dir is not None else reference_data_dirs()
    for d in dirs:
        for cand in (d / f"{name}.mtx", d / name / f"{name}.mtx"):
            if cand.is_file():
                return load_matrix_market(cand)
    raise FileNotFoundError(
        f"{name}.mtx not found in {[str(d) for d in dirs]}; set SHIFTED_KRYLOV_DATA"
    )


def synthetic_spd(n, cond, seed=0, degree=4):
    """Sparse SPD matrix with prescribed 2-norm condition number.

    A weighted graph Laplacian (ring plus random chords, log-uniform weights)
    shifted by ``delta I`` with ``delta = lambda_max(L) / (cond - 1)``, so that
    ``cond(L + delta I) = cond`` exactly in exact arithmetic.
    """
    rng = np.random.default_rng(seed)
    i = np.arange(n)
    src = [i]
    dst = [(i + 1) % n]
    extra = (degree - 2) * n // 2
    a = rng.integers(0, n, extra)
    b = rng.integers(0, n, extra)
    keep = a != b
    src.append(a[keep])
    dst.append(b[keep])
    src = np.concatenate(src)
    dst = np.concatenate(dst)
    w = np.exp(rng.uniform(np.log(1e-2), np.log(1e2), src.size))
    W = sp.coo_matrix((w, (src, dst)), shape=(n, n))
    W = (W + W.T).tocsr()
    L = sp.diags(np.asarray(W.sum(axis=1)).ravel()) - W
    if n <= 400:
        lmax = float(np.linalg.eigvalsh(L.toarray())[-1])
    else:
        lmax = float(spla.eigsh(L, k=1, which="LA", tol=1e-10, return_eigenvectors=False,
                                v0=rng.standard_normal(n))[0])
    delta = lmax / (cond - 1)
    A = (L + delta * sp.identity(n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A
