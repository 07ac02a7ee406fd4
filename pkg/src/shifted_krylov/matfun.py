"""Matrix functions ``f(A) b`` by trapezoidal quadrature of the Cauchy integral.

``f(A) b ~ sum_j w_j (z_j I - A)^{-1} b``. The resolvent solves form one
shifted family ``(A + sigma_j I) x = b`` with ``sigma_j = -z_j``, so the
whole sum costs one shifted-solver run.

Two contours are available:

``"circle-trapezoid"``
    A circle around the spectral interval. Simple, but the convergence
    factor tends to one as the condition number grows, so it is only
    practical for ``M/m`` up to a few hundred.
``"hale-higham-1"``
    The conformal map of the doubly connected region outside
    ``(-inf, 0] U [m, M]`` onto an annulus, with the trapezoid rule on the
    annulus. Nodes come from Jacobi elliptic functions at complex argument;
    convergence degrades only like ``log(M/m)``.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import special

from .core import as_complex_csr, as_complex_vector
from .solvers import ShiftedProblem, SolverConfig, solve

__all__ = [
    "FUNCTIONS",
    "MatfunConvergenceError",
    "QuadratureRule",
    "RULE_KINDS",
    "SpectrumBounds",
    "build_circle_rule",
    "build_conformal_rule",
    "build_rule",
    "default_taus",
    "estimate_spectrum_bounds",
    "eval_matfun",
    "jacobi_sn_cn_dn",
    "literal_n_formula",
    "select_N_adaptive",
    "solved_nodes",
]

FUNCTIONS = {
    "exp-neg": lambda z: np.exp(-z),
    "log": np.log,
    "sqrt": np.sqrt,
}
BRANCH_CUT = {"log", "sqrt"}
RULE_KINDS = ("circle-trapezoid", "hale-higham-1")
N_CAP = 4096
# exp(-x) relative to exp(-m) is below 2e-22 past m + EXP_WINDOW
EXP_WINDOW = 50.0


class MatfunConvergenceError(RuntimeError):
    """Quadrature or shifted solve failed to reach its tolerance.

    Attributes
    ----------
    node_indices : list of int
        Rule nodes whose shifted systems did not converge (empty for a
        quadrature failure).
    report : SolveReport or None
    """

    def __init__(self, msg, node_indices=(), report=None):
        super().__init__(msg)
        self.node_indices = list(node_indices)
        self.report = report


@dataclass(frozen=True)
class SpectrumBounds:
    m_hat: float
    M_hat: float

    def __post_init__(self):
        if not (0 < self.m_hat <= self.M_hat):
            raise ValueError(f"need 0 < m_hat <= M_hat, got ({self.m_hat}, {self.M_hat})")

    @property
    def ratio(self):
        return self.M_hat / self.m_hat


@dataclass
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    N: int
    kind: str

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=np.complex128)
        self.weights = np.asarray(self.weights, dtype=np.complex128)
        if self.nodes.shape != (self.N,) or self.weights.shape != (self.N,):
            raise ValueError("nodes and weights must both have length N")

    def apply_diagonal(self, d, v=None):
        """``f_N(D) v`` for a diagonal ``D = diag(d)``; `v` defaults to ones."""
        d = np.asarray(d, dtype=np.complex128)
        v = np.ones_like(d) if v is None else np.asarray(v, dtype=np.complex128)
        return (self.weights[None, :] / (self.nodes[None, :] - d[:, None])).sum(axis=1) * v


def _resolve_f(f):
    if callable(f):
        return f, None
    if f not in FUNCTIONS:
        raise ValueError(f"unknown function {f!r}; expected one of {sorted(FUNCTIONS)}")
    return FUNCTIONS[f], f


# -- rules -------------------------------------------------------------------


def build_circle_rule(bounds, f, N):
    """Trapezoid rule on the circle through ``0.9 m_hat`` and ``M_hat + 0.1 m_hat``.

    Center ``c = (m_hat + M_hat) / 2``, radius ``rho = (M_hat - m_hat) / 2 +
    0.1 m_hat``; ``z_j = c + rho e^{2 pi i j / N}`` and
    ``w_j = f(z_j) rho e^{2 pi i j / N} / N``.
    """
    fn, name = _resolve_f(f)
    N = int(N)
    if N < 1:
        raise ValueError("N must be positive")
    c = 0.5 * (bounds.m_hat + bounds.M_hat)
    rho = 0.5 * (bounds.M_hat - bounds.m_hat) + 0.1 * bounds.m_hat
    if name in BRANCH_CUT and rho >= c:
        raise ValueError("circle would enclose the branch point 0")
    e = np.exp(2j * np.pi * np.arange(1, N + 1) / N)
    z = c + rho * e
    return QuadratureRule(z, fn(z) * rho * e / N, N, "circle-trapezoid")


def jacobi_sn_cn_dn(t, m):
    """Jacobi ``sn, cn, dn`` at complex argument `t` for real parameter ``0 <= m < 1``.

    Uses the addition formula on ``t = x + iy`` with real-argument values
    at parameter `m` (for `x`) and ``1 - m`` (for `y`).
    """
    t = np.asarray(t, dtype=np.complex128)
    s, c, d, _ = special.ellipj(t.real, m)
    s1, c1, d1, _ = special.ellipj(t.imag, 1.0 - m)
    delta = c1**2 + m * s**2 * s1**2
    sn = (s * d1 + 1j * c * d * s1 * c1) / delta
    cn = (c * c1 - 1j * s * d * s1 * d1) / delta
    dn = (d * c1 * d1 - 1j * m * s * c * s1) / delta
    return sn, cn, dn


def build_conformal_rule(bounds, f, N):
    """Trapezoid rule after conformally mapping the slit region to an annulus.

    With ``s = sqrt(M/m)`` and modulus ``k = (s - 1) / (s + 1)`` the nodes are
    ``z = sqrt(m M) (1/k + u) / (1/k - u)``, ``u = sn(t | k^2)``, for ``N``
    equispaced ``t`` on the line ``Im t = K'/2`` covering one real period
    ``4K``. Nodes come in conjugate pairs ``z_{N+1-j} = conj(z_j)``.

    For ``"exp-neg"`` the contour only encloses ``[m, min(M, m + EXP_WINDOW)]``.
    Eigenvalues outside a contour contribute nothing to the Cauchy integral,
    which matches ``exp(-lambda) ~ 0`` there, and a contour sized for the
    full interval would have to resolve ``exp(-z)`` oscillating over
    ``|Im z| ~ M``.
    """
    fn, name = _resolve_f(f)
    N = int(N)
    if N < 2 or N % 2:
        raise ValueError("conformal rule needs an even N >= 2")
    m_, M_ = bounds.m_hat, bounds.M_hat
    if name == "exp-neg":
        M_ = min(M_, m_ + EXP_WINDOW)
    if M_ / m_ < 1 + 1e-12:
        # degenerate interval: widen slightly so the map is defined
        M_ = m_ * (1 + 1e-6)
    s = np.sqrt(M_ / m_)
    k = (s - 1) / (s + 1)
    m_ell = k * k
    m1 = 4 * s / (s + 1) ** 2  # 1 - k^2 without cancellation
    K = special.ellipkm1(m1)
    Kp = special.ellipk(m1)
    h = 4 * K / N
    t = -K + (np.arange(1, N + 1) - 0.5) * h + 0.5j * Kp
    u, cn, dn = jacobi_sn_cn_dn(t, m_ell)
    g = np.sqrt(m_ * M_)
    z = g * (1 / k + u) / (1 / k - u)
    dzdt = g * (2 / k) * cn * dn / (1 / k - u) ** 2
    # the t-line traverses the contour clockwise
    w = -fn(z) * dzdt * h / (2j * np.pi)
    return QuadratureRule(z, w, N, "hale-higham-1")


def build_rule(bounds, f, N, kind="hale-higham-1"):
    if kind == "circle-trapezoid":
        return build_circle_rule(bounds, f, N)
    if kind == "hale-higham-1":
        return build_conformal_rule(bounds, f, N)
    raise ValueError(f"unknown rule kind {kind!r}; expected one of {RULE_KINDS}")


def _surrogate_spectrum(bounds, npts=32):
    return np.geomspace(bounds.m_hat, bounds.M_hat, npts)


def select_N_adaptive(bounds, f, eps=1e-6, kind="hale-higham-1", N0=16, cap=N_CAP):
    """Smallest ``N = N0 * 2^k`` whose doubling changes ``f_N(D) 1`` by ``<= eps`` relative.

    ``D`` is a diagonal surrogate with geometrically spaced entries spanning
    ``[m_hat, M_hat]``.

    Raises
    ------
    MatfunConvergenceError
        If no ``N <= cap`` passes.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    d = _surrogate_spectrum(bounds)
    N = int(N0)
    prev = build_rule(bounds, f, N, kind).apply_diagonal(d)
    while 2 * N <= cap:
        cur = build_rule(bounds, f, 2 * N, kind).apply_diagonal(d)
        if np.linalg.norm(cur - prev) <= eps * np.linalg.norm(prev):
            return N
        N *= 2
        prev = cur
    raise MatfunConvergenceError(
        f"{kind} rule did not reach eps={eps:g} with N <= {cap} (M/m = {bounds.ratio:.3g})"
    )


def literal_n_formula(bounds, eps, c1, c2):
    """``ceil((log(M/m) + c2) / (c1 pi^2 eps))``.

    Kept for reference only. With ``eps`` in the denominator it grows like
    ``1/eps`` rather than ``log(1/eps)``, and ``c1``, ``c2`` are method
    dependent with no published values, so :func:`select_N_adaptive` is
    used instead.
    """
    return int(np.ceil((np.log(bounds.ratio) + c2) / (c1 * np.pi**2 * eps)))


# -- spectrum ---------------------------------------------------------------


def estimate_spectrum_bounds(A, margin=0.05, tol=1e-8, seed=0):
    """Extreme eigenvalues of a symmetric positive definite `A`, widened by `margin`.

    The largest eigenvalue comes from Lanczos (ARPACK); the smallest from
    Lanczos in shift-and-invert mode about 0. Small matrices are handled
    densely.
    """
    n = A.shape[0]
    if n <= 200:
        Ad = A.toarray() if sp.issparse(A) else np.asarray(A)
        ev = np.linalg.eigvalsh(0.5 * (Ad + Ad.conj().T))
        lo, hi = float(ev[0]), float(ev[-1])
    else:
        A = sp.csc_matrix(A)
        v0 = np.random.default_rng(seed).standard_normal(n)
        hi = float(spla.eigsh(A, k=1, which="LA", tol=tol, v0=v0, return_eigenvectors=False)[0])
        lo = float(spla.eigsh(A, k=1, sigma=0.0, which="LM", tol=tol, v0=v0, return_eigenvectors=False)[0])
    if lo <= 0:
        raise ValueError(f"matrix is not positive definite (smallest eigenvalue {lo:.3e})")
    return SpectrumBounds((1 - margin) * lo, (1 + margin) * hi)


# -- evaluation ----------------------------------------------------------------


def solved_nodes(rule, fold=True):
    """Indices of the nodes to solve, and the multiplier applied to each term.

    With `fold`, only nodes with ``Im z >= 0`` are kept; the multiplier is 2
    for a node standing in for a conjugate pair and 1 for a real node.
    """
    z = rule.nodes
    if not fold:
        return np.arange(rule.N), None
    tol = 1e-12 * np.max(np.abs(z))
    upper = np.flatnonzero(z.imag > tol)
    real = np.flatnonzero(np.abs(z.imag) <= tol)
    lower = np.flatnonzero(z.imag < -tol)
    # conjugate pairing must be exact up to rounding
    if upper.size != lower.size:
        raise ValueError("rule nodes are not closed under conjugation")
    idx = np.sort(np.concatenate([upper, real]))
    mult = np.where(np.abs(z[idx].imag) <= tol, 1.0, 2.0)
    return idx, mult


def default_taus(nodes, n_p=3):
    """Preconditioner shifts ``-z`` spread over `nodes`.

    For three preconditioners these are the nodes ``z_1, z_{N/2}, z_N``
    (1-based); one preconditioner sits at ``z_{N/2}``.
    """
    nodes = np.asarray(nodes)
    N = nodes.size
    if n_p == 1:
        pick = [max(N // 2 - 1, 0)]
    elif n_p == 3 and N >= 3:
        pick = [0, N // 2 - 1, N - 1]
    else:
        pick = np.unique(np.linspace(0, N - 1, min(n_p, N)).astype(int))
    return tuple(-nodes[i] for i in pick)


def eval_matfun(f, A, b, rule, solver_cfg=None, fold=None, full_output=False):
    """Approximate ``f(A) b`` with the quadrature `rule`.

    Parameters
    ----------
    f : str or callable
        Only used to decide whether the result should be real.
    A : sparse or dense (n, n)
    b : (n,) array
    rule : QuadratureRule
    solver_cfg : SolverConfig, optional
        Defaults to MPGMRES-Sh with ``btol = atol = 1e-10`` and three
        preconditioners at the first, middle and last solved nodes. Given
        without ``taus``, the same placement is used.
    fold : bool, optional
        Solve only the nodes with ``Im z >= 0`` and use conjugate symmetry.
        Defaults to True when `A` and `b` are real.
    full_output : bool
        Also return the :class:`SolveReport`.

    Raises
    ------
    MatfunConvergenceError
        If any shifted system failed to converge; ``node_indices`` lists
        the offending rule nodes.
    """
    A = as_complex_csr(A)
    b = as_complex_vector(b, A.shape[0])
    real_problem = not np.any(A.data.imag) and not np.any(b.imag)
    if fold is None:
        fold = real_problem
    idx, mult = solved_nodes(rule, fold)
    nodes = rule.nodes[idx]
    if solver_cfg is None:
        solver_cfg = SolverConfig(btol=1e-10, atol=1e-10, max_total_iterations=2000)
    if not solver_cfg.taus:
        n_p = 1 if solver_cfg.kind == "gmres-sh" else 3
        solver_cfg = SolverConfig(**{**solver_cfg.__dict__, "taus": default_taus(nodes, n_p)})
    prob = ShiftedProblem(A, b, -nodes)
    report = solve(prob, solver_cfg)
    if not report.all_converged:
        bad = idx[~report.converged].tolist()
        raise MatfunConvergenceError(f"shifted solves failed at rule nodes {bad}", bad, report)
    X = -report.solutions
    terms = X * rule.weights[idx][None, :]
    if fold:
        out = (terms.real * mult[None, :]).sum(axis=1)
    else:
        out = terms.sum(axis=1)
        if real_problem:
            nrm = np.linalg.norm(out)
            if np.linalg.norm(out.imag) > 1e-6 * nrm:
                raise ValueError(
                    f"imaginary part {np.linalg.norm(out.imag) / nrm:.2e} of a real-valued result"
                )
            out = out.real
    return (out, report) if full_output else out
