import numpy as np
import pytest
import scipy.sparse as sp


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_nonsymmetric(rng, n, shift=2.0):
    """Dense random matrix with spectrum in a disk of radius ~1 around `shift`."""
    return rng.standard_normal((n, n)) / np.sqrt(n) + shift * np.eye(n)


def random_spd(rng, n, cond=100.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    lam = np.geomspace(1.0, cond, n)
    A = (Q * lam) @ Q.T
    return 0.5 * (A + A.T), lam, Q


def random_sparse(rng, n, density=0.05, shift=4.0):
    A = sp.random(n, n, density=density, random_state=np.random.RandomState(rng.integers(2**31)))
    return (A + shift * sp.identity(n)).tocsr()


def random_mass(rng, n):
    return sp.diags(rng.uniform(0.5, 2.0, n)).tocsr()
