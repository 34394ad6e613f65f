import numpy as np
import pytest
import scipy.sparse as sp

from eulercut.assembly import SparseSystem
from eulercut.solver import DIRECT, ITERATIVE, SolverError, solve


def _system(A, b):
    A = sp.csr_matrix(A)
    return SparseSystem(A, np.asarray(b, float), np.arange(A.shape[0]))


@pytest.mark.parametrize("method", [DIRECT, ITERATIVE])
def test_identity(method):
    b = np.arange(5.0)
    x, res = solve(_system(np.eye(5), b), method)
    assert np.allclose(x, b) and res <= 1e-10


@pytest.mark.parametrize("method", [DIRECT, ITERATIVE])
def test_spd_two_by_two(method):
    x, _ = solve(_system([[2, 1], [1, 2]], [1, 1]), method)
    assert np.allclose(x, [1 / 3, 1 / 3], atol=1e-10)


def test_singular():
    with pytest.raises(SolverError, match="singular system"):
        solve(_system([[1, 1], [1, 1]], [1, 2]), DIRECT)


def test_empty_system():
    with pytest.raises(SolverError, match="singular system"):
        solve(_system(np.zeros((0, 0)), []), DIRECT)


def test_iterative_stagnation_reports_history():
    A = sp.diags([np.ones(50), -np.ones(49) * 0.999999, -np.ones(49)], [0, 1, -1])
    A = A.tolil()
    A[0, 0] = 1e-14
    with pytest.raises(SolverError, match="stagnated|singular"):
        solve(_system(A, np.ones(50)), ITERATIVE, maxiter=3)


def test_direct_and_iterative_agree():
    rng = np.random.default_rng(3)
    n = 200
    A = sp.random(n, n, density=0.03, random_state=4) + sp.eye(n) * 5
    b = rng.standard_normal(n)
    x1, _ = solve(_system(A, b), DIRECT)
    x2, _ = solve(_system(A, b), ITERATIVE)
    assert np.allclose(x1, x2, atol=1e-8)


def test_unknown_method():
    with pytest.raises(ValueError):
        solve(_system(np.eye(2), [1, 1]), "MAGIC")
