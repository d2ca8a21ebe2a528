import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from tedamage import linalg
from tedamage.errors import InvalidArgument, SolverBreakdown


def test_identity_solve():
    b = np.array([1.0, -2.0, 3.0])
    assert np.array_equal(linalg.solve_direct(sp.identity(3, format="csr"), b), b)


def test_two_by_two():
    x = linalg.solve_direct(sp.csr_matrix([[2.0, 1.0], [1.0, 2.0]]), np.array([3.0, 3.0]))
    assert np.allclose(x, [1.0, 1.0], rtol=0, atol=1e-15)


@pytest.mark.parametrize("seed", range(3))
def test_random_spd_against_dense(seed):
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(50, 50))
    A = B.T @ B + np.eye(50)
    b = rng.normal(size=50)
    x = linalg.solve_direct(sp.csr_matrix(A), b)
    assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)
    oracle = scipy.linalg.cho_solve(scipy.linalg.cho_factor(A), b)
    assert np.allclose(x, oracle, rtol=1e-9)


def test_spd_pivots_positive(rng):
    B = rng.normal(size=(20, 20))
    fac = linalg.factorize(sp.csr_matrix(B.T @ B + np.eye(20)))
    assert fac.symmetric and np.all(fac.pivots > 0)


def test_singular_breakdown():
    with pytest.raises(SolverBreakdown):
        linalg.solve_direct(sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]])), np.array([1.0, 2.0]))


def test_nonsymmetric_uses_lu(rng):
    A = sp.csr_matrix(np.eye(5) * 4 + np.triu(rng.normal(size=(5, 5)), 1))
    b = rng.normal(size=5)
    assert not linalg.factorize(A).symmetric
    assert np.allclose(A @ linalg.solve_direct(A, b), b, rtol=1e-12)


def test_cg_fallback(rng):
    B = rng.normal(size=(30, 30))
    A = sp.csr_matrix(B.T @ B + 30 * np.eye(30))
    b = rng.normal(size=30)
    x = linalg.solve(A, b, "cg")
    assert np.linalg.norm(A @ x - b) <= 1e-9 * np.linalg.norm(b)
    with pytest.raises(InvalidArgument):
        linalg.solve(A, b, "gmres")


def test_spmv_examples(rng):
    x = rng.normal(size=4)
    assert np.array_equal(linalg.spmv(sp.identity(4, format="csr"), x), x)
    assert np.array_equal(linalg.spmv(sp.csr_matrix((4, 4)), x), np.zeros(4))
    with pytest.raises(InvalidArgument):
        linalg.spmv(sp.identity(3, format="csr"), x)


@given(st.integers(0, 2**32 - 1))
def test_spmv_against_dense(seed):
    rng = np.random.default_rng(seed)
    A = sp.random(20, 20, density=0.2, random_state=seed, format="csr")
    x = rng.normal(size=20)
    ref = A.toarray() @ x
    assert np.linalg.norm(linalg.spmv(A, x) - ref) <= 1e-14 * (1 + np.linalg.norm(ref))


def test_canonical_form():
    A = sp.coo_matrix(([1.0, 2.0, 3.0], ([0, 0, 1], [1, 1, 0])), shape=(2, 2))
    C = linalg.as_system_matrix(A)
    assert C.has_canonical_format
    assert C[0, 1] == 3.0


# -- Dirichlet elimination ---------------------------------------------------


def laplace_1d(n):
    return sp.csr_matrix(sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]))


def test_all_dofs_constrained_to_zero():
    A, b = linalg.apply_dirichlet(laplace_1d(4), np.ones(4), np.arange(4), 0.0)
    assert np.array_equal(linalg.solve_direct(A, b), np.zeros(4))


def test_three_node_laplace():
    A, b = linalg.apply_dirichlet(laplace_1d(3), np.zeros(3), [0, 2], [0.0, 1.0])
    assert np.allclose(linalg.solve_direct(A, b), [0.0, 0.5, 1.0], rtol=0, atol=1e-15)


def test_symmetry_preserved(rng):
    B = rng.normal(size=(8, 8))
    A0 = sp.csr_matrix(B + B.T)
    A, _ = linalg.apply_dirichlet(A0, rng.normal(size=8), [1, 5], [2.0, -1.0])
    assert abs(A - A.T).max() == 0


def test_out_of_range_dof():
    with pytest.raises(InvalidArgument):
        linalg.apply_dirichlet(laplace_1d(3), np.zeros(3), [3], [0.0])


def test_coo_round_trip(tmp_path, rng):
    A = sp.random(6, 6, density=0.4, random_state=3, format="csr")
    linalg.export_coo(A, tmp_path / "a.txt")
    B = linalg.import_coo(tmp_path / "a.txt")
    assert (A != B).nnz == 0
