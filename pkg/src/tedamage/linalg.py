"""
Sparse matrices and linear solvers.

System matrices are plain :class:`scipy.sparse.csr_matrix` objects in
canonical form (sorted column indices, no duplicates). The direct solver is
SuperLU run in symmetric mode: a symmetric minimum-degree ordering on
``A + A^T`` with diagonal pivoting, which for symmetric input is an
LDL^T-type factorization whose pivots are the diagonal of ``U``.
Nonsymmetric systems (the heat Jacobian with temperature-dependent
conductivity) fall back to partial pivoting.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidArgument, SolverBreakdown

log = logging.getLogger(__name__)

SystemMatrix = sp.csr_matrix


def as_system_matrix(A) -> sp.csr_matrix:
    """Canonical CSR copy of ``A``: duplicates summed, indices sorted."""
    A = sp.csr_matrix(A, dtype=float, copy=True)
    A.sum_duplicates()
    A.sort_indices()
    return A


def is_symmetric(A, rtol: float = 0.0) -> bool:
    diff = abs(A - A.T)
    if diff.nnz == 0:
        return True
    return diff.max() <= rtol * abs(A).max()


def spmv(A, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if A.shape[1] != x.shape[0]:
        raise InvalidArgument(f"dimension mismatch: matrix {A.shape}, vector {x.shape}")
    return A @ x


@dataclass
class Factorization:
    lu: object
    symmetric: bool

    @property
    def pivots(self) -> np.ndarray:
        return self.lu.U.diagonal()

    def solve(self, b):
        return self.lu.solve(np.asarray(b, dtype=float))


def factorize(A, symmetric: bool | None = None) -> Factorization:
    A = sp.csc_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise InvalidArgument(f"matrix must be square, got {A.shape}")
    if symmetric is None:
        symmetric = is_symmetric(A, 1e-14)
    try:
        if symmetric:
            lu = spla.splu(
                A,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        else:
            lu = spla.splu(A, permc_spec="COLAMD")
    except RuntimeError as exc:  # "Factor is exactly singular"
        raise SolverBreakdown(f"factorization failed: {exc}") from exc
    piv = lu.U.diagonal()
    if not np.all(np.isfinite(piv)) or np.any(piv == 0):
        bad = int(np.argmin(np.abs(piv)))
        raise SolverBreakdown(f"zero pivot at position {bad} (|pivot| = {abs(piv[bad]):.3e})")
    return Factorization(lu, symmetric)


def solve_direct(A, b, rtol: float = 1e-10, max_refine: int = 3) -> np.ndarray:
    """Solve ``A x = b`` by sparse factorization plus iterative refinement."""
    b = np.asarray(b, dtype=float)
    if A.shape[0] != b.shape[0]:
        raise InvalidArgument(f"dimension mismatch: matrix {A.shape}, rhs {b.shape}")
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    fac = factorize(A)
    x = fac.solve(b)
    for _ in range(max_refine):
        r = b - A @ x
        if np.linalg.norm(r) <= rtol * bnorm:
            break
        x += fac.solve(r)
    if not np.all(np.isfinite(x)):
        raise SolverBreakdown("direct solve produced non-finite values")
    return x


def solve_cg(A, b, rtol: float = 1e-10, maxiter: int | None = None) -> np.ndarray:
    """Jacobi-preconditioned conjugate gradients for large SPD systems."""
    d = A.diagonal()
    if np.any(d <= 0):
        raise SolverBreakdown("CG requires a positive diagonal")
    M = sp.diags(1.0 / d)
    x, info = spla.cg(A, b, rtol=rtol, atol=0.0, M=M, maxiter=maxiter)
    if info != 0:
        raise SolverBreakdown(f"CG did not converge (info={info})")
    return x


def solve(A, b, method: str = "direct") -> np.ndarray:
    if method == "direct":
        return solve_direct(A, b)
    if method == "cg":
        return solve_cg(A, b)
    raise InvalidArgument(f"unknown linear solver {method!r}")


def apply_dirichlet(A, rhs, dofs, values):
    """Eliminate constrained dofs symmetrically.

    Returns a new matrix with the constrained rows and columns replaced by
    identity entries and the right-hand side lifted by the known values, so
    that the solution of the reduced system carries ``values`` on ``dofs``.
    """
    A = as_system_matrix(A)
    rhs = np.array(rhs, dtype=float, copy=True)
    dofs = np.asarray(dofs, dtype=np.int64).ravel()
    values = np.broadcast_to(np.asarray(values, dtype=float), dofs.shape)
    n = A.shape[0]
    if dofs.size == 0:
        return A, rhs
    if dofs.min() < 0 or dofs.max() >= n:
        raise InvalidArgument(f"constrained dof out of range [0, {n})")
    g = np.zeros(n)
    g[dofs] = values
    rhs -= A @ g
    keep = np.ones(n)
    keep[dofs] = 0.0
    D = sp.diags(keep)
    A = D @ A @ D + sp.diags(1.0 - keep)
    rhs[dofs] = values
    return as_system_matrix(A), rhs


def export_coo(A, path) -> None:
    """Write ``i j value`` lines (0-based) with a ``n_rows n_cols nnz`` header."""
    A = sp.coo_matrix(A)
    with open(path, "w") as fh:
        fh.write(f"{A.shape[0]} {A.shape[1]} {A.nnz}\n")
        for i, j, v in zip(A.row, A.col, A.data):
            fh.write(f"{int(i)} {int(j)} {float(v)!r}\n")


def import_coo(path) -> sp.csr_matrix:
    with open(path) as fh:
        n, m, _ = (int(v) for v in fh.readline().split())
        data = np.loadtxt(fh, ndmin=2)
    if data.size == 0:
        return sp.csr_matrix((n, m))
    return as_system_matrix(
        sp.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(n, m))
    )
