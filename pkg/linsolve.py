"""
QuasiLocal Linear Solvers
SPD factorizations reused across many right-hand sides, and the symmetric
indefinite block solve used for constrained (saddle-point) corrector problems.
"""

import logging

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.sparse.linalg import splu

import settings
from errors import DimensionMismatch, NotPositiveDefinite, NumericalError, RankDeficientConstraints

logger = logging.getLogger(__name__)


def from_lower(lower):
    """Symmetric csr matrix from its lower triangle (diagonal included)"""
    lower = sp.csr_matrix(lower)
    if lower.shape[0] != lower.shape[1]:
        raise DimensionMismatch(f"Expected a square matrix, got shape {lower.shape}")
    strict = sp.tril(lower, k=-1)
    full = (sp.tril(lower, k=0) + strict.T).tocsr()
    full.sort_indices()
    return full


def symmetric(matrix):
    """Rebuild matrix from its lower triangle so symmetry is exact"""
    return from_lower(sp.tril(sp.csr_matrix(matrix)))


def _rhs_norms(B):
    return np.linalg.norm(B.reshape(B.shape[0], -1), axis=0)


class Factorization:
    """Factorized SPD matrix; solve() accepts one or many right-hand sides"""

    def __init__(self, matrix, solver, method, check=False, rtol=None):
        self.matrix = matrix
        self.size = matrix.shape[0]
        self.method = method
        self.check = check
        self.rtol = rtol if rtol is not None else settings.solver_settings()['factor_rtol']
        self._solver = solver

    def solve(self, rhs):
        B = np.asarray(rhs, dtype=float)
        if B.ndim not in (1, 2) or B.shape[0] != self.size:
            raise DimensionMismatch(f"Right-hand side of shape {B.shape} does not fit a {self.size}x{self.size} system")
        if B.size == 0:
            return np.zeros_like(B)
        X = self._solver(B)
        if self.check:
            residual = _rhs_norms(self.matrix @ X - B)
            bound = self.rtol * np.maximum(_rhs_norms(B), np.finfo(float).tiny)
            if np.any(residual > bound):
                raise NumericalError(
                    f"SPD solve residual {residual.max():.3e} exceeds tolerance {self.rtol:.1e}"
                )
        return X


def factor_spd(matrix, check=False, rtol=None, dense_limit=None):
    """
    Factorize a symmetric matrix expected to be positive definite.

    Small systems use a dense Cholesky factorization; larger ones a sparse LU
    with a symmetric fill-reducing ordering and diagonal pivots only, in which
    case positive definiteness is read off the pivots. Raises
    NotPositiveDefinite on any nonpositive pivot.
    """
    A = sp.csr_matrix(matrix) if sp.issparse(matrix) else sp.csr_matrix(np.atleast_2d(matrix))
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionMismatch(f"Expected a square matrix, got shape {A.shape}")
    if dense_limit is None:
        dense_limit = settings.solver_settings()['dense_limit']

    if n <= dense_limit:
        try:
            factor = la.cho_factor(A.toarray(), lower=True, check_finite=True)
        except (la.LinAlgError, ValueError) as e:
            raise NotPositiveDefinite(f"Cholesky factorization failed: {e}")
        return Factorization(A, lambda B: la.cho_solve(factor, B), 'cholesky', check, rtol)

    try:
        lu = splu(
            A.tocsc(),
            permc_spec='MMD_AT_PLUS_A',
            diag_pivot_thresh=0.0,
            options=dict(SymmetricMode=True),
        )
    except RuntimeError as e:
        raise NotPositiveDefinite(f"Sparse factorization failed: {e}")
    pivots = lu.U.diagonal()
    if not np.array_equal(lu.perm_r, lu.perm_c) or not np.all(np.isfinite(pivots)) or np.any(pivots <= 0):
        raise NotPositiveDefinite(f"Nonpositive pivot in sparse factorization of a {n}x{n} matrix")
    logger.debug("Sparse SPD factorization: n=%d, nnz(L+U)=%d", n, lu.L.nnz + lu.U.nnz)
    return Factorization(A, lu.solve, 'splu', check, rtol)


def solve(factorization, rhs):
    """Solve against a factorization for a vector or a column block"""
    return factorization.solve(rhs)


def solve_saddle(K, C, b, rtol=None):
    """
    Minimize 1/2 w'Kw - b'w subject to C w = 0.

    Zero rows of C are dropped first. The remaining system
    [[K, C'], [C, 0]] is solved with a sparse LU; b may hold several columns.
    Raises RankDeficientConstraints when the block system is singular or the
    solution misses its residual contract.
    """
    K = sp.csr_matrix(K)
    n = K.shape[0]
    B = np.asarray(b, dtype=float)
    if K.shape != (n, n) or B.shape[0] != n:
        raise DimensionMismatch(f"Saddle system with K {K.shape} and rhs {B.shape}")
    if rtol is None:
        rtol = settings.solver_settings()['saddle_rtol']

    if C is None:
        return factor_spd(K).solve(B)
    C = sp.csr_matrix(C)
    if C.shape[1] != n:
        raise DimensionMismatch(f"Constraint matrix with {C.shape[1]} columns for {n} unknowns")
    C = C[np.diff(C.indptr) > 0]
    if C.shape[0] == 0:
        return factor_spd(K).solve(B)

    p = C.shape[0]
    block = sp.bmat([[K, C.T], [C, None]], format='csc')
    rhs = np.concatenate([B.reshape(n, -1), np.zeros((p, B.reshape(n, -1).shape[1]))])
    try:
        lu = splu(block)
        sol = lu.solve(rhs)
        # one step of iterative refinement
        sol = sol + lu.solve(rhs - block @ sol)
    except RuntimeError as e:
        raise RankDeficientConstraints(f"Saddle-point system with {p} constraints is singular: {e}")
    if not np.all(np.isfinite(sol)):
        raise RankDeficientConstraints(f"Saddle-point solve with {p} constraints produced non-finite values")

    W, lam = sol[:n], sol[n:]
    residual = _rhs_norms(K @ W + C.T @ lam - rhs[:n])
    scale = np.maximum(_rhs_norms(rhs[:n]), np.finfo(float).tiny)
    violation = np.abs(C @ W).max(axis=0)
    # |W| alone is meaningless when the exact solution vanishes
    w_scale = np.maximum(np.abs(W).max(axis=0), scale / max(abs(K).max(), np.finfo(float).tiny))
    if np.any(residual > rtol * scale) or np.any(violation > rtol * w_scale):
        raise RankDeficientConstraints(
            f"Saddle-point residual {residual.max():.3e} / constraint violation {violation.max():.3e} "
            f"exceed tolerance {rtol:.1e}"
        )
    return W.reshape(B.shape)
