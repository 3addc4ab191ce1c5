"""
QuasiLocal Sparsity Patterns
The quasi-local matrix class: symmetric node-coupling patterns built from
element neighborhoods, the enumeration of relevant entries, and the
conversions between pattern-conforming matrices and parameter vectors.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from errors import DimensionMismatch, PatternError
from mesh import CartesianMesh


@dataclass(frozen=True, eq=False)
class SparsityPattern:
    """
    Upper-triangle index set P of M(ell, T_H).

    rows/cols enumerate the relevant entries (i <= j) in row-major order, so
    entry k of a parameter vector is the matrix entry (rows[k], cols[k]).
    """

    mesh: CartesianMesh
    ell: int
    rows: np.ndarray
    cols: np.ndarray

    @property
    def size(self):
        """Number of relevant entries (mu)"""
        return self.rows.size

    @property
    def node_count(self):
        return self.mesh.node_count

    @cached_property
    def indicator(self):
        """Symmetric 0/1 csr matrix of the full pattern"""
        ones = np.ones(self.size)
        upper = sp.coo_matrix((ones, (self.rows, self.cols)), shape=(self.node_count,) * 2)
        full = (upper + sp.triu(upper, k=1).T).tocsr()
        full.sort_indices()
        return full

    @cached_property
    def _position(self):
        """csr lookup (i, j) -> k + 1 over the upper triangle"""
        labels = np.arange(1, self.size + 1, dtype=float)
        return sp.csr_matrix((labels, (self.rows, self.cols)), shape=(self.node_count,) * 2)

    @cached_property
    def diagonal_mask(self):
        return self.rows == self.cols

    def entry_index(self, i, j):
        """Relevant-entry index of the pair (i, j), in either order"""
        i, j = min(i, j), max(i, j)
        k = int(self._position[i, j])
        if k == 0:
            raise PatternError(f"Pair ({i}, {j}) is not in the pattern for ell={self.ell}")
        return k - 1

    def contains(self, i, j):
        i, j = min(i, j), max(i, j)
        return self._position[i, j] != 0

    def conforms(self, matrix):
        """True when every nonzero of matrix lies inside the pattern"""
        return _outside_count(self, _as_csr(self, matrix)) == 0

    def row_counts(self):
        """Nonzeros per row of the full symmetric pattern"""
        return np.diff(self.indicator.indptr)


def _stencil_offsets(dim, reach):
    return np.array(list(itertools.product(range(-reach, reach + 1), repeat=dim)))


def build_pattern(mesh, ell):
    """
    Pattern of M(ell, T_H) on a Cartesian mesh.

    Node z_i lies in N^ell(z_j) exactly when their grid indices differ by at
    most ell + 1 along every axis.
    """
    if ell < 0:
        raise PatternError(f"Pattern order must be >= 0, got {ell}")
    reach = min(ell + 1, mesh.cells_per_axis)
    nodes = np.arange(mesh.node_count)
    idx = mesh.node_multi_index(nodes)

    rows, cols = [], []
    for offset in _stencil_offsets(mesh.dim, reach):
        target = idx + offset
        keep = np.all((target >= 0) & (target <= mesh.cells_per_axis), axis=1)
        j = mesh.node_index(target[keep])
        i = nodes[keep]
        upper = j >= i
        rows.append(i[upper])
        cols.append(j[upper])

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    order = np.lexsort((cols, rows))
    return SparsityPattern(mesh=mesh, ell=int(ell), rows=rows[order], cols=cols[order])


def _as_csr(pattern, matrix):
    matrix = sp.csr_matrix(matrix)
    if matrix.shape != (pattern.node_count,) * 2:
        raise DimensionMismatch(
            f"Matrix of shape {matrix.shape} does not fit a pattern on {pattern.node_count} nodes"
        )
    return matrix


def _outside_count(pattern, matrix):
    magnitude = abs(matrix)
    outside = magnitude - magnitude.multiply(pattern.indicator)
    outside = sp.csr_matrix(outside)
    outside.eliminate_zeros()
    return outside.nnz


def project_to_pattern(pattern, matrix):
    """Zero every entry of matrix outside the pattern"""
    matrix = _as_csr(pattern, matrix)
    projected = sp.csr_matrix(matrix.multiply(pattern.indicator))
    projected.eliminate_zeros()
    return projected


def basis_matrix(pattern, k):
    """Derivative of S with respect to its k-th relevant entry"""
    if not 0 <= k < pattern.size:
        raise PatternError(f"Relevant-entry index {k} out of range [0, {pattern.size})")
    i, j = int(pattern.rows[k]), int(pattern.cols[k])
    if i == j:
        data, r, c = [1.0], [i], [i]
    else:
        data, r, c = [1.0, 1.0], [i, j], [j, i]
    return sp.csr_matrix((data, (r, c)), shape=(pattern.node_count,) * 2)


def pack(pattern, matrix):
    """Relevant entries of a pattern-conforming symmetric matrix"""
    matrix = _as_csr(pattern, matrix)
    outside = _outside_count(pattern, matrix)
    if outside:
        raise PatternError(f"Matrix has {outside} nonzeros outside the ell={pattern.ell} pattern")
    return np.asarray(matrix[pattern.rows, pattern.cols]).ravel().astype(float)


def unpack(pattern, values):
    """Symmetric csr matrix with the given relevant entries"""
    values = np.asarray(values, dtype=float)
    if values.shape != (pattern.size,):
        raise DimensionMismatch(f"Expected {pattern.size} relevant entries, got shape {values.shape}")
    off = ~pattern.diagonal_mask
    rows = np.concatenate([pattern.rows, pattern.cols[off]])
    cols = np.concatenate([pattern.cols, pattern.rows[off]])
    data = np.concatenate([values, values[off]])
    matrix = sp.csr_matrix((data, (rows, cols)), shape=(pattern.node_count,) * 2)
    matrix.sort_indices()
    return matrix
