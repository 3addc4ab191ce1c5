"""
QuasiLocal Assembly
Q1 finite element operators on Cartesian meshes: stiffness and mass matrices,
coarse-to-fine prolongation, L2 projection, boundary extension/trace and the
projective quasi-interpolation used to define the fine-scale space.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from errors import ConfigError, DimensionMismatch, MeshError
from linsolve import factor_spd, from_lower, symmetric
from mesh import build_mesh, build_nesting

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class Coefficient:
    """Scalar diffusion coefficient, constant on each element of its mesh"""

    mesh: object
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.element_count,):
            raise DimensionMismatch(
                f"Coefficient needs {self.mesh.element_count} element values, got shape {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)) or np.any(self.values <= 0):
            raise ConfigError("Coefficient values must be finite and strictly positive")
        self.alpha = float(self.values.min())
        self.beta = float(self.values.max())

    @property
    def contrast(self):
        return self.beta / self.alpha

    def scaled(self, factor):
        return Coefficient(self.mesh, factor * self.values)

    def on(self, mesh):
        """Element values on a mesh equal to or finer than the coefficient mesh"""
        if mesh == self.mesh:
            return self.values
        if mesh.cells_per_axis < self.mesh.cells_per_axis:
            raise MeshError(
                f"Cannot evaluate a coefficient on {self.mesh.cells_per_axis} cells "
                f"on the coarser mesh with {mesh.cells_per_axis} cells"
            )
        return self.values[build_nesting(self.mesh, mesh).fine_to_coarse_element]


def constant_coefficient(mesh, value=1.0):
    return Coefficient(mesh, np.full(mesh.element_count, float(value)))


def _interval_stiffness(side):
    return np.array([[1.0, -1.0], [-1.0, 1.0]]) / side


def _interval_mass(side):
    return np.array([[2.0, 1.0], [1.0, 2.0]]) * side / 6.0


def local_stiffness(dim, side):
    """Element stiffness of the unit coefficient, vertices ordered x-fastest"""
    k1, m1 = _interval_stiffness(side), _interval_mass(side)
    if dim == 1:
        return k1
    return np.kron(m1, k1) + np.kron(k1, m1)


def local_mass(dim, side):
    m1 = _interval_mass(side)
    return m1 if dim == 1 else np.kron(m1, m1)


def _assemble(mesh, local, weights, elements=None):
    """Sum weighted copies of a local matrix over elements (lower triangle, mirrored)"""
    conn = mesh.element_nodes if elements is None else mesh.element_nodes[np.asarray(elements)]
    weights = np.broadcast_to(weights, (mesh.element_count,))
    if elements is not None:
        weights = weights[np.asarray(elements)]
    nv = conn.shape[1]
    rows = np.broadcast_to(conn[:, :, None], (conn.shape[0], nv, nv))
    cols = np.broadcast_to(conn[:, None, :], (conn.shape[0], nv, nv))
    data = weights[:, None, None] * local[None, :, :]
    lower = rows >= cols
    L = sp.coo_matrix(
        (data[lower], (rows[lower], cols[lower])), shape=(mesh.node_count, mesh.node_count)
    )
    return from_lower(L.tocsr())


def assemble_stiffness(mesh, coefficient, elements=None):
    """
    Stiffness matrix a(phi_j, phi_i) of a piecewise-constant coefficient.

    With elements given, only those elements are integrated (the
    element-restricted form a_T).
    """
    values = coefficient.on(mesh)
    return _assemble(mesh, local_stiffness(mesh.dim, mesh.side), values, elements)


def assemble_mass(mesh):
    return _assemble(mesh, local_mass(mesh.dim, mesh.side), np.ones(mesh.element_count))


def assemble_boundary_mass(mesh):
    """
    Mass matrix of the boundary trace space, in boundary-node numbering.

    In 1D the boundary is two points and the matrix is the identity; in 2D it
    is the 1D mass matrix of the closed polygon formed by the boundary edges.
    """
    n = mesh.boundary_count
    if mesh.dim == 1:
        return sp.identity(n, format='csr')
    position = np.full(mesh.node_count, -1)
    position[mesh.boundary_nodes] = np.arange(n)
    N = mesh.cells_per_axis
    k = np.arange(N)
    edges = []
    for fixed in (0, N):
        edges.append((mesh.node_index(np.c_[k, np.full(N, fixed)]), mesh.node_index(np.c_[k + 1, np.full(N, fixed)])))
        edges.append((mesh.node_index(np.c_[np.full(N, fixed), k]), mesh.node_index(np.c_[np.full(N, fixed), k + 1])))
    a = position[np.concatenate([e[0] for e in edges])]
    b = position[np.concatenate([e[1] for e in edges])]
    m1 = _interval_mass(mesh.side)
    rows = np.concatenate([a, a, b, b])
    cols = np.concatenate([a, b, a, b])
    data = np.repeat([m1[0, 0], m1[0, 1], m1[1, 0], m1[1, 1]], a.size)
    return symmetric(sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr())


def _hat_interpolation_1d(ratio, coarse_cells):
    """(fine nodes) x (coarse nodes) matrix of 1D coarse hats at fine nodes"""
    fine_nodes = np.arange(ratio * coarse_cells + 1)
    parent = np.minimum(fine_nodes // ratio, coarse_cells - 1)
    t = (fine_nodes - parent * ratio) / ratio
    rows = np.concatenate([fine_nodes, fine_nodes])
    cols = np.concatenate([parent, parent + 1])
    data = np.concatenate([1.0 - t, t])
    P1 = sp.csr_matrix((data, (rows, cols)), shape=(fine_nodes.size, coarse_cells + 1))
    P1.eliminate_zeros()
    return P1


@lru_cache(maxsize=16)
def prolongation(nesting):
    """Fine nodal values of every coarse Q1 basis function (m_fine x m_coarse)"""
    P1 = _hat_interpolation_1d(nesting.ratio, nesting.coarse.cells_per_axis)
    P = P1 if nesting.dim == 1 else sp.kron(P1, P1, format='csr')
    P.sort_indices()
    return P


def local_prolongation(nesting):
    """Fine closure-node values of the 2^dim vertex hats of one coarse element"""
    p1 = _hat_interpolation_1d(nesting.ratio, 1).toarray()
    return p1 if nesting.dim == 1 else np.kron(p1, p1)


def coarse_element_stiffness(nesting, fine_values, element):
    """
    Stiffness of the fine elements inside one coarse element.

    Returns the dense matrix on the (ratio+1)^dim fine closure nodes of the
    element together with their global fine indices.
    """
    origin = nesting.coarse.element_multi_index(element)
    nodes = nesting.fine_nodes_in_box(origin, origin + 1)
    reference = build_mesh(nesting.dim, nesting.ratio)
    values = np.asarray(fine_values)[nesting.fine_elements_of(element)]
    local = _assemble(reference, local_stiffness(nesting.dim, nesting.fine.side), values)
    return local.toarray(), nodes


def inject(coarse_vector, nesting):
    """Fine nodal vector of a coarse Q1 function"""
    return prolongation(nesting) @ np.asarray(coarse_vector, dtype=float)


def load_vector(fine_vector, nesting):
    """Coarse load vector M_H Pi_H f of a fine Q1 function f"""
    f = np.asarray(fine_vector, dtype=float)
    if f.shape[0] != nesting.fine.node_count:
        raise DimensionMismatch(f"Fine vector of length {f.shape[0]}, mesh has {nesting.fine.node_count} nodes")
    return prolongation(nesting).T @ (assemble_mass(nesting.fine) @ f)


def l2_project(fine_vector, nesting):
    """L2 projection of a fine Q1 function onto the coarse Q1 space"""
    M_H = assemble_mass(nesting.coarse)
    return factor_spd(M_H).solve(load_vector(fine_vector, nesting))


def galerkin_stiffness(coefficient, nesting):
    """Coarse Q1 stiffness with the coefficient integrated on the fine mesh"""
    A_h = assemble_stiffness(nesting.fine, coefficient)
    P = prolongation(nesting)
    return symmetric(P.T @ A_h @ P)


def _check_length(vector, expected, what):
    v = np.asarray(vector, dtype=float)
    if v.shape[0] != expected:
        raise DimensionMismatch(f"{what} has length {v.shape[0]}, expected {expected}")
    return v


def extension(u0, mesh):
    """Coarse nodal vector with u0 on the boundary and zero inside"""
    u0 = _check_length(u0, mesh.boundary_count, "Boundary data")
    full = np.zeros((mesh.node_count,) + u0.shape[1:])
    full[mesh.boundary_nodes] = u0
    return full


def restriction(vector, mesh):
    """Interior entries of a nodal vector"""
    return _check_length(vector, mesh.node_count, "Nodal vector")[mesh.interior_nodes]


def trace(vector, mesh):
    """Boundary entries of a nodal vector"""
    return _check_length(vector, mesh.node_count, "Nodal vector")[mesh.boundary_nodes]


def embed_interior(interior, mesh):
    """Nodal vector with the given interior values and zero boundary values"""
    interior = _check_length(interior, mesh.interior_count, "Interior vector")
    full = np.zeros((mesh.node_count,) + interior.shape[1:])
    full[mesh.interior_nodes] = interior
    return full


def _local_quasi_interpolation_1d(ratio):
    """2 x (ratio+1) elementwise L2 projection of fine hats onto the two vertex hats"""
    t = np.arange(ratio + 1) / ratio
    p1 = np.c_[1.0 - t, t]
    fine = np.zeros((ratio + 1, ratio + 1))
    m1 = _interval_mass(1.0 / ratio)
    for e in range(ratio):
        fine[e:e + 2, e:e + 2] += m1
    coarse = _interval_mass(1.0)
    # lengths relative to the coarse element; the common factor H cancels
    return np.linalg.solve(coarse, p1.T @ fine)


@lru_cache(maxsize=16)
def quasi_interpolation_matrix(nesting):
    """
    Matrix C_I of the quasi-interpolation I_H (coarse interior x fine nodes).

    On every coarse element the fine function is L2-projected onto Q1; nodal
    values from the 2^dim elements around an interior node are averaged.
    Boundary nodes are dropped, so I_H maps into V_H^0.
    """
    coarse, fine, r, dim = nesting.coarse, nesting.fine, nesting.ratio, nesting.dim
    q1 = _local_quasi_interpolation_1d(r)
    local = q1 if dim == 1 else np.kron(q1, q1)

    offsets = np.array([c[::-1] for c in np.ndindex(*((r + 1,) * dim))])
    origins = coarse.element_multi_index(np.arange(coarse.element_count)) * r
    fine_nodes = fine.node_index((origins[:, None, :] + offsets[None, :, :]).reshape(-1, dim))
    fine_nodes = fine_nodes.reshape(coarse.element_count, -1)
    vertices = coarse.element_nodes

    E, nv, nf = coarse.element_count, vertices.shape[1], fine_nodes.shape[1]
    rows = np.broadcast_to(vertices[:, :, None], (E, nv, nf)).ravel()
    cols = np.broadcast_to(fine_nodes[:, None, :], (E, nv, nf)).ravel()
    data = np.broadcast_to(local[None] / 2 ** dim, (E, nv, nf)).ravel()

    position = np.full(coarse.node_count, -1)
    position[coarse.interior_nodes] = np.arange(coarse.interior_count)
    keep = position[rows] >= 0
    C = sp.csr_matrix(
        (data[keep], (position[rows[keep]], cols[keep])), shape=(coarse.interior_count, fine.node_count)
    )
    C.sum_duplicates()
    C.eliminate_zeros()
    logger.debug("Quasi-interpolation matrix %s with %d nonzeros", C.shape, C.nnz)
    return C


def quasi_interpolation(fine_vector, nesting):
    """Interior coarse nodal values of I_H applied to a fine nodal vector"""
    v = _check_length(fine_vector, nesting.fine.node_count, "Fine vector")
    return quasi_interpolation_matrix(nesting) @ v
