"""
QuasiLocal LOD
Localized Orthogonal Decomposition: element correctors on oversampling
patches, the corrected coarse basis, the LOD stiffness matrix S_H^ell(A),
the LOD coarse solver and the measured decay of the correctors.
"""

import hashlib
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

import assembly
from errors import ConfigError, DimensionMismatch, MeshError
from linsolve import factor_spd, solve_saddle, symmetric
from mesh import element_patch_box, neighborhood
from workers.pool import parallel_map

logger = logging.getLogger(__name__)

BOUNDARY_CORRECTION_MODES = ('full', 'interior')


def coefficient_fingerprint(coefficient):
    digest = hashlib.sha256()
    digest.update(repr((coefficient.mesh.dim, coefficient.mesh.cells_per_axis)).encode())
    digest.update(np.ascontiguousarray(coefficient.values).tobytes())
    return digest.hexdigest()[:16]


@dataclass
class ElementCorrector:
    """Corrections C_{T,ell} Lambda_z of the vertex hats of one coarse element"""

    element: int
    nodes: np.ndarray  # fine nodes strictly inside the patch
    vertices: np.ndarray  # coarse vertices that were corrected
    values: np.ndarray  # (len(nodes), len(vertices))

    def correction(self, vertex, fine_node_count):
        """Fine nodal vector of the correction of one vertex hat"""
        out = np.zeros(fine_node_count)
        column = np.flatnonzero(self.vertices == vertex)
        if column.size:
            out[self.nodes] = self.values[:, column[0]]
        return out


@dataclass
class CorrectorSet:
    nesting: object
    ell: int
    boundary_correction: str
    fingerprint: str
    elements: list = field(default_factory=list)

    def matrix(self):
        """Global corrector C_ell as a (fine nodes x coarse nodes) csr matrix"""
        rows, cols, data = [], [], []
        for corrector in self.elements:
            k = corrector.vertices.size
            rows.append(np.repeat(corrector.nodes, k))
            cols.append(np.tile(corrector.vertices, corrector.nodes.size))
            data.append(corrector.values.ravel())
        shape = (self.nesting.fine.node_count, self.nesting.coarse.node_count)
        if not rows:
            return sp.csr_matrix(shape)
        return sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=shape)


class CorrectorProblems:
    """
    Patch corrector problems for one coefficient on one coarse/fine pair.

    The fine stiffness matrix and the quasi-interpolation matrix are built
    once and shared read-only by every element solve.
    """

    def __init__(self, coefficient, nesting, boundary_correction='full'):
        if boundary_correction not in BOUNDARY_CORRECTION_MODES:
            raise ConfigError(
                f"boundary_correction must be one of {BOUNDARY_CORRECTION_MODES}, got {boundary_correction!r}"
            )
        if nesting.ratio < 2:
            raise MeshError("LOD needs a fine mesh strictly finer than the coarse mesh")
        self.coefficient = coefficient
        self.nesting = nesting
        self.boundary_correction = boundary_correction
        self.fine_values = coefficient.on(nesting.fine)
        self.fine_stiffness = assembly.assemble_stiffness(nesting.fine, coefficient)
        self.constraints = assembly.quasi_interpolation_matrix(nesting)
        self.local_hats = assembly.local_prolongation(nesting)

    def corrected_vertices(self, element):
        vertices = self.nesting.coarse.element_nodes[element]
        if self.boundary_correction == 'interior':
            vertices = vertices[~self.nesting.coarse.boundary_mask[vertices]]
        return vertices

    def solve(self, element, ell):
        """Element correctors C_{T,ell} Lambda_z for the vertices z of element T"""
        nesting = self.nesting
        lo, hi = element_patch_box(nesting.coarse, element, ell)
        free = nesting.fine_nodes_in_box(lo, hi, open_box=True)
        vertices = self.corrected_vertices(element)

        all_vertices = nesting.coarse.element_nodes[element]
        keep = np.isin(all_vertices, vertices)
        stiffness_T, closure = assembly.coarse_element_stiffness(nesting, self.fine_values, element)
        load = stiffness_T @ self.local_hats[:, keep]

        position = np.searchsorted(free, closure)
        inside = (position < free.size) & (free[np.minimum(position, free.size - 1)] == closure)
        rhs = np.zeros((free.size, vertices.size))
        rhs[position[inside]] = load[inside]

        if vertices.size == 0:
            values = np.zeros((free.size, vertices.size))
        else:
            K = self.fine_stiffness[free][:, free]
            C = self.constraints[:, free]
            values = solve_saddle(K, C, rhs)
        logger.debug("Element %d, ell=%d: %d patch unknowns", element, ell, free.size)
        return ElementCorrector(element=int(element), nodes=free, vertices=vertices, values=values)


def compute_element_corrector(element, ell, coefficient, nesting, boundary_correction='full'):
    """Correctors of the vertex hats of one coarse element on N^ell(element)"""
    return CorrectorProblems(coefficient, nesting, boundary_correction).solve(element, ell)


def compute_correctors(coefficient, nesting, ell, boundary_correction='full', elements=None, threads=None):
    """Element correctors for all (or the given) coarse elements"""
    problems = CorrectorProblems(coefficient, nesting, boundary_correction)
    if elements is None:
        elements = range(nesting.coarse.element_count)
    solved = parallel_map(lambda T: problems.solve(T, ell), elements, threads)
    logger.info(
        "Computed %d element correctors (ell=%d, %s boundary correction)", len(solved), ell, boundary_correction
    )
    return CorrectorSet(
        nesting=nesting,
        ell=int(ell),
        boundary_correction=boundary_correction,
        fingerprint=coefficient_fingerprint(coefficient),
        elements=solved,
    )


class LodModel:
    """LOD discretization of one coefficient with oversampling ell"""

    def __init__(self, coefficient, nesting, ell, boundary_correction='full', threads=None):
        if ell < 0:
            raise ConfigError(f"Oversampling parameter must be >= 0, got {ell}")
        self.coefficient = coefficient
        self.nesting = nesting
        self.ell = int(ell)
        self.boundary_correction = boundary_correction
        self.threads = threads

    @cached_property
    def correctors(self):
        return compute_correctors(
            self.coefficient, self.nesting, self.ell, self.boundary_correction, threads=self.threads
        )

    @cached_property
    def fine_stiffness(self):
        return assembly.assemble_stiffness(self.nesting.fine, self.coefficient)

    @cached_property
    def basis(self):
        """Corrected basis (1 - C_ell) Lambda_z as columns of a fine x coarse matrix"""
        return sp.csr_matrix(assembly.prolongation(self.nesting) - self.correctors.matrix())

    @cached_property
    def stiffness(self):
        Phi = self.basis
        return symmetric(Phi.T @ (self.fine_stiffness @ Phi))

    def solve(self, u0, f):
        """
        Coarse LOD solution for boundary data u0 (n or n x q) and fine source f.

        Solved at fine level: the interior system is a(Phi_int x, Phi_int v)
        and the boundary data enter through the corrected extension.
        """
        coarse = self.nesting.coarse
        u0 = np.asarray(u0, dtype=float)
        if u0.shape[0] != coarse.boundary_count:
            raise DimensionMismatch(f"Boundary data of length {u0.shape[0]}, mesh has {coarse.boundary_count}")
        Phi, A_h = self.basis, self.fine_stiffness
        Phi_int = Phi[:, coarse.interior_nodes]
        Phi_bnd = Phi[:, coarse.boundary_nodes]

        system = Phi_int.T @ (A_h @ Phi_int)
        load = assembly.restriction(assembly.load_vector(f, self.nesting), coarse)
        lifted = A_h @ (Phi_bnd @ u0)
        rhs = (load if u0.ndim == 1 else load[:, None]) - Phi_int.T @ lifted

        interior = factor_spd(symmetric(system)).solve(rhs)
        return assembly.embed_interior(interior, coarse) + assembly.extension(u0, coarse)

    def corrected_solution(self, coarse_solution):
        """Fine nodal vector (1 - C_ell) u_H of coarse nodal values (n or n x q)"""
        u = np.asarray(coarse_solution, dtype=float)
        nodes = self.nesting.coarse.node_count
        if u.shape[0] != nodes:
            raise DimensionMismatch(f"Coarse vector of length {u.shape[0]}, mesh has {nodes} nodes")
        return self.basis @ u

    def corrected_basis(self, node):
        """Lambda_z, C_ell Lambda_z and (1 - C_ell) Lambda_z as fine nodal vectors"""
        hat = assembly.prolongation(self.nesting)[:, node].toarray().ravel()
        correction = self.correctors.matrix()[:, node].toarray().ravel()
        return {'hat': hat, 'correction': correction, 'corrected': hat - correction}


def assemble_lod_stiffness(coefficient, ell, nesting, boundary_correction='full', threads=None):
    """LOD stiffness matrix S_H^ell(A)"""
    return LodModel(coefficient, nesting, ell, boundary_correction, threads).stiffness


def lod_solve(coefficient, ell, u0, f, nesting, boundary_correction='full', threads=None):
    """Coarse LOD solution u_H = R_H u_H + E^b_H u0"""
    return LodModel(coefficient, nesting, ell, boundary_correction, threads).solve(u0, f)


def global_ell(nesting):
    """Oversampling large enough for every patch to cover the domain"""
    return nesting.coarse.cells_per_axis


def _node_correction(problems, node, ell):
    fine_count = problems.nesting.fine.node_count
    total = np.zeros(fine_count)
    for element in neighborhood(problems.nesting.coarse, nodes=[node], ell=0):
        total += problems.solve(element, ell).correction(node, fine_count)
    return total


def corrector_decay_profile(coefficient, nesting, node, ell_max, boundary_correction='full'):
    """
    Energy norms |grad (C - C_ell) Lambda_z| for ell = 0..ell_max.

    C is the global corrector; the norm is the H1 seminorm with unit
    coefficient on the fine mesh.
    """
    problems = CorrectorProblems(coefficient, nesting, boundary_correction)
    laplacian = assembly.assemble_stiffness(nesting.fine, assembly.constant_coefficient(nesting.fine))
    reference = _node_correction(problems, node, global_ell(nesting))

    profile = []
    for ell in range(int(ell_max) + 1):
        diff = reference - _node_correction(problems, node, ell)
        profile.append(float(np.sqrt(max(diff @ (laplacian @ diff), 0.0))))
        logger.debug("Decay profile node %d, ell=%d: %.3e", node, ell, profile[-1])
    return profile


def fit_decay_rate(profile, floor=1e-13):
    """
    Fitted exponential decay rate c of profile[ell] ~ C exp(-c ell).

    Values at or below floor (relative to the first entry) are left out.
    """
    values = np.asarray(profile, dtype=float)
    ells = np.arange(values.size)
    usable = values > floor * max(values[0], np.finfo(float).tiny)
    if usable.sum() < 2:
        return float('nan')
    slope, _ = np.polyfit(ells[usable], np.log(values[usable]), 1)
    return float(-slope)
