"""
QuasiLocal Effective Model
The coarse forward model defined by an arbitrary stiffness matrix S_H:
solutions for given boundary data, the dense effective operator, the
misfit functional against measurements and the dist_f diagnostic.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

import assembly
from errors import DimensionMismatch, InvalidMeasurements
from linsolve import factor_spd

logger = logging.getLogger(__name__)


@dataclass
class MeasurementSet:
    """
    Coarse observations Y[:, k] of the solutions for boundary data U0[:, k].

    load is the coarse load vector M_H f_H of the fixed source.
    """

    mesh: object
    boundary: np.ndarray  # n x q
    observed: np.ndarray  # m x q
    load: np.ndarray  # m
    source: np.ndarray = None  # fine nodal source, kept for provenance
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.boundary = np.atleast_2d(np.asarray(self.boundary, dtype=float).T).T
        self.observed = np.atleast_2d(np.asarray(self.observed, dtype=float).T).T
        self.load = np.asarray(self.load, dtype=float)
        n, m = self.mesh.boundary_count, self.mesh.node_count
        if self.boundary.shape[0] != n or self.observed.shape[0] != m or self.load.shape != (m,):
            raise DimensionMismatch(
                f"Measurements with boundary {self.boundary.shape}, observed {self.observed.shape}, "
                f"load {self.load.shape} do not fit a mesh with m={m}, n={n}"
            )
        if self.boundary.shape[1] != self.observed.shape[1] or self.boundary.shape[1] < 1:
            raise InvalidMeasurements(
                f"Need q >= 1 matching pairs, got {self.boundary.shape[1]} boundary data "
                f"and {self.observed.shape[1]} observations"
            )

    @property
    def q(self):
        return self.observed.shape[1]

    @cached_property
    def norm_squared(self):
        """Squared Frobenius norm of the observations (computed once)"""
        value = float(np.sum(self.observed ** 2))
        if value == 0.0:
            raise InvalidMeasurements("Measurement matrix is zero; the misfit functional is undefined")
        return value

    def subset(self, indices):
        indices = np.asarray(indices, dtype=int)
        return MeasurementSet(
            mesh=self.mesh,
            boundary=self.boundary[:, indices],
            observed=self.observed[:, indices],
            load=self.load,
            source=self.source,
            metadata=dict(self.metadata, subset=indices.tolist()),
        )


@dataclass
class EffectiveOperator:
    """
    Affine map u0 -> L(u0, f) of one stiffness matrix and source.

    boundary_part is the m x n response to the boundary hat vectors with
    f = 0; source_response is the m-vector L(0, f).
    """

    mesh: object
    boundary_part: np.ndarray
    source_response: np.ndarray
    load: np.ndarray

    @property
    def matrix(self):
        """Dense m x n operator: column k is the solution for u0 = e_k with the source"""
        return self.boundary_part + self.source_response[:, None]

    def apply(self, u0):
        u0 = np.asarray(u0, dtype=float)
        response = self.boundary_part @ u0
        return response + (self.source_response if u0.ndim == 1 else self.source_response[:, None])


class EffectiveModel:
    """Coarse solver L_{S_H} with the interior block S_{H,0} factorized once"""

    def __init__(self, stiffness, mesh, check=False):
        S = sp.csr_matrix(stiffness)
        if S.shape != (mesh.node_count,) * 2:
            raise DimensionMismatch(f"Stiffness of shape {S.shape} for a mesh with {mesh.node_count} nodes")
        self.stiffness = S
        self.mesh = mesh
        S_int = S[mesh.interior_nodes]
        self.interior_block = S_int[:, mesh.interior_nodes]
        self.coupling = S_int[:, mesh.boundary_nodes]
        self.factorization = factor_spd(self.interior_block, check=check)

    def interior_solve(self, rhs):
        return self.factorization.solve(rhs)

    def predict(self, boundary, load=None):
        """Coarse solutions for boundary data (n or n x q) and coarse load vector"""
        U0 = np.asarray(boundary, dtype=float)
        if U0.shape[0] != self.mesh.boundary_count:
            raise DimensionMismatch(f"Boundary data of length {U0.shape[0]}, mesh has {self.mesh.boundary_count}")
        rhs = -(self.coupling @ U0)
        if load is not None:
            load_int = assembly.restriction(load, self.mesh)
            rhs = rhs + (load_int if U0.ndim == 1 else load_int[:, None])
        interior = self.interior_solve(rhs)
        return assembly.embed_interior(interior, self.mesh) + assembly.extension(U0, self.mesh)

    def solve(self, u0, load=None):
        return self.predict(u0, load)

    def operator(self, load):
        n = self.mesh.boundary_count
        return EffectiveOperator(
            mesh=self.mesh,
            boundary_part=self.predict(np.eye(n)),
            source_response=self.predict(np.zeros(n), load),
            load=np.asarray(load, dtype=float),
        )

    def functional(self, data):
        """Misfit J_H of this model against a MeasurementSet or a complete EffectiveOperator"""
        if isinstance(data, EffectiveOperator):
            return misfit(data.matrix, self.operator(data.load).matrix)
        return misfit(data.observed, self.predict(data.boundary, data.load), data.norm_squared)


def source_load(f, nesting):
    """Coarse load vector M_H Pi_H f of a fine nodal source"""
    return assembly.load_vector(f, nesting)


def solve_effective(stiffness, u0, f, nesting):
    """Coarse solution of the S_H-system for boundary data u0 and fine source f"""
    return EffectiveModel(stiffness, nesting.coarse).solve(u0, source_load(f, nesting))


def build_effective_matrix(stiffness, f, nesting):
    """EffectiveOperator of S_H for the fixed fine source f"""
    return EffectiveModel(stiffness, nesting.coarse).operator(source_load(f, nesting))


def misfit(target, prediction, target_norm_squared=None):
    """1/2 |target|_F^-2 |target - prediction|_F^2"""
    target = np.asarray(target, dtype=float)
    if target_norm_squared is None:
        target_norm_squared = float(np.sum(target ** 2))
    if target_norm_squared == 0.0:
        raise InvalidMeasurements("Measurement matrix is zero; the misfit functional is undefined")
    return 0.5 * float(np.sum((target - prediction) ** 2)) / target_norm_squared


def functional_JH(stiffness, data):
    """J_H(S_H) for a MeasurementSet or a complete EffectiveOperator"""
    return EffectiveModel(stiffness, data.mesh).functional(data)


def dist_f_diagnostic(op_a, op_b, mass=None, boundary_mass=None):
    """
    Discrete dist_f between two effective operators on the same coarse mesh.

    The u0-part uses the operator norm from the boundary L2 space (boundary
    mass matrix) to L2(Omega) (domain mass matrix), i.e. the largest singular
    value of L_M' D L_b^-T for Cholesky factors L_M, L_b. The f-part is the
    mass norm of the difference of the source responses.
    """
    mesh = op_a.mesh
    if op_b.boundary_part.shape != op_a.boundary_part.shape:
        raise DimensionMismatch("Operators live on different meshes")
    M = (mass if mass is not None else assembly.assemble_mass(mesh)).toarray()
    Mb = (boundary_mass if boundary_mass is not None else assembly.assemble_boundary_mass(mesh)).toarray()
    L_M = la.cholesky(M, lower=True)
    L_b = la.cholesky(Mb, lower=True)

    D = op_a.boundary_part - op_b.boundary_part
    weighted = la.solve_triangular(L_b, (L_M.T @ D).T, lower=True).T
    operator_norm = la.svdvals(weighted)[0] if weighted.size else 0.0
    d_f = op_a.source_response - op_b.source_response
    source_norm_squared = max(float(d_f @ (M @ d_f)), 0.0)
    return float(np.sqrt(operator_norm ** 2 + source_norm_squared))
