"""
QuasiLocal Synthetic Data
Ground-truth coefficients, experiment right-hand sides, fine-scale reference
solves, coarse nodal sampling and multiplicative noise.
"""

import logging
from dataclasses import dataclass

import numpy as np

import assembly
from effective import MeasurementSet
from errors import ConfigError, DimensionMismatch, MeshError
from linsolve import factor_spd
from workers.pool import parallel_map, resolve_threads

logger = logging.getLogger(__name__)

NOISE_LIMIT = 0.05
RHS_NAMES = ('unit', 'g1', 'g2')
SINE_FREQUENCY = 2 ** 8


@dataclass
class NoiseModel:
    """Multiplicative noise v -> v (1 + xi), xi ~ U(-sigma, sigma)"""

    sigma: float = 0.0
    seed: int = 0
    distribution: str = 'uniform'

    def __post_init__(self):
        if self.sigma < 0:
            raise ConfigError(f"Noise intensity must be >= 0, got {self.sigma}")
        if self.distribution != 'uniform':
            raise ConfigError(f"Unsupported noise distribution {self.distribution!r}")
        if self.sigma > NOISE_LIMIT:
            logger.warning("Noise intensity %.3f exceeds the 5%% experiment range", self.sigma)

    @property
    def in_experiment_range(self):
        return self.sigma <= NOISE_LIMIT

    def describe(self):
        return {
            'sigma': self.sigma,
            'seed': self.seed,
            'distribution': self.distribution,
            'in_experiment_range': self.in_experiment_range,
        }


def random_coefficient(mesh, lo, hi, seed):
    """Independent U(lo, hi) values on every element of mesh"""
    if not 0 < lo <= hi:
        raise ConfigError(f"Coefficient range must satisfy 0 < lo <= hi, got ({lo}, {hi})")
    rng = np.random.default_rng(seed)
    return assembly.Coefficient(mesh, rng.uniform(lo, hi, mesh.element_count))


def sine_coefficient_1d(mesh):
    """A(x) = 1 / (2 + sin(2^8 pi x)) sampled at element midpoints"""
    if mesh.dim != 1:
        raise MeshError("The oscillating sine coefficient is one-dimensional")
    if mesh.cells_per_axis < 2 * SINE_FREQUENCY:
        raise MeshError(
            f"{mesh.cells_per_axis} cells do not resolve the 2^-8 oscillation; need at least {2 * SINE_FREQUENCY}"
        )
    x = mesh.element_midpoints[:, 0]
    return assembly.Coefficient(mesh, 1.0 / (2.0 + np.sin(SINE_FREQUENCY * np.pi * x)))


def _tent(x):
    return np.where(x < 0.5, x, 1.0 - x)


def experiment_rhs(name, mesh):
    """Nodal samples of the source f = 1, g1 or g2 on mesh"""
    if name not in RHS_NAMES:
        raise ConfigError(f"Unknown right-hand side {name!r}; expected one of {RHS_NAMES}")
    if name == 'unit':
        return np.ones(mesh.node_count)
    if mesh.dim != 2:
        raise MeshError(f"Right-hand side {name} is defined on the unit square")
    x1, x2 = mesh.coordinates[:, 0], mesh.coordinates[:, 1]
    if name == 'g1':
        return 20.0 * _tent(x1) * _tent(x2)
    return np.where(x1 >= 0.5, 10.0, 0.0)


class FineSolver:
    """Fine FEM solver with the interior stiffness block factorized once"""

    def __init__(self, coefficient, mesh):
        self.mesh = mesh
        self.stiffness = assembly.assemble_stiffness(mesh, coefficient)
        self.mass = assembly.assemble_mass(mesh)
        S_int = self.stiffness[mesh.interior_nodes]
        self.coupling = S_int[:, mesh.boundary_nodes]
        self.factorization = factor_spd(S_int[:, mesh.interior_nodes])

    def solve(self, boundary, f=None):
        """Fine solutions for fine boundary values (n_h or n_h x k) and a fine source"""
        G = np.asarray(boundary, dtype=float)
        rhs = -(self.coupling @ G)
        if f is not None:
            load = assembly.restriction(self.mass @ np.asarray(f, dtype=float), self.mesh)
            rhs = rhs + (load if G.ndim == 1 else load[:, None])
        interior = self.factorization.solve(rhs)
        return assembly.embed_interior(interior, self.mesh) + assembly.extension(G, self.mesh)


def prolongate_boundary(u0, nesting):
    """Fine boundary values of coarse boundary data (Q1 interpolation along the boundary)"""
    coarse_full = assembly.extension(u0, nesting.coarse)
    return assembly.trace(assembly.inject(coarse_full, nesting), nesting.fine)


def fine_reference_solve(coefficient, nesting, u0, f, solver=None):
    """Fine FEM solution for coarse boundary data u0 and fine source f"""
    solver = solver or FineSolver(coefficient, nesting.fine)
    return solver.solve(prolongate_boundary(u0, nesting), f)


def coarsen(fine_vector, nesting):
    """Values at the fine nodes that coincide with coarse nodes"""
    v = np.asarray(fine_vector)
    if v.shape[0] != nesting.fine.node_count:
        raise DimensionMismatch(f"Fine vector of length {v.shape[0]}, mesh has {nesting.fine.node_count} nodes")
    return v[nesting.coarse_to_fine_node]


def apply_noise(vectors, model, rows=None):
    """
    Entrywise multiplicative noise, reproducible from model.seed.

    rows restricts the perturbation to those row indices; the draw always
    covers the full shape so a seed gives the same factors either way.
    """
    v = np.asarray(vectors, dtype=float)
    if model.sigma == 0:
        return v.copy()
    rng = np.random.default_rng(model.seed)
    factors = 1.0 + rng.uniform(-model.sigma, model.sigma, size=v.shape)
    if rows is not None:
        keep = np.ones(v.shape[0], dtype=bool)
        keep[np.asarray(rows, dtype=int)] = False
        factors[keep] = 1.0
    return v * factors


def random_boundary_data(n, q, rng):
    """q boundary data with independent U(-1, 1) nodal values"""
    return rng.uniform(-1.0, 1.0, size=(n, q))


def generate_measurements(coefficient, nesting, f, boundary='full', q=None, noise=None, seed=0,
                          threads=None, rhs_name=None):
    """
    Noisy coarse observations of fine solutions.

    Only interior rows carry noise; boundary rows are the prescribed data.

    boundary='full' uses all n boundary hat vectors, boundary='random' draws q
    boundary data with U(-1, 1) nodal values from seed.
    """
    coarse = nesting.coarse
    n = coarse.boundary_count
    noise = noise or NoiseModel()
    if boundary == 'full':
        U0 = np.eye(n)
    elif boundary == 'random':
        if not q or q < 1:
            raise ConfigError(f"Random boundary mode needs q >= 1, got {q}")
        U0 = random_boundary_data(n, int(q), np.random.default_rng(seed))
    else:
        raise ConfigError(f"Unknown boundary mode {boundary!r}; expected 'full' or 'random'")

    solver = FineSolver(coefficient, nesting.fine)
    fine_boundary = prolongate_boundary(U0, nesting)
    chunks = np.array_split(np.arange(U0.shape[1]), resolve_threads(threads))
    chunks = [chunk for chunk in chunks if chunk.size]
    solved = parallel_map(lambda cols: coarsen(solver.solve(fine_boundary[:, cols], f), nesting), chunks, threads)
    observed = apply_noise(np.hstack(solved), noise, rows=coarse.interior_nodes)
    logger.info("Generated %d measurements (%s boundary data, sigma=%.3f)", U0.shape[1], boundary, noise.sigma)

    return MeasurementSet(
        mesh=coarse,
        boundary=U0,
        observed=observed,
        load=assembly.load_vector(f, nesting),
        source=np.asarray(f, dtype=float),
        metadata={
            'boundary_mode': boundary,
            'boundary_distribution': 'uniform(-1, 1)' if boundary == 'random' else 'hat basis',
            'noise': noise.describe(),
            'seed': seed,
            'rhs': rhs_name,
        },
    )
