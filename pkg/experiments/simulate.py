"""
Forward simulation with a stored stiffness matrix for a chosen source and
boundary data, optionally compared to the fine reference solution.
"""

import logging
import os

import numpy as np

import assembly
import storage
from effective import solve_effective
from errors import MeshError
from experiments.common import finish, ground_truth, relative_gap, write_cross_sections
from experiments.config import parse_u0_spec
from mesh import build_mesh, build_nesting
from synth import coarsen, fine_reference_solve, experiment_rhs, random_boundary_data

logger = logging.getLogger(__name__)


def mesh_for_matrix(matrix, dim):
    """Coarse mesh whose node count matches a stored m x m stiffness matrix"""
    m = matrix.shape[0]
    cells = int(round(m ** (1.0 / dim))) - 1
    if cells < 1 or (cells + 1) ** dim != m:
        raise MeshError(f"A {m} x {m} matrix does not match a {dim}D Cartesian mesh")
    return build_mesh(dim, cells)


def boundary_data(spec, mesh):
    kind, value = parse_u0_spec(spec)
    n = mesh.boundary_count
    if kind == 'zero':
        return np.zeros(n)
    if kind == 'x1':
        return mesh.coordinates[mesh.boundary_nodes, 0].copy()
    if kind == 'const':
        return np.full(n, value)
    return random_boundary_data(n, 1, np.random.default_rng(value))[:, 0]


def run(cfg):
    block = cfg.simulate
    S = storage.read_matrix(block['matrix'])
    coarse = mesh_for_matrix(S, cfg.dim)
    fine = build_mesh(cfg.dim, cfg.fine_cells)
    nesting = build_nesting(coarse, fine)

    f = experiment_rhs(block['rhs'], fine)
    u0 = boundary_data(block.get('u0', 'zero'), coarse)
    solution = solve_effective(S, u0, f, nesting)
    logger.info("Simulated %s with u0=%s on %d coarse nodes", block['rhs'], block.get('u0', 'zero'), coarse.node_count)

    run_dir = storage.get_run_dir(cfg.experiment)
    axes = [f"x{k + 1}" for k in range(cfg.dim)]
    storage.write_table(
        os.path.join(run_dir, 'solution.csv'),
        [np.arange(coarse.node_count)] + [coarse.coordinates[:, k] for k in range(cfg.dim)] + [solution],
        ['node'] + axes + ['value'],
    )
    columns = {'value': solution}

    summary = {'matrix': block['matrix'], 'rhs': block['rhs'], 'u0': block.get('u0', 'zero')}
    if block.get('reference'):
        eps = build_mesh(cfg.dim, cfg.eps_cells)
        reference = coarsen(fine_reference_solve(ground_truth(cfg, eps), nesting, u0, f), nesting)
        columns['reference'] = reference
        summary['relative_gap'] = relative_gap(solution, reference, assembly.assemble_mass(coarse))
        logger.info("Relative L2 gap to the fine reference: %.3e", summary['relative_gap'])

    write_cross_sections(run_dir, 'cross', coarse, columns)
    return finish(run_dir, cfg, {'coefficient': cfg.seed}, summary)
