"""
Forward convergence: L2 errors of coarse FEM and LOD solutions against one
fine FEM reference, for a sequence of coarse meshes.

The FEM error uses the Q1 function of the coarse solution. The LOD error
uses the corrected fine function (1 - C_ell) u_H; err_lod_nodal keeps the
error of the plain Q1 function of the LOD coarse values.
"""

import logging
import os

import numpy as np

import assembly
import storage
from effective import solve_effective
from experiments.common import finish
from lod import LodModel
from mesh import build_mesh, build_nesting
from synth import FineSolver, experiment_rhs, random_coefficient

logger = logging.getLogger(__name__)

COLUMNS = ['H', 'err_fem', 'err_lod', 'err_lod_nodal']


def l2_error(approximation, reference, mass):
    """Mass-matrix L2 norm of reference - approximation on the fine mesh"""
    difference = reference - approximation
    return float(np.sqrt(max(difference @ (mass @ difference), 0.0)))


def observed_rate(sizes, errors):
    """Slope of log(error) against log(H); nan when fewer than two positive errors"""
    sizes, errors = np.asarray(sizes, dtype=float), np.asarray(errors, dtype=float)
    usable = errors > 0
    if usable.sum() < 2:
        return float('nan')
    slope, _ = np.polyfit(np.log(sizes[usable]), np.log(errors[usable]), 1)
    return float(slope)


def run(cfg):
    block = cfg.convergence
    eps = build_mesh(cfg.dim, block['eps_cells'])
    fine = build_mesh(cfg.dim, block['fine_cells'])
    lo, hi = cfg.coefficient_range
    coefficient = random_coefficient(eps, lo, hi, cfg.seed)
    f = experiment_rhs('unit', fine)

    solver = FineSolver(coefficient, fine)
    reference = solver.solve(np.zeros(fine.boundary_count), f)
    mass = solver.mass

    rows = []
    for cells in sorted(block['coarse_levels']):
        coarse = build_mesh(cfg.dim, cells)
        nesting = build_nesting(coarse, fine)
        u0 = np.zeros(coarse.boundary_count)
        fem = solve_effective(assembly.galerkin_stiffness(coefficient, nesting), u0, f, nesting)
        model = LodModel(coefficient, nesting, block['ell'], threads=cfg.threads)
        lod = model.solve(u0, f)
        rows.append((
            coarse.mesh_size,
            l2_error(assembly.inject(fem, nesting), reference, mass),
            l2_error(model.corrected_solution(lod), reference, mass),
            l2_error(assembly.inject(lod, nesting), reference, mass),
        ))
        logger.info("H=%.4g: FEM error %.3e, LOD error %.3e", coarse.mesh_size, rows[-1][1], rows[-1][2])

    table = np.array(rows)
    run_dir = storage.get_run_dir(cfg.experiment)
    storage.write_table(os.path.join(run_dir, 'convergence.csv'), table, COLUMNS)

    return finish(run_dir, cfg, {'coefficient': cfg.seed}, {
        'H': table[:, 0].tolist(),
        'err_fem': table[:, 1].tolist(),
        'err_lod': table[:, 2].tolist(),
        'err_lod_nodal': table[:, 3].tolist(),
        'rate_fem': observed_rate(table[:, 0], table[:, 1]),
        'rate_lod': observed_rate(table[:, 0], table[:, 2]),
    })
