"""
Corrector decay: energy norm of C - C_ell for the oscillating 1D
coefficient, plus the corrected basis function of the middle node.
"""

import logging
import os

import numpy as np

import storage
from experiments.common import finish
from lod import LodModel, corrector_decay_profile, fit_decay_rate, global_ell
from mesh import build_mesh, build_nesting
from synth import sine_coefficient_1d

logger = logging.getLogger(__name__)


def run(cfg):
    block = cfg.decay
    coarse = build_mesh(1, block['coarse_cells'])
    fine = build_mesh(1, block['fine_cells'])
    nesting = build_nesting(coarse, fine)
    coefficient = sine_coefficient_1d(fine)
    node = coarse.cells_per_axis // 2
    ell_max = int(block['ell_max'])

    profile = corrector_decay_profile(coefficient, nesting, node, ell_max)
    rate = fit_decay_rate(profile)
    logger.info("Corrector decay at node %d: fitted rate %.3f", node, rate)

    run_dir = storage.get_run_dir(cfg.experiment)
    storage.write_table(
        os.path.join(run_dir, 'decay.csv'), [np.arange(ell_max + 1), np.asarray(profile)], ['ell', 'energy']
    )

    basis_files = []
    for ell in sorted({min(ell, global_ell(nesting)) for ell in cfg.ells} | {global_ell(nesting)}):
        basis = LodModel(coefficient, nesting, ell, threads=cfg.threads).corrected_basis(node)
        path = os.path.join(run_dir, f"corrected_basis_ell{ell}.csv")
        storage.write_table(
            path,
            [fine.coordinates[:, 0], basis['hat'], basis['correction'], basis['corrected']],
            ['x', 'hat', 'correction', 'corrected'],
        )
        basis_files.append(os.path.basename(path))

    return finish(run_dir, cfg, {'coefficient': None}, {
        'node': node,
        'profile': profile,
        'fitted_rate': rate,
        'basis_files': basis_files,
    })
