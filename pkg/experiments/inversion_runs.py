"""
Reconstruction runs: Gauss-Newton inversion from full boundary data
(invert-full) and from q random boundary data (invert-partial).
"""

import logging
import os

import numpy as np

import assembly
import storage
from effective import solve_effective
from experiments.common import build_meshes, finish, ground_truth, relative_gap, write_cross_sections
from inversion import InversionConfig, initial_guess, run_inversion
from pattern import build_pattern
from synth import NoiseModel, coarsen, fine_reference_solve, generate_measurements, experiment_rhs

logger = logging.getLogger(__name__)

ROBUSTNESS_RHS = ('g1', 'g2')


def _seeds(cfg):
    return {
        'coefficient': cfg.seed,
        'measurements': cfg.seed + 1,
        'noise': cfg.seed + 2,
        'initial_guess': cfg.seed + 3,
        'subsets': cfg.seed + 4,
    }


def _invert(cfg, ell, measurements, S0, run_dir, stem, **overrides):
    pattern = build_pattern(measurements.mesh, ell)
    options = dict(cfg.inversion, seed=_seeds(cfg)['subsets'])
    options.update(overrides)
    config = InversionConfig.from_settings(ell, **options)
    trace = run_inversion(config, measurements, S0, pattern)

    storage.write_trace(os.path.join(run_dir, f"trace_{stem}.jsonl"), trace.records)
    storage.write_matrix(
        os.path.join(run_dir, f"S_{stem}.mtx"), trace.matrix, comment=f"reconstructed stiffness, ell={ell}"
    )
    return trace


def _robustness(traces, coefficient, nesting, run_dir):
    """Relative coarse L2 gaps to fine references for sources the inversion never saw"""
    coarse = nesting.coarse
    mass = assembly.assemble_mass(coarse)
    u0 = np.zeros(coarse.boundary_count)
    gaps = {}
    for name in ROBUSTNESS_RHS:
        f = experiment_rhs(name, nesting.fine)
        reference = coarsen(fine_reference_solve(coefficient, nesting, u0, f), nesting)
        columns = {'reference': reference}
        for ell, trace in traces.items():
            solution = solve_effective(trace.matrix, u0, f, nesting)
            gaps.setdefault(ell, {})[name] = relative_gap(solution, reference, mass)
            columns[f"ell{ell}"] = solution
        write_cross_sections(run_dir, f"cross_{name}", coarse, columns)

    rows = [[ell] + [gaps[ell][name] for name in ROBUSTNESS_RHS] for ell in sorted(gaps)]
    storage.write_table(
        os.path.join(run_dir, 'robustness.csv'), np.array(rows, dtype=float), ['ell'] + [f"gap_{n}" for n in ROBUSTNESS_RHS]
    )
    return gaps


def run_full(cfg):
    """All n boundary hat functions as measurements, unit-coefficient FEM start"""
    coarse, eps, fine, nesting = build_meshes(cfg)
    seeds = _seeds(cfg)
    coefficient = ground_truth(cfg, eps)
    f = experiment_rhs('unit', fine)
    measurements = generate_measurements(
        coefficient, nesting, f, boundary='full', noise=NoiseModel(cfg.noise, seeds['noise']),
        seed=seeds['measurements'], threads=cfg.threads, rhs_name='unit',
    )
    S0 = initial_guess('unit', coarse)

    run_dir = storage.get_run_dir(cfg.experiment)
    traces = {ell: _invert(cfg, ell, measurements, S0, run_dir, f"ell{ell}") for ell in cfg.ells}

    gaps = _robustness(traces, coefficient, nesting, run_dir) if cfg.dim == 2 else {}
    return finish(run_dir, cfg, seeds, {
        'q': measurements.q,
        'final_J': {ell: trace.final_value for ell, trace in traces.items()},
        'status': {ell: trace.status for ell, trace in traces.items()},
        'robustness': gaps,
    })


def run_partial(cfg):
    """q random boundary data, random coarse-coefficient start, full and randomized Gauss-Newton"""
    coarse, eps, fine, nesting = build_meshes(cfg)
    seeds = _seeds(cfg)
    coefficient = ground_truth(cfg, eps)
    f = experiment_rhs('unit', fine)
    measurements = generate_measurements(
        coefficient, nesting, f, boundary='random', q=cfg.q, noise=NoiseModel(cfg.noise, seeds['noise']),
        seed=seeds['measurements'], threads=cfg.threads, rhs_name='unit',
    )
    S0 = initial_guess(
        'random', coarse, rng=np.random.default_rng(seeds['initial_guess']), value_range=tuple(cfg.initial_range)
    )

    run_dir = storage.get_run_dir(cfg.experiment)
    traces = {}
    for variant, randomized in (('full', False), ('randomized', True)):
        for ell in cfg.ells:
            traces[(variant, ell)] = _invert(
                cfg, ell, measurements, S0, run_dir, f"{variant}_ell{ell}", randomized=randomized
            )

    u0 = coarse.coordinates[coarse.boundary_nodes, 0]
    reference = coarsen(fine_reference_solve(coefficient, nesting, u0, f), nesting)
    columns = {'reference': reference}
    for (variant, ell), trace in traces.items():
        columns[f"{variant}_ell{ell}"] = solve_effective(trace.matrix, u0, f, nesting)
    write_cross_sections(run_dir, 'cross_u0_x1', coarse, columns)

    return finish(run_dir, cfg, seeds, {
        'q': measurements.q,
        'final_J': {f"{variant}_ell{ell}": trace.final_value for (variant, ell), trace in traces.items()},
        'status': {f"{variant}_ell{ell}": trace.status for (variant, ell), trace in traces.items()},
    })
