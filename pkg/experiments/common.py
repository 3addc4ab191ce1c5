"""
Helpers shared by the experiment runners
"""

import logging
import os

import numpy as np

import storage
from errors import MeshError
from mesh import build_mesh, build_nesting
from synth import random_coefficient

logger = logging.getLogger(__name__)


def build_meshes(cfg):
    """(coarse, eps, fine) meshes and the coarse/fine nesting of an experiment"""
    coarse = build_mesh(cfg.dim, cfg.coarse_cells)
    eps = build_mesh(cfg.dim, cfg.eps_cells)
    fine = build_mesh(cfg.dim, cfg.fine_cells)
    return coarse, eps, fine, build_nesting(coarse, fine)


def ground_truth(cfg, eps_mesh):
    """Reference coefficient, piecewise constant on the eps mesh"""
    lo, hi = cfg.coefficient_range
    return random_coefficient(eps_mesh, lo, hi, cfg.seed)


def cross_section(mesh, values, axis=1, at=0.5):
    """
    (coordinates, values) along the line x_axis = at, ordered by the other
    coordinate. A one-dimensional mesh returns all nodes.
    """
    values = np.asarray(values)
    if mesh.dim == 1:
        return mesh.coordinates[:, 0], values
    on_line = np.flatnonzero(np.isclose(mesh.coordinates[:, axis], at))
    if on_line.size == 0:
        raise MeshError(f"No nodes of the mesh lie on x{axis + 1} = {at}")
    other = mesh.coordinates[on_line, 1 - axis]
    order = np.argsort(other)
    return other[order], values[on_line[order]]


def write_cross_sections(run_dir, stem, mesh, columns):
    """
    CSV cross sections at x2 = 0.5 and x1 = 0.5 of named nodal vectors;
    one file per line (a single file in 1D).
    """
    names = list(columns)
    lines = [('x', 1)] if mesh.dim == 1 else [('x2', 1), ('x1', 0)]
    paths = []
    for label, axis in lines:
        sections = [cross_section(mesh, columns[name], axis) for name in names]
        coordinate = sections[0][0]
        header = ['x'] if mesh.dim == 1 else [f"x{2 - axis}"]
        suffix = '' if mesh.dim == 1 else f"_{label}"
        path = os.path.join(run_dir, f"{stem}{suffix}.csv")
        storage.write_table(path, [coordinate] + [values for _, values in sections], header + names)
        paths.append(path)
    return paths


def relative_gap(approximation, reference, mass):
    """|approximation - reference|_M / |reference|_M"""
    difference = np.asarray(approximation) - np.asarray(reference)
    denominator = float(reference @ (mass @ reference))
    numerator = float(difference @ (mass @ difference))
    if denominator == 0.0:
        return float(np.sqrt(numerator))
    return float(np.sqrt(numerator / denominator))


def finish(run_dir, cfg, seeds, summary):
    """Write summary.json and the manifest; returns summary with the run directory"""
    summary = dict(summary, run_dir=run_dir)
    storage.write_json(os.path.join(run_dir, 'summary.json'), summary)
    storage.write_manifest(run_dir, cfg.experiment, cfg.as_dict(), seeds)
    logger.info("%s results in %s", cfg.experiment, run_dir)
    return summary
