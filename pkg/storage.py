"""
QuasiLocal Storage
Run directories and artifact files: Matrix Market for sparse matrices, CSV
for dense tables, JSON lines for traces and a manifest per run.
"""

import hashlib
import json
import logging
import os
import platform
import shutil

import numpy as np
import scipy
import scipy.io
import scipy.sparse as sp

import settings

logger = logging.getLogger(__name__)

OUTPUT_DIR = settings.config['output']['directory']
MANIFEST_NAME = 'manifest.json'


def get_run_dir(name):
    """
    Empty run directory under OUTPUT_DIR. Artifacts of an earlier run of the
    same experiment are removed so the manifest only lists this run.
    """
    path = os.path.join(OUTPUT_DIR, name)
    if os.path.isdir(path):
        logger.info("Clearing previous run directory %s", path)
        shutil.rmtree(path)
    os.makedirs(path)
    return path


def write_matrix(path, matrix, comment=''):
    """Symmetric sparse matrix as a Matrix Market coordinate file (lower triangle stored)"""
    if not path.endswith('.mtx'):
        path += '.mtx'
    scipy.io.mmwrite(path, sp.tril(sp.coo_matrix(matrix)).tocoo(), comment=comment, field='real',
                     precision=17, symmetry='symmetric')
    return path


def read_matrix(path):
    return sp.csr_matrix(scipy.io.mmread(path))


def write_table(path, columns, header):
    """Dense CSV with a header row; columns is a 2D array or a list of 1D columns"""
    data = np.column_stack(columns) if isinstance(columns, (list, tuple)) else np.atleast_2d(columns)
    np.savetxt(path, data, delimiter=',', fmt='%.17g', header=','.join(header), comments='')
    return path


def read_table(path):
    """(header, data) of a CSV written by write_table"""
    with open(path, 'r') as f:
        header = f.readline().strip().split(',')
    data = np.loadtxt(path, delimiter=',', skiprows=1, ndmin=2)
    return header, data


def _json_default(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def write_json(path, payload):
    with open(path, 'w') as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=_json_default)
        f.write('\n')
    return path


def read_json(path):
    with open(path, 'r') as f:
        return json.load(f)


def write_trace(path, records):
    """One JSON object per line"""
    with open(path, 'w') as f:
        for record in records:
            f.write(json.dumps(record, sort_keys=True, default=_json_default))
            f.write('\n')
    return path


def read_trace(path):
    with open(path, 'r') as f:
        return [json.loads(line) for line in f if line.strip()]


def file_digest(path):
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 16), b''):
            digest.update(chunk)
    return digest.hexdigest()


def package_versions():
    return {'python': platform.python_version(), 'numpy': np.__version__, 'scipy': scipy.__version__}


def write_manifest(run_dir, experiment, config, seeds, extra=None):
    """
    manifest.json listing config, seeds, versions and the SHA-256 digest of
    every other file in run_dir.
    """
    files = {}
    for root, _, names in os.walk(run_dir):
        for name in sorted(names):
            if name == MANIFEST_NAME:
                continue
            path = os.path.join(root, name)
            files[os.path.relpath(path, run_dir)] = file_digest(path)
    manifest = {
        'format_version': settings.config['output']['format_version'],
        'experiment': experiment,
        'config': config,
        'seeds': seeds,
        'versions': package_versions(),
        'files': dict(sorted(files.items())),
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(run_dir, MANIFEST_NAME)
    write_json(path, manifest)
    logger.info("Wrote manifest for %s with %d files", experiment, len(files))
    return path
