"""
QuasiLocal Settings
Loads config.yaml defaults, applies .env / environment overrides.
"""

import copy
import logging
import os

import yaml
from dotenv import load_dotenv

from errors import ConfigError

load_dotenv()

logger = logging.getLogger(__name__)

CONFIG_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'config.yaml')

DEFAULTS = {
    'solver': {
        'factor_rtol': 1e-12,
        'saddle_rtol': 1e-10,
        'dense_limit': 3000,
        'jacobian_budget_bytes': 200_000_000,
        'normal_budget_bytes': 400_000_000,
        'lsqr_iter_lim': 400,
    },
    'inversion': {
        'max_iters': 20,
        'eta': None,
        'eta_relative': 1e-8,
        'gamma': 0.0,
        'armijo': {
            'c1': 1e-4,
            'shrink': 0.5,
            'initial_step': 1.0,
            'max_backtracks': 30,
        },
        'randomized': False,
        'fraction': 0.5,
        'stall_tolerance': 1e-10,
        'stall_window': 3,
    },
    'experiment': {
        'dim': 2,
        'coarse_cells': 16,
        'eps_cells': 64,
        'fine_cells': 128,
        'ells': [0, 1, 2, 3],
        'seed': 20200401,
        'noise': 0.05,
        'q': 24,
        'coefficient_range': [1.0, 50.0],
        'initial_range': [0.1, 10.0],
    },
    'decay': {
        'coarse_cells': 16,
        'fine_cells': 512,
        'ell_max': 6,
    },
    'convergence': {
        'coarse_levels': [4, 8, 16, 32],
        'eps_cells': 64,
        'fine_cells': 256,
        'ell': 2,
    },
    'simulate': {
        'matrix': None,
        'rhs': 'g1',
        'u0': 'zero',
        'reference': False,
    },
    'paper_scale': {
        'coarse_cells': 32,
        'eps_cells': 128,
        'fine_cells': 512,
        'q': 40,
    },
    'output': {
        'directory': 'runs',
        'threads': 1,
        'format_version': 1,
    },
}

ENV_OVERRIDES = {
    'QUASILOCAL_OUTPUT_DIR': ('output', 'directory', str),
    'QUASILOCAL_THREADS': ('output', 'threads', int),
}


def merge(base, override):
    """Recursively merge override into a copy of base"""
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def read_yaml(path):
    """Read a YAML (or JSON) document, raising ConfigError on bad input"""
    try:
        with open(path, 'r') as f:
            data = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}")
    except yaml.YAMLError as e:
        raise ConfigError(f"Malformed config file {path}: {e}")
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must contain a mapping")
    return data


def load_config(path=None):
    """Load config.yaml merged over the built-in defaults, then env overrides"""
    config_path = path or CONFIG_PATH
    if os.path.exists(config_path):
        config = merge(DEFAULTS, read_yaml(config_path))
    else:
        logger.debug("No config file at %s, using defaults", config_path)
        config = copy.deepcopy(DEFAULTS)

    for var, (section, key, cast) in ENV_OVERRIDES.items():
        raw = os.getenv(var)
        if raw:
            try:
                config[section][key] = cast(raw)
            except ValueError:
                raise ConfigError(f"Environment variable {var}={raw!r} is not a valid {cast.__name__}")
    return config


config = load_config()


def solver_settings():
    """Solver tolerances and limits of the active configuration"""
    return config['solver']
