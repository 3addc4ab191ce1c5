"""
Experiment configuration: defaults from config.yaml, an optional JSON/YAML
file (or the manifest of an earlier run), then command-line overrides.
"""

import copy
import logging
from dataclasses import asdict, dataclass, field, fields

import settings
from errors import ConfigError
from mesh import is_power_of_two
from synth import RHS_NAMES

logger = logging.getLogger(__name__)

EXPERIMENTS = ('corrector-decay', 'forward-convergence', 'invert-full', 'invert-partial', 'simulate')
U0_KINDS = ('zero', 'x1', 'const', 'random')


@dataclass
class ExperimentConfig:
    experiment: str
    dim: int = 2
    coarse_cells: int = 16
    eps_cells: int = 64
    fine_cells: int = 128
    ells: list = field(default_factory=lambda: [0, 1, 2, 3])
    seed: int = 0
    noise: float = 0.0
    q: int = 24
    coefficient_range: list = field(default_factory=lambda: [1.0, 50.0])
    initial_range: list = field(default_factory=lambda: [0.1, 10.0])
    threads: int = 1
    paper_scale: bool = False
    inversion: dict = field(default_factory=dict)
    decay: dict = field(default_factory=dict)
    convergence: dict = field(default_factory=dict)
    simulate: dict = field(default_factory=dict)

    def as_dict(self):
        return asdict(self)


def parse_ell_list(text):
    """'0,1,2' -> [0, 1, 2]"""
    if isinstance(text, (list, tuple)):
        items = list(text)
    else:
        items = [part for part in str(text).split(',') if part.strip()]
    try:
        return [int(str(item).strip()) for item in items]
    except ValueError:
        raise ConfigError(f"Oversampling list must be comma-separated integers, got {text!r}")


def parse_u0_spec(spec):
    """('zero'|'x1'|'const'|'random', parameter) from 'zero', 'x1', 'const:<c>' or 'random:<seed>'"""
    kind, _, arg = str(spec).partition(':')
    if kind not in U0_KINDS:
        raise ConfigError(f"Unknown boundary data {spec!r}; expected one of {U0_KINDS}")
    if kind in ('zero', 'x1'):
        if arg:
            raise ConfigError(f"Boundary data {kind!r} takes no parameter")
        return kind, None
    try:
        return kind, (float(arg) if kind == 'const' else int(arg))
    except ValueError:
        raise ConfigError(f"Bad parameter in boundary data {spec!r}")


def _valid_range(values):
    return len(values) == 2 and 0 < values[0] <= values[1]


def validate_experiment_config(cfg):
    """
    Validate an experiment configuration
    Returns (is_valid, error_message)
    """
    if cfg.experiment not in EXPERIMENTS:
        return False, f"Unknown experiment {cfg.experiment!r}"

    if cfg.dim not in (1, 2):
        return False, f"Dimension must be 1 or 2, got {cfg.dim}"

    for name in ('coarse_cells', 'eps_cells', 'fine_cells'):
        value = getattr(cfg, name)
        if not isinstance(value, int) or not is_power_of_two(value):
            return False, f"{name} must be a power of two, got {value}"

    if not cfg.coarse_cells < cfg.eps_cells <= cfg.fine_cells:
        return False, (
            f"Meshes must be nested coarse < eps <= fine, got {cfg.coarse_cells}, {cfg.eps_cells}, {cfg.fine_cells}"
        )

    if not cfg.ells or any(ell < 0 for ell in cfg.ells):
        return False, f"Oversampling list must be non-empty with ell >= 0, got {cfg.ells}"

    if cfg.noise < 0:
        return False, f"Noise intensity must be >= 0, got {cfg.noise}"

    if cfg.q < 1:
        return False, f"Number of measurements must be >= 1, got {cfg.q}"

    if not _valid_range(cfg.coefficient_range):
        return False, f"Coefficient range must satisfy 0 < lo <= hi, got {cfg.coefficient_range}"

    if not _valid_range(cfg.initial_range):
        return False, f"Initial-guess range must satisfy 0 < lo <= hi, got {cfg.initial_range}"

    if cfg.threads < 1:
        return False, f"threads must be >= 1, got {cfg.threads}"

    if cfg.experiment == 'corrector-decay':
        coarse, fine = cfg.decay.get('coarse_cells'), cfg.decay.get('fine_cells')
        if not (is_power_of_two(coarse) and is_power_of_two(fine)) or coarse >= fine:
            return False, f"Decay meshes must be nested powers of two with coarse < fine, got {coarse}, {fine}"
        if cfg.decay.get('ell_max', -1) < 0:
            return False, "Decay ell_max must be >= 0"

    if cfg.experiment == 'forward-convergence':
        levels = cfg.convergence.get('coarse_levels') or []
        eps, fine = cfg.convergence.get('eps_cells'), cfg.convergence.get('fine_cells')
        if not levels or not all(is_power_of_two(n) for n in levels):
            return False, f"Convergence levels must be powers of two, got {levels}"
        if not (is_power_of_two(eps) and is_power_of_two(fine)) or max(levels) >= fine or eps > fine:
            return False, "Convergence meshes must be nested below the fine reference mesh"
        if cfg.convergence.get('ell', -1) < 0:
            return False, "Convergence ell must be >= 0"

    if cfg.experiment == 'simulate':
        if not cfg.simulate.get('matrix'):
            return False, "simulate needs a stiffness matrix file"
        if cfg.simulate.get('rhs') not in RHS_NAMES:
            return False, f"Unknown right-hand side {cfg.simulate.get('rhs')!r}; expected one of {RHS_NAMES}"
        try:
            parse_u0_spec(cfg.simulate.get('u0', 'zero'))
        except ConfigError as e:
            return False, str(e)

    return True, None


def _defaults(experiment, paper_scale):
    data = copy.deepcopy(settings.config['experiment'])
    if paper_scale:
        data.update(settings.config['paper_scale'])
    for block in ('decay', 'convergence', 'simulate'):
        data[block] = copy.deepcopy(settings.config[block])
    data['inversion'] = {}
    data['threads'] = settings.config['output']['threads']
    data['paper_scale'] = bool(paper_scale)
    data['experiment'] = experiment
    return data


def build_experiment_config(experiment, raw=None, overrides=None, paper_scale=False):
    """
    ExperimentConfig for one experiment. raw is the mapping read from a
    --config file; a run manifest is recognized by its 'config' entry.
    Overrides with value None are ignored.
    """
    data = _defaults(experiment, paper_scale)
    raw = dict(raw or {})
    if isinstance(raw.get('config'), dict) and 'experiment' in raw:
        if raw['experiment'] != experiment:
            logger.warning("Manifest is for %s, running %s", raw['experiment'], experiment)
        raw = dict(raw['config'])
    raw.pop('experiment', None)

    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"Unknown experiment settings: {', '.join(unknown)}")
    data = settings.merge(data, raw)

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in ('decay', 'convergence', 'simulate', 'inversion'):
            data[key] = settings.merge(data[key], {k: v for k, v in value.items() if v is not None})
        else:
            data[key] = value
    data['ells'] = parse_ell_list(data['ells'])

    cfg = ExperimentConfig(**data)
    is_valid, error = validate_experiment_config(cfg)
    if not is_valid:
        raise ConfigError(error)
    return cfg
