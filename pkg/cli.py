#!/usr/bin/env python3
"""
QuasiLocal command line
Runs the homogenization and reconstruction experiments and writes their
artifacts to a run directory.
"""

import logging
import os
import sys

import click
from colorama import Fore, Style, init

import settings
import storage
from errors import ConfigError, NumericalError, QuasiLocalError
from experiments import RUNNERS
from experiments.config import build_experiment_config

init(autoreset=True)

logger = logging.getLogger('quasilocal')

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_FAILURE = 1

LEVEL_COLORS = {
    logging.DEBUG: Fore.CYAN,
    logging.INFO: Fore.GREEN,
    logging.WARNING: Fore.YELLOW,
    logging.ERROR: Fore.RED,
    logging.CRITICAL: Fore.RED + Style.BRIGHT,
}


class ColorFormatter(logging.Formatter):
    def format(self, record):
        message = super().format(record)
        return f"{LEVEL_COLORS.get(record.levelno, '')}{message}{Style.RESET_ALL}"


def setup_logging(verbose=0):
    """Root handler on stderr; -v gives INFO, -vv DEBUG, else QUASILOCAL_LOG_LEVEL"""
    if verbose >= 2:
        level = logging.DEBUG
    elif verbose == 1:
        level = logging.INFO
    else:
        level = getattr(logging, os.getenv('QUASILOCAL_LOG_LEVEL', 'WARNING').upper(), logging.WARNING)

    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, '_quasilocal', False):
            root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(ColorFormatter('%(asctime)s %(levelname)s %(name)s: %(message)s', '%H:%M:%S'))
    handler._quasilocal = True
    root.addHandler(handler)
    root.setLevel(level)
    return level


def run_experiment(ctx, name, **block_overrides):
    """Build the configuration, run one experiment and map failures to exit codes"""
    options = ctx.obj
    try:
        raw = settings.read_yaml(options['config_path']) if options['config_path'] else None
        overrides = {
            'seed': options['seed'],
            'ells': options['ells'],
            'noise': options['noise'],
            'threads': options['threads'],
        }
        overrides.update(block_overrides)
        cfg = build_experiment_config(name, raw, overrides, paper_scale=options['paper_scale'])
    except ConfigError as e:
        click.echo(f"{Fore.RED}✗ Configuration error: {e}", err=True)
        ctx.exit(EXIT_CONFIG)

    if options['out']:
        storage.OUTPUT_DIR = options['out']

    click.echo(f"{Fore.CYAN}Running {name} ...")
    try:
        summary = RUNNERS[name](cfg)
    except ConfigError as e:
        click.echo(f"{Fore.RED}✗ Configuration error: {e}", err=True)
        ctx.exit(EXIT_CONFIG)
    except NumericalError as e:
        click.echo(f"{Fore.RED}✗ Numerical failure: {e}", err=True)
        ctx.exit(EXIT_NUMERICAL)
    except QuasiLocalError as e:
        click.echo(f"{Fore.RED}✗ {name} failed: {e}", err=True)
        ctx.exit(EXIT_FAILURE)

    click.echo(f"{Fore.GREEN}✓ {name} finished, results in {summary['run_dir']}")
    return summary


@click.group()
@click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False),
              help='JSON/YAML experiment settings or the manifest of an earlier run')
@click.option('--out', type=click.Path(file_okay=False), help='Output directory for run folders')
@click.option('--seed', type=int, help='Base seed for coefficients, data and noise')
@click.option('--ell', 'ells', help='Comma-separated oversampling parameters, e.g. 0,1,2,3')
@click.option('--noise', type=float, help='Multiplicative noise intensity sigma')
@click.option('--threads', type=int, help='Worker threads for patch and fine solves')
@click.option('--paper-scale', is_flag=True, help='Use the large mesh sizes of the original experiments')
@click.option('-v', '--verbose', count=True, help='-v for INFO, -vv for DEBUG logging')
@click.pass_context
def cli(ctx, config_path, out, seed, ells, noise, threads, paper_scale, verbose):
    """Quasi-local effective stiffness matrices: LOD homogenization and reconstruction."""
    setup_logging(verbose)
    ctx.obj = {
        'config_path': config_path,
        'out': out,
        'seed': seed,
        'ells': ells,
        'noise': noise,
        'threads': threads,
        'paper_scale': paper_scale,
    }


@cli.command('corrector-decay')
@click.option('--ell-max', type=int, help='Largest oversampling in the decay profile')
@click.pass_context
def corrector_decay(ctx, ell_max):
    """Energy decay of C - C_ell for the oscillating 1D coefficient."""
    summary = run_experiment(ctx, 'corrector-decay', decay={'ell_max': ell_max})
    click.echo(f"  fitted decay rate: {summary['fitted_rate']:.3f}")


@cli.command('forward-convergence')
@click.option('--ell-lod', type=int, help='Oversampling of the LOD solutions')
@click.pass_context
def forward_convergence(ctx, ell_lod):
    """L2 errors of coarse FEM and LOD against a fine reference."""
    summary = run_experiment(ctx, 'forward-convergence', convergence={'ell': ell_lod})
    for H, fem, lod in zip(summary['H'], summary['err_fem'], summary['err_lod']):
        click.echo(f"  H={H:.5f}  FEM {fem:.3e}  LOD {lod:.3e}")


def _echo_final(summary):
    for key, value in summary['final_J'].items():
        click.echo(f"  {key}: J={value:.6e} ({summary['status'][key]})")


@cli.command('invert-full')
@click.pass_context
def invert_full(ctx):
    """Gauss-Newton reconstruction from all boundary hat functions."""
    _echo_final(run_experiment(ctx, 'invert-full'))


@cli.command('invert-partial')
@click.option('--q', 'q', type=int, help='Number of random boundary data')
@click.pass_context
def invert_partial(ctx, q):
    """Reconstruction from q random boundary data, full-data and randomized variants."""
    _echo_final(run_experiment(ctx, 'invert-partial', q=q))


@cli.command('simulate')
@click.option('--matrix', type=click.Path(exists=True, dir_okay=False), help='Stored stiffness matrix (.mtx)')
@click.option('--rhs', type=click.Choice(['unit', 'g1', 'g2']), help='Source term')
@click.option('--u0', help="Boundary data: zero, x1, const:<c> or random:<seed>")
@click.option('--reference/--no-reference', default=None, help='Compare with the fine reference solution')
@click.pass_context
def simulate(ctx, matrix, rhs, u0, reference):
    """Coarse solution for a stored stiffness matrix."""
    summary = run_experiment(
        ctx, 'simulate', simulate={'matrix': matrix, 'rhs': rhs, 'u0': u0, 'reference': reference}
    )
    if 'relative_gap' in summary:
        click.echo(f"  relative L2 gap to reference: {summary['relative_gap']:.3e}")


def main():
    cli(obj={})


if __name__ == '__main__':
    main()
