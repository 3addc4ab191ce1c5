"""
Experiments Module
Runners for the command-line subcommands
"""

from experiments import convergence, decay, inversion_runs, simulate

# Subcommand name -> runner taking an ExperimentConfig
RUNNERS = {
    'corrector-decay': decay.run,
    'forward-convergence': convergence.run,
    'invert-full': inversion_runs.run_full,
    'invert-partial': inversion_runs.run_partial,
    'simulate': simulate.run,
}
