"""
QuasiLocal Worker Pool
Bounded thread pool for independent patch and boundary-datum solves.
"""

import logging
from concurrent.futures import ThreadPoolExecutor

import settings
from errors import ConfigError

logger = logging.getLogger(__name__)


def resolve_threads(threads=None):
    """Worker count: explicit value, else output.threads from the config"""
    if threads is None:
        threads = settings.config['output']['threads']
    threads = int(threads)
    if threads < 1:
        raise ConfigError(f"Thread count must be >= 1, got {threads}")
    return threads


def parallel_map(func, items, threads=None):
    """
    Apply func to every item and return the results in input order.

    threads == 1 runs a plain loop in the calling thread, which keeps every
    reduction downstream bit-reproducible.
    """
    items = list(items)
    threads = resolve_threads(threads)
    if threads == 1 or len(items) <= 1:
        return [func(item) for item in items]
    logger.debug("Mapping %d tasks over %d threads", len(items), threads)
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(func, items))
