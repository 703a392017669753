"""Keyed random sub-streams.

Every draw in the library comes from a generator keyed by
``(root seed, purpose, n, t, shock)``.  Keys never depend on batch sizes
or worker counts, so adding scenarios, shocks or secondaries leaves all
existing draws untouched.
"""
import numpy as np

PRIMARY = 1
SECONDARY = 2
LSMC_PRIMARY = 3
LSMC_SECONDARY = 4
INITIAL = 5
SOBOL = 6
SYNTHETIC = 7
REPLICATION = 8

SHOCK_CODES = {None: 0, "central": 0, "equity_down": 1, "rates_up": 2,
               "rates_down": 3, "mass_lapse": 4}


def stream(seed, purpose, *key):
    """Independent generator for ``(seed, purpose, *key)``; keys are non-negative ints."""
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(purpose),) + tuple(int(k) for k in key))))


def shock_code(shock_id):
    return SHOCK_CODES[shock_id]
