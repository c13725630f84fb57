"""Deterministic seed derivation for parallel work units.

Every independently schedulable unit (a forest tree, a permutation repeat,
a grid-search cell) draws from its own generator seeded by a splitmix64 mix
of the master seed and the unit's index path, so results never depend on
execution order. The mixing constants below are part of the model file
contract: 0x9E3779B97F4A7C15 (increment), 0xBF58476D1CE4E5B9 and
0x94D049BB133111EB (multipliers).
"""

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(master, *path):
    """64-bit seed for the work unit addressed by ``path`` under ``master``."""
    h = int(master) & _MASK
    for p in path:
        h = splitmix64(h ^ (int(p) & _MASK))
    return h


def rng_for(master, *path):
    return np.random.default_rng(derive_seed(master, *path))
