"""Deterministic seed derivation for repetitions and sweep grid points.

Every repetition builds its own ``numpy.random.Generator`` from a 64-bit seed
derived with a splitmix64-style finalizer, so results are byte-identical for a
given master seed no matter how repetitions are scheduled across threads.

Derivation contract (all arithmetic mod 2**64):

* ``rep_seed(master, r)   = mix64(master + (r + 1) * GOLDEN)``
* ``grid_seed(master, g)  = mix64((master ^ GRID_TAG) + (g + 1) * GOLDEN)``

``GOLDEN`` is the splitmix64 increment 0x9E3779B97F4A7C15; ``GRID_TAG``
separates the sweep-grid stream from the repetition stream so that grid point
``g`` and repetition ``g`` never share a seed. Sweep grid point ``g`` runs its
repetitions with ``rep_seed(grid_seed(master, g), r)``.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

GOLDEN = 0x9E3779B97F4A7C15
GRID_TAG = 0xA5A5A5A5A5A5A5A5


def mix64(value: int) -> int:
    """splitmix64 finalizer: avalanche a 64-bit integer."""
    z = value & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D649BB133111EB) & _MASK64
    return z ^ (z >> 31)


def rep_seed(master_seed: int, rep: int) -> int:
    """Seed for repetition ``rep`` (0-based) under ``master_seed``."""
    if rep < 0:
        raise ValueError(f"rep must be >= 0, got {rep}")
    return mix64((master_seed + (rep + 1) * GOLDEN) & _MASK64)


def grid_seed(master_seed: int, grid_index: int) -> int:
    """Master seed for sweep grid point ``grid_index`` (0-based)."""
    if grid_index < 0:
        raise ValueError(f"grid_index must be >= 0, got {grid_index}")
    return mix64(((master_seed ^ GRID_TAG) + (grid_index + 1) * GOLDEN) & _MASK64)


def rep_rng(master_seed: int, rep: int) -> np.random.Generator:
    """Fresh PCG64 generator for one repetition."""
    return np.random.default_rng(rep_seed(master_seed, rep))
