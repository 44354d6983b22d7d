"""Counter-based random streams.

Each stream is a Philox generator keyed by ``(seed, *key)`` through
``SeedSequence.spawn_key``. Replica ``r`` of stream ``s`` therefore draws the
same numbers whatever the order or thread it is evaluated in.
"""
from __future__ import annotations

import numpy as np

from .errors import ParameterError

# stream identifiers, kept distinct so that experiments never share draws
DISORDER = 1
CLOUD = 2
REFINE = 3
WALK = 4
BOOTSTRAP = 5
MC = 6
CONFIG = 7


def stream(seed: int, *key: int) -> np.random.Generator:
    """Return an independent generator for ``(seed, *key)``.

    Parameters
    ----------
    seed : int
        Master seed, an unsigned 64-bit integer.
    *key : int
        Stream coordinates, e.g. ``(DISORDER, replica)``.
    """
    seed = int(seed)
    if not 0 <= seed < 1 << 64:
        raise ParameterError("seed must be an unsigned 64-bit integer")
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
