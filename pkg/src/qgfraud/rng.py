"""Seeded random generation with a fixed, portable algorithm."""

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    """Return a PCG64 generator: one seed, one stream, on every platform."""
    return np.random.Generator(np.random.PCG64(int(seed)))
