"""Deterministic RNG streams derived from a single root seed.

Every stochastic stage (weight init, shuffling, dropout, data synthesis, ...)
draws from its own substream so that seeds compose without interference.
"""

import numpy as np

# Fixed stream tags; changing these renumbers every derived random sequence.
INIT = 1
DROPOUT = 2
SHUFFLE = 3
SPLIT = 4
SYNTH = 5
PROFILE = 6


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    """Independent generator for (seed, stream); the same pair always yields
    the same sequence, on every platform."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream])))
