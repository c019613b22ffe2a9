"""Deterministic RNG fan-out.

Every random draw in the project comes from a substream derived from one
master seed plus a purpose tag and optional indices.  Substreams are
independent, so e.g. adding layers to a network never perturbs the
matrices of earlier layers, and trial t of a sweep point is the same no
matter which worker runs it.
"""

import numpy as np

WEIGHTS = 1
FEEDBACK = 2
SHUFFLE = 3
PRFS = 4
GA = 5
SWEEP = 6
EVAL = 7


def seed_stream(master: int, *tags: int) -> np.random.Generator:
    """Independent generator for (master seed, purpose tag, indices...)."""
    return np.random.default_rng(np.random.SeedSequence([int(master), *map(int, tags)]))
