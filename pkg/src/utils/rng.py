"""
Deterministic random stream derivation.

Every random draw in the package comes from a generator derived from a key
tuple ``(seed, domain, *indices)``. Philox is counter based, so two streams
with different keys are independent and the same key always reproduces the
same draws regardless of evaluation order or worker count.
"""

from typing import Sequence

import numpy as np


def stream_key(seed: int, *indices: int) -> Sequence[int]:
    """Build the entropy key for a derived stream; all parts must be >= 0."""
    key = [int(seed)] + [int(i) for i in indices]
    if any(part < 0 for part in key):
        raise ValueError(f"Stream key components must be non-negative, got {key}")
    return key


def derive_stream(seed: int, *indices: int) -> np.random.Generator:
    """
    Create the generator for one stream identifier.

    Args:
        seed (int): Experiment seed.
        *indices (int): Stream coordinates, e.g. (domain, run, round, candidate,
            continuation, replicate).

    Returns:
        np.random.Generator: A Philox-backed generator.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(stream_key(seed, *indices))))
