"""Seeded random streams.

Every random draw in the package comes from a PCG64 generator whose seed
sequence is ``[seed, stream, *keys]``. PCG64 and SeedSequence produce the same
bits on every platform numpy supports, so a dataset or a training run is
reproducible from its seed alone.
"""

import hashlib
from typing import Union

import numpy as np


# Stream identifiers
PROTOTYPES = 0
BAG = 1
INIT = 2
SHUFFLE = 3
SUBSAMPLE = 4
BASELINE = 5
SEARCH = 6
PROBE = 7
PERTURB = 8
ANCHORS = 9

MASK64 = (1 << 64) - 1


def stable_hash(text: str) -> int:
    """64-bit hash of a string that does not change between interpreter runs."""
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def stream(seed: int, kind: int, *keys: Union[int, str]) -> np.random.Generator:
    """Return the generator for one named stream under ``seed``."""
    entropy = [int(seed) & MASK64, int(kind)]
    for key in keys:
        entropy.append(stable_hash(key) if isinstance(key, str) else int(key) & MASK64)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
