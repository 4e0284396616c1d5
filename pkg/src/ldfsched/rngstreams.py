"""Named, counter-indexed random substreams derived from one master seed.

Every random draw in the package flows from a master seed through a named
substream, so results are reproducible and independent of how work is split
across threads: a substream's output depends only on (seed, name, indices),
never on scheduling order.
"""

import zlib

import numpy as np

__all__ = ["substream"]


def _code(name: str) -> int:
    return zlib.crc32(name.encode("ascii"))


def substream(seed: int, name: str, *indices: int) -> np.random.Generator:
    """Return a fresh generator for the (seed, name, *indices) substream."""
    key = (_code(name),) + tuple(int(i) for i in indices)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))
