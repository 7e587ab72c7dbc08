"""Named, independently seeded random streams for reproducible runs."""

import zlib
from typing import Dict

import numpy as np


class RandomStreams:
    """One numpy Generator per named concern, all derived from a single seed.

    Streams are keyed by name rather than creation order, so adding a new
    consumer never shifts the draws of an existing one.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: Dict[str, np.random.Generator] = {}

    def get(self, name: str) -> np.random.Generator:
        if name not in self._streams:
            key = zlib.crc32(name.encode("utf-8"))
            self._streams[name] = np.random.default_rng(np.random.SeedSequence([self.seed, key]))
        return self._streams[name]


def round_rng(seed: int, round_index: int) -> np.random.Generator:
    """Generator shared by every node for one (seed, round) pair."""
    return np.random.default_rng([int(seed), int(round_index)])
