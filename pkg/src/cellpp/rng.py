"""Deterministic random-stream handling.

Every stochastic routine takes an explicit stream description instead
of a bare seed so that replicate sets are reproducible and nested:
stream ``i`` of a given master seed is always the same, no matter how
many streams are drawn around it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RngStreamSpec:
    """A named random stream: a 64-bit master seed plus a stream id."""

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise ValueError("master_seed must fit in 64 bits")
        if int(self.stream_id) < 0:
            raise ValueError("stream_id must be non-negative")

    def generator(self) -> np.random.Generator:
        """Instantiate the generator for this stream."""
        ss = np.random.SeedSequence(self.master_seed,
                                    spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(ss))

    def substream(self, offset: int) -> "RngStreamSpec":
        """Derive a sibling stream at ``stream_id + offset``."""
        return RngStreamSpec(self.master_seed, self.stream_id + int(offset))


def as_stream(seed) -> RngStreamSpec:
    """Coerce an int or RngStreamSpec into an RngStreamSpec."""
    if isinstance(seed, RngStreamSpec):
        return seed
    return RngStreamSpec(int(seed))
