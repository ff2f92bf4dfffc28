"""Counter-based random streams keyed by (seed, lineage key).

Every replica, family block or path batch gets its own Philox stream whose key
is derived from the root seed and a tuple of integers naming its lineage.  Two
streams with the same (seed, key, counter) produce the same numbers whatever
the thread layout of the caller.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np


@dataclass(frozen=True)
class RngStream:
    seed: int
    key: tuple[int, ...] = ()
    counter: int = 0

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if any(k < 0 for k in self.key):
            raise ValueError("lineage key entries must be non-negative")

    def philox_key(self) -> np.ndarray:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
        return ss.generate_state(2, np.uint64)

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.philox_key(), counter=self.counter))

    def child(self, *key: int) -> "RngStream":
        return RngStream(self.seed, self.key + tuple(int(k) for k in key))


RngLike = Union[RngStream, np.random.Generator, int, None]


def as_generator(stream: RngLike) -> np.random.Generator:
    if isinstance(stream, np.random.Generator):
        return stream
    if isinstance(stream, RngStream):
        return stream.generator()
    if stream is None:
        raise ValueError("an explicit random stream is required")
    return RngStream(int(stream)).generator()
