"""Named, counter-based random streams.

All randomness flows through Philox generators keyed by (seed, stream id),
where the stream id is a stable 64-bit hash of a name plus an integer
index. Consumers (data generation, init, shuffling, candidate sampling)
each own a stream, so adding draws to one never perturbs another. Paired
experiment arms reuse the same seed: they share init and data bit for bit
and differ only in the streams the attack actually touches.
"""

import hashlib
from dataclasses import dataclass

import numpy as np


def _stream_id(name, index):
    digest = hashlib.blake2b(f"{name}:{index}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


@dataclass(frozen=True)
class Rng:
    """Factory of independent named generators under one experiment seed."""

    seed: int

    def stream(self, name, index=0):
        """A fresh Generator for (name, index); same args, same stream."""
        return np.random.Generator(np.random.Philox(key=[self.seed, _stream_id(name, index)]))


def stream_gen(seed, name, index=0):
    """Shortcut for Rng(seed).stream(name, index)."""
    return Rng(seed).stream(name, index)
