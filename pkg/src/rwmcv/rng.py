"""Counter-based random streams.

Every stochastic quantity is addressed by a path of integers below the
master seed, e.g. ``(seed, CHAIN, d, run)``. The path is hashed into a
Philox key with :class:`numpy.random.SeedSequence`; the Philox counter
then selects a block inside that stream. Draws for a block therefore
depend only on ``(seed, path, block)`` and never on which worker ran
them or in what order.
"""
from dataclasses import dataclass

import numpy as np

# Stream tags used as the first path element.
CHAIN = 0
CV = 1
POINTS = 2
INNER = 3
DRAWS = 4

MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class StreamKey:
    """Address of one independent random stream."""

    seed: int
    path: tuple = ()

    def child(self, *idx):
        return StreamKey(self.seed, self.path + tuple(int(i) for i in idx))

    def key(self):
        ss = np.random.SeedSequence(entropy=self.seed & MASK64, spawn_key=self.path)
        return ss.generate_state(2, dtype=np.uint64)

    def generator(self, block=0):
        """Generator positioned at the start of ``block``.

        Blocks occupy disjoint counter ranges (the block index sits in
        the most significant counter word), so they never overlap.
        """
        bitgen = np.random.Philox(key=self.key(), counter=[0, 0, 0, int(block)])
        return np.random.Generator(bitgen)


def as_generator(rng):
    """Accept a Generator, a StreamKey or an int seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, StreamKey):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return StreamKey(int(rng)).generator()
    raise TypeError(f"cannot build a random generator from {type(rng).__name__}")
