"""Splittable counter-based random streams.

Every stochastic operation in the package draws from an explicitly passed
stream.  Streams are Philox generators addressed by a (root seed, key path)
pair, so children are reproducible regardless of the order in which they
are created.
"""

import zlib

import numpy as np


def _key_int(part):
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part) & 0xFFFFFFFF


class Stream:
    """A Philox-backed generator that can deterministically split children."""

    def __init__(self, seed, _spawn_key=()):
        if isinstance(seed, np.random.SeedSequence):
            self._seq = seed
        else:
            self._seq = np.random.SeedSequence(int(seed), spawn_key=tuple(_spawn_key))
        self.gen = np.random.Generator(np.random.Philox(self._seq))

    @property
    def entropy(self):
        return self._seq.entropy

    def child(self, *key):
        """Named split: same (seed, key path) always yields the same stream."""
        spawn_key = tuple(self._seq.spawn_key) + tuple(_key_int(k) for k in key)
        return Stream(self._seq.entropy, spawn_key)

    # Thin passthroughs, so call sites read like numpy Generators.
    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.gen.normal(loc, scale, size)

    def standard_normal(self, size=None):
        return self.gen.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)
