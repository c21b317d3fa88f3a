"""Keyed counter-based random streams.

Every stochastic draw in the package is addressed by a key tuple such as
``(seed, "path", step)``.  The key is hashed into a Philox key, so a stream
depends only on its address and never on how many draws other streams made.
"""

import zlib

import numpy as np


def _word(part):
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    part = int(part)
    if part < 0:
        raise ValueError(f"rng key parts must be non-negative, got {part}")
    return part


def key_words(seed, *keys):
    return [_word(seed)] + [_word(k) for k in keys]


def keyed_rng(seed, *keys):
    """Independent ``numpy.random.Generator`` for the address ``(seed, *keys)``."""
    ss = np.random.SeedSequence(key_words(seed, *keys))
    return np.random.Generator(np.random.Philox(key=ss.generate_state(2, dtype=np.uint64)))


def keyed_normal(seed, *keys, size=None):
    return keyed_rng(seed, *keys).standard_normal(size)
