"""Seed splitting.

Every random stream is derived from one global seed::

    sub_seed(seed, *keys) = SeedSequence(seed, spawn_key=[crc32(str(k)) for k in keys])
                            .generate_state(1)[0]

so a stage's randomness depends only on the global seed and its own keys
(e.g. ``("split", 3)`` for the train/test shuffle of the fourth K value, or
``("model", "nk_sweep", 20)`` for one network), never on execution order.
"""
import zlib

import numpy as np


def sub_seed(seed, *keys):
    key = tuple(zlib.crc32(str(k).encode()) for k in keys)
    return int(np.random.SeedSequence(int(seed), spawn_key=key).generate_state(1)[0])


def sub_rng(seed, *keys):
    return np.random.default_rng(sub_seed(seed, *keys))
