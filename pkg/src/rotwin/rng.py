"""Seeded, counter-based random streams.

Every stream is a Philox generator keyed by the base seed plus a tuple of
integer or string keys, so a replicate's data depend only on its own key and
never on execution order or worker count.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(k) -> int:
    if isinstance(k, str):
        return zlib.crc32(k.encode("utf-8"))
    return int(k)


def make_rng(seed: int, *keys) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))
