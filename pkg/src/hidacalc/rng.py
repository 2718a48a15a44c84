"""Seeded counter-based random streams.

Every stream is Philox4x64-10 keyed directly by ``(seed, stream)`` with a zero
counter, so a seed identifies the same raw 64-bit sequence in any Philox
implementation.  Independent streams (per suite, per worker) differ in the
second key word.
"""

from __future__ import annotations

import zlib

import numpy as np


def make_rng(seed: int, stream: int | str = 0) -> np.random.Generator:
    if isinstance(stream, str):
        stream = zlib.crc32(stream.encode())
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, stream & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
