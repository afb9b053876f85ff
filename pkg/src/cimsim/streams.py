"""Deterministic random substream derivation.

Every random draw in the package comes from a generator derived from a
64-bit master seed plus a tuple of context keys (stage name, module id,
group index, trial index, ...).  Derivation goes through
``numpy.random.SeedSequence`` spawn keys, so substreams are independent
and the same (seed, keys) pair yields the same stream regardless of the
order or thread in which it is created.
"""

from __future__ import annotations

import zlib

import numpy as np

KeyPart = int | str


def _as_uint32(part: KeyPart) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part) & 0xFFFFFFFF


def substream(seed: int, *key: KeyPart) -> np.random.Generator:
    """Generator for the substream identified by ``key`` under ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_as_uint32(k) for k in key))
    return np.random.default_rng(ss)
