"""Deterministic RNG streams.

Every random decision in the pipeline draws from a stream derived from
(seed, image_id, purpose-tag) via a counter-based generator (Philox), so
results are independent of worker count and scheduling order.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_key(seed: int, *parts: int | str) -> int:
    """Stable 128-bit key from a base seed and any number of mix-in parts."""
    h = hashlib.sha256()
    h.update(int(seed).to_bytes(16, "little", signed=True))
    for part in parts:
        if isinstance(part, int):
            h.update(b"i" + part.to_bytes(16, "little", signed=True))
        else:
            h.update(b"s" + str(part).encode("utf-8"))
        h.update(b"\x00")
    return int.from_bytes(h.digest()[:16], "little")


def derive_rng(seed: int, *parts: int | str) -> np.random.Generator:
    """Counter-based generator keyed on (seed, *parts)."""
    return np.random.Generator(np.random.Philox(key=derive_key(seed, *parts)))
