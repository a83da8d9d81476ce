"""Deterministic RNG keying.

Randomness that must be reproducible independently of call order is keyed by
hashing string parts, never drawn from a shared stream.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np


def stable_digest(*parts) -> bytes:
    text = "|".join(str(p) for p in parts)
    return hashlib.sha256(text.encode("utf-8")).digest()


def stable_u64(*parts) -> int:
    return struct.unpack("<Q", stable_digest(*parts)[:8])[0]


def stable_rng(*parts) -> np.random.Generator:
    return np.random.default_rng(stable_u64(*parts))
