"""Deterministic seed derivation so one master seed drives every rng stream."""

import hashlib

import numpy as np


def derive_seed(master, *tags) -> int:
    """Stable 63-bit seed from a master seed and a tag path.

    Uses blake2s rather than hash() so results do not depend on
    PYTHONHASHSEED or the process.
    """
    key = "/".join([str(master)] + [str(t) for t in tags])
    digest = hashlib.blake2s(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def spawn_rng(master, *tags) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *tags))
