"""Deterministic RNG streams keyed by (seed, purpose, ids...)."""
from __future__ import annotations

import hashlib
import random

import numpy as np


def _key(seed: int, *parts) -> int:
    h = hashlib.blake2b(repr((int(seed),) + tuple(parts)).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def derive_rng(seed: int, *parts) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([_key(seed, *parts)]))


def derive_random(seed: int, *parts) -> random.Random:
    """A stdlib stream; cheaper per scalar draw than a numpy Generator."""
    return random.Random(_key(seed, *parts))
