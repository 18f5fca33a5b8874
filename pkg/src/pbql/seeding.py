"""Deterministic seed splitting.

Every random stream is addressed by ``(master_seed, label, index)``.  The
label is hashed with CRC-32 and the triple becomes a numpy ``SeedSequence``
with ``entropy=master_seed`` and ``spawn_key=(crc32(label), index)``.  Episode
``i`` of stream ``"gen"`` therefore draws the same numbers whether episodes
are simulated one at a time, in chunks, or in another process.
"""
from __future__ import annotations

import hashlib
import json
import zlib

import numpy as np


def label_key(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


def derive_seed(master_seed: int, label: str, index: int = 0) -> np.random.SeedSequence:
    if master_seed < 0 or index < 0:
        raise ValueError("seeds and indices must be non-negative")
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=(label_key(label), int(index)))


def episode_rng(master_seed: int, label: str, index: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, label, index))


def as_generator(seed) -> np.random.Generator:
    """Accept an int, SeedSequence or Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]
