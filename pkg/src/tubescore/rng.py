"""Deterministic random-stream derivation.

A single master seed expands into independent per-module streams through a
counter-based generator (Philox) keyed by ``SeedSequence(master, spawn_key=
(crc32(label), index))``.  Batch generation shards a sample budget into
fixed-size blocks, one derived stream per block, so results are reproducible
bit-for-bit regardless of how a caller schedules the blocks.
"""
from __future__ import annotations

import zlib

import numpy as np

SHARD_SIZE = 1 << 16


def stream_id(label: str) -> int:
    """Stable 32-bit id for a stream label."""
    return zlib.crc32(label.encode("utf-8"))


def seed_sequence(master_seed: int, label: str, index: int = 0) -> np.random.SeedSequence:
    if master_seed < 0:
        raise ValueError("master seed must be non-negative")
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(stream_id(label), index))


def derive_rng(master_seed: int, label: str, index: int = 0) -> np.random.Generator:
    """Generator for stream ``label``/``index`` under ``master_seed``."""
    return np.random.Generator(np.random.Philox(seed_sequence(master_seed, label, index)))


def shard_sizes(n: int, shard_size: int = SHARD_SIZE) -> list[int]:
    """Block sizes covering a budget of ``n`` draws."""
    if n < 0:
        raise ValueError("sample count must be non-negative")
    full, rest = divmod(n, shard_size)
    return [shard_size] * full + ([rest] if rest else [])
