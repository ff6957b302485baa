"""Deterministic random-stream derivation.

A single master seed fans out to purpose-scoped streams through
``SeedSequence`` spawn keys, so e.g. changing the batch size cannot perturb
topology draws.  All streams use the counter-based Philox generator, which
additionally supports cheap random access into a stream: fading innovations
for time step t live in a dedicated counter slot and can be regenerated
without replaying steps 0..t-1.
"""

from __future__ import annotations

import numpy as np

# Purpose tags; the values are part of the on-disk dataset/checkpoint format.
TOPOLOGY = 0
FADING = 1
PARAM_INIT = 2
DUAL_SAMPLING = 3
DATA_ORDER = 4
ORACLE = 5

# Splits, used as the path element after TOPOLOGY / FADING.
SPLIT_IDS = {"train": 0, "test": 1}

# Counter blocks reserved per random-access slot.  One slot never consumes
# anywhere near 2**64 outputs, so slots cannot overlap.
_SLOT_STRIDE = 1 << 64


def derive_seed(master_seed: int, *path: int) -> int:
    """Derive a child integer seed from the master seed and a purpose path."""
    ss = np.random.SeedSequence(master_seed, spawn_key=tuple(path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def generator(seed: int) -> np.random.Generator:
    """Sequential generator for the given derived seed."""
    return np.random.Generator(np.random.Philox(key=seed))


def generator_at(seed: int, slot: int) -> np.random.Generator:
    """Generator positioned at a fixed counter slot of the seed's stream."""
    bg = np.random.Philox(key=seed)
    bg.advance(slot * _SLOT_STRIDE)
    return np.random.Generator(bg)
