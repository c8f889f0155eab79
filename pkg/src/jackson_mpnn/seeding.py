"""Seed derivation. All randomness in the package flows from integer seeds."""
import hashlib

import numpy as np


def derive_seed(base_seed: int, *keys) -> int:
    """Derive a 63-bit child seed from ``base_seed`` and a path of keys.

    String keys are hashed with SHA-256 so labels like ``"train"`` give stable
    streams; integer keys (sample indices) are used as-is.
    """
    words = [int(base_seed) & 0xFFFFFFFFFFFFFFFF]
    for key in keys:
        if isinstance(key, str):
            words.append(int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little"))
        else:
            words.append(int(key) & 0xFFFFFFFFFFFFFFFF)
    state = np.random.SeedSequence(words).generate_state(2, dtype=np.uint32)
    return (int(state[0]) | (int(state[1]) << 32)) >> 1


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))
