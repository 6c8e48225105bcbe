"""Deterministic derivation of per-subsystem random generator streams.

All randomness in a run flows from one user-visible seed. Each subsystem
(parameter init, data shuffling, evaluation sampling, ...) gets its own
stream derived from that seed plus a stable 64-bit hash of the subsystem
name, so adding or reordering consumers never perturbs the others.
"""

import hashlib

import numpy as np


def stream_id(name: str) -> int:
    """Stable 64-bit id for a subsystem name (first 8 bytes of SHA-256)."""
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")


def derive_rng(seed: int, name: str) -> np.random.Generator:
    """PCG64 generator for subsystem ``name`` under the run seed."""
    return np.random.default_rng([seed, stream_id(name)])


def derive_uint64(rng: np.random.Generator) -> int:
    """Draw one 64-bit seed word (for the counter-based Gibbs streams)."""
    return int(rng.integers(0, 2**64, dtype=np.uint64))
