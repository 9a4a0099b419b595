"""Deterministic named random streams derived from one root seed.

Every stochastic component draws from ``named_rng(root_seed, name)`` so any
stage (dataset, init, sampling, ...) can be reproduced in isolation.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream_key(name: str) -> int:
    """Stable 64-bit key for a stream name (sha256, platform independent)."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def named_rng(root_seed: int, name: str, index: int = 0) -> np.random.Generator:
    """Generator for sub-stream ``name`` (optionally indexed) of a root seed."""
    return np.random.default_rng([root_seed, stream_key(name), index])
