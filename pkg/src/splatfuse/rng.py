"""Seed discipline: every random draw comes from a named stream.

A stream is identified by (root seed, name). Names are hashed with
SHA-256 so stream creation order never matters and any module can
re-derive its stream from the run seed alone.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def stream(seed: int, name: str) -> np.random.Generator:
    """Deterministic generator for `name` under the run seed."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    name_key = int.from_bytes(digest[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([seed & _MASK64, name_key]))
