"""Small shared helpers: seeded RNG derivation and canonical JSON."""

from __future__ import annotations

import hashlib
import json
from typing import Any

import numpy as np

__all__ = ["child_rng", "canonical_json", "config_digest"]


def child_rng(seed: int, *key: int) -> np.random.Generator:
    """Derive an independent generator from a master seed and an integer path.

    The same (seed, key) pair always yields the same stream, and distinct keys
    yield statistically independent streams. Used for per-fold, per-tree and
    per-replication seeding so results do not depend on execution order.
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def canonical_json(obj: Any) -> str:
    """Serialize with sorted keys and no whitespace jitter, for stable bytes."""
    return json.dumps(obj, sort_keys=True, separators=(", ", ": "), allow_nan=False)


def config_digest(obj: Any) -> str:
    """SHA-256 hex digest of the canonical JSON form of a config mapping."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()
