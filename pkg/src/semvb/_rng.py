"""Deterministic random-stream derivation.

All randomness in the package flows through one integer seed. Substreams are
derived from (seed, label, indices) so that adding a consumer with a new label
never shifts the draws of an existing one, and parallel workers owning
different indices never share a stream.
"""

import zlib

import numpy as np


def _label_key(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


def substream(seed: int, label: str, *indices: int) -> np.random.Generator:
    """Return an independent generator keyed by (seed, label, *indices)."""
    key = (_label_key(label),) + tuple(int(i) for i in indices)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))
