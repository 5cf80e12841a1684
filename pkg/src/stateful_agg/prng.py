"""Deterministic randomness derivation.

Every random choice in the simulator is drawn from a generator keyed by a
hash of (root seed, context tags), so whole runs replay bit-for-bit from a
single integer seed.  Philox is counter-based, which matches the on-paper
model of seed expansion as counter-mode application of a fixed permutation.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["hash_key", "ctx_rng"]


def hash_key(*parts) -> int:
    """Derive a 128-bit integer key from arbitrary context parts."""
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, bytes):
            h.update(b"b" + part)
        elif isinstance(part, str):
            h.update(b"s" + part.encode("utf-8"))
        elif isinstance(part, (int, np.integer)):
            v = int(part)
            h.update(b"i" + v.to_bytes((v.bit_length() + 8) // 8 + 1, "big", signed=True))
        elif isinstance(part, float):
            h.update(b"f" + repr(part).encode("ascii"))
        elif isinstance(part, (tuple, list)):
            h.update(b"(")
            h.update(hash_key(*part).to_bytes(16, "big"))
            h.update(b")")
        elif part is None:
            h.update(b"n")
        else:
            raise TypeError(f"cannot derive key from {type(part).__name__}")
        h.update(b"|")
    return int.from_bytes(h.digest()[:16], "big")


def ctx_rng(*parts) -> np.random.Generator:
    """Generator keyed by the given context; same context, same stream."""
    return np.random.Generator(np.random.Philox(key=hash_key(*parts)))
