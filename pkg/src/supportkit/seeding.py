"""Named-seed derivation.

All randomness is keyed by ``(seed, purpose, entity...)`` so that any unit of
work can be recomputed in isolation, in any order, with the same result.
"""

from __future__ import annotations

import hashlib

import numpy as np

_TWO_64 = float(2**64)


def stable_hash64(*parts: object) -> int:
    """64-bit BLAKE2b digest of the string forms of ``parts``."""
    payload = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "big")


def unit_interval(*parts: object) -> float:
    """Deterministic value in [0, 1) derived from ``parts``."""
    return stable_hash64(*parts) / _TWO_64


def derive_rng(*parts: object) -> np.random.Generator:
    return np.random.default_rng(stable_hash64(*parts))


def content_digest(*parts: object, length: int = 16) -> str:
    payload = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()[:length]
