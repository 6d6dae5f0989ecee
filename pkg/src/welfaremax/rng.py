"""Deterministic RNG stream derivation.

Estimators and samplers derive one child stream per (seed, index) so results
are bit-identical regardless of scheduling or worker count.
"""

import hashlib
import random

_MASK = (1 << 64) - 1


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _as_int(part) -> int:
    if isinstance(part, int):
        return part & _MASK
    if isinstance(part, str):
        # stable across runs and platforms, unlike hash()
        digest = hashlib.blake2b(part.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little")
    raise TypeError(f"seed parts must be int or str, got {type(part)!r}")


def derive_seed(*parts) -> int:
    """Mix any number of int/str parts into one 64-bit seed."""
    h = 0x8C6E_5F0B_1D3A_97E5
    for part in parts:
        h = _splitmix64(h ^ _as_int(part))
    return h


def derive_rng(*parts) -> random.Random:
    """A fresh ``random.Random`` deterministically keyed by ``parts``."""
    return random.Random(derive_seed(*parts))
