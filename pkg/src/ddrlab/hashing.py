"""Stable 64-bit FNV-1a hashing for config fingerprints and derived seeds."""

from __future__ import annotations

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK
    return h


def derive_seed(seed: int, ident: str) -> int:
    """Per-item seed from a base seed and an identifier.

    Adding or removing other items never changes the seed derived for a
    given (seed, ident) pair.
    """
    return fnv1a64(f"{seed}/{ident}".encode("utf-8"))
