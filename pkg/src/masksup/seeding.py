"""Deterministic seed derivation.

Python's builtin hash() is salted per process, so derived seeds go through
blake2b instead. Any mix of ints/strings/floats maps to a stable 64-bit seed,
identical across processes and platforms.
"""

import hashlib


def derive_seed(*parts) -> int:
    """Derive a 64-bit seed from an arbitrary key tuple, stably across runs."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")
