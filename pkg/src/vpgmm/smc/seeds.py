"""Deterministic seed derivation and tag hashing."""

import hashlib

import numpy as np


def derive_seed(root: int, *labels: object) -> int:
    """Derive a 128-bit child seed from ``root`` and a label path.

    Parties holding the same root seed and labels derive the same seed, which is
    how the shared SSP matrix U is agreed without sending it.
    """
    text = "|".join([str(root), *(str(label) for label in labels)])
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=16).digest()
    return int.from_bytes(digest, "little")


def derive_rng(root: int, *labels: object) -> np.random.Generator:
    """Random generator seeded by :func:`derive_seed`."""
    return np.random.default_rng(derive_seed(root, *labels))


def tag_hash(tag: str) -> int:
    """64-bit hash of a session tag, as carried in the wire header."""
    return int.from_bytes(hashlib.blake2b(tag.encode("utf-8"), digest_size=8).digest(), "little")
