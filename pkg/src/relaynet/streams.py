"""Keyed random streams.

Every random draw in the package comes from a Philox generator whose key is
derived from ``(seed, *labels)``. Labels are integers (replica, transmitter
index) or short purpose tags such as ``"relay-choice"``. Two calls with the same
key produce the same stream regardless of call order or process, which is what
makes pathwise comparisons on shared randomness possible.
"""
from __future__ import annotations

import zlib

import numpy as np

__all__ = ["generator", "key_words"]


def _word(label) -> int:
    if isinstance(label, (bool, np.bool_)):
        raise TypeError("boolean labels are ambiguous")
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError(f"negative stream label {label}")
        return int(label)
    if isinstance(label, float) and label.is_integer():
        return int(label)
    if isinstance(label, (float, np.floating)):
        # lambda values etc.; the repr is stable across platforms
        return zlib.crc32(repr(float(label)).encode())
    return zlib.crc32(str(label).encode())


def key_words(seed: int, *labels) -> list[int]:
    return [_word(seed)] + [_word(lab) for lab in labels]


def generator(seed: int, *labels) -> np.random.Generator:
    """Return the generator for stream ``(seed, *labels)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key_words(seed, *labels))))
