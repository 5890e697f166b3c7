"""Seed derivation.

Every random stream is derived from one root seed and a subsystem tag:
``stream(seed, tag) = numpy.random.default_rng(SeedSequence([seed, crc32(tag)]))``.
Ablations that toggle one component therefore leave all other streams
untouched.
"""

import zlib

import numpy as np


def tag_key(tag):
    return zlib.crc32(tag.encode("utf-8"))


def stream(seed, tag):
    """Return an independent generator for ``(seed, tag)``."""
    if seed is None:
        raise ValueError("an explicit seed is required")
    return np.random.default_rng(np.random.SeedSequence([int(seed), tag_key(tag)]))
