"""Sub-seed derivation.

Every stage draws from ``numpy.random.default_rng([root, crc32(tag)])``, so a
stage's stream depends only on the root seed and its tag, never on how many
numbers earlier stages consumed.
"""

import zlib

import numpy as np


def derive_seed(root: int, tag: str) -> int:
    ss = np.random.SeedSequence([int(root) & 0xFFFFFFFF, zlib.crc32(tag.encode())])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def derive_rng(root: int, tag: str) -> np.random.Generator:
    return np.random.default_rng([int(root) & 0xFFFFFFFF, zlib.crc32(tag.encode())])
