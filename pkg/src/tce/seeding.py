"""Counter-hash seed derivation so per-sample work is order independent."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master: int, *keys: object) -> int:
    """Derive a 64-bit child seed from ``master`` and any number of keys.

    The same (master, keys) always gives the same seed regardless of the
    order in which samples are generated, which is what lets ``--jobs``
    parallelise without changing outputs.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master)).encode())
    for k in keys:
        h.update(b"\x1f")
        h.update(str(k).encode())
    return int.from_bytes(h.digest(), "little")


def rng_for(master: int, *keys: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *keys))
