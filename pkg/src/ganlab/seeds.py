"""Deterministic seed derivation.

All randomness in a run flows from one root seed.  Sub-seeds are derived by
hashing the root together with a path of component names, so adding a new
consumer never perturbs the streams of existing ones:

    derive_seed(7, "train", "z", 12) -> 64-bit seed for step 12's noise
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(root: int, *parts) -> int:
    key = "/".join([str(int(root))] + [str(p) for p in parts])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(root: int, *parts) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(root, *parts)))
