"""Seed derivation. All randomness in the package flows through here."""

import numpy as np


def derive_seed(*keys: int) -> int:
    """Hash a tuple of non-negative integers into a 64-bit seed."""
    words = np.random.SeedSequence([int(k) for k in keys]).generate_state(2, np.uint32)
    return (int(words[0]) << 32) | int(words[1])


def generator(*keys: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*keys))
