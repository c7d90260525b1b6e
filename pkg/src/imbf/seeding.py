"""Seed derivation so every random stream is a pure function of the master seed."""

import hashlib

import numpy as np


def derive_seed(master: int, label: str, index: int = 0) -> int:
    digest = hashlib.sha256(f"{int(master)}:{label}:{int(index)}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def rng_for(master: int, label: str, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, label, index))
