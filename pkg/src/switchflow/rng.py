"""Seedable, splittable random streams.

All sampling uses numpy's PCG64 bit generator seeded through
``SeedSequence``.  Child streams come from ``SeedSequence.spawn``, so a
batch of trajectories drawn from one seed is reproducible one by one and in
any order.
"""
from __future__ import annotations

import numpy as np

RNG_ALGORITHM = "numpy.random.PCG64+SeedSequence"


def rng_identifier() -> str:
    return f"{RNG_ALGORITHM} (numpy {np.__version__})"


def seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def make_rng(seed) -> np.random.Generator:
    """Generator from an int, a SeedSequence, or an existing Generator (returned as is)."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed_sequence(seed)))


def spawn(seed, n: int) -> list[np.random.SeedSequence]:
    """``n`` independent child seeds of ``seed``."""
    if isinstance(seed, np.random.Generator):
        seed = seed.bit_generator.seed_seq
    return seed_sequence(seed).spawn(n)


def exponential(rng: np.random.Generator, rate: float) -> float:
    """Exp(rate) by inversion, -log(1 - U) / rate."""
    return -np.log1p(-rng.random()) / rate


def categorical(rng: np.random.Generator, cumulative: np.ndarray) -> int:
    """Index drawn by inversion against a cumulative probability vector."""
    u = rng.random() * cumulative[-1]
    return int(np.searchsorted(cumulative, u, side="right"))
