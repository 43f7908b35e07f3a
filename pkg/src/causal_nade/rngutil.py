"""Seed-stream plumbing: every stochastic component derives its generator
from explicit integer parts, so runs are bit-reproducible."""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def seed_sequence(*parts: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(p) & _MASK for p in parts])


def rng(*parts: int) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(*parts))


def child_seed(*parts: int) -> int:
    """A derived 32-bit seed, stable across runs; used for replayable rows."""
    return int(seed_sequence(*parts).generate_state(1)[0])
