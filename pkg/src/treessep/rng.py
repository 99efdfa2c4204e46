"""Seeded streams: every replica gets (master_seed, replica_index) -> independent streams."""

from __future__ import annotations

import numpy as np


def replica_sequence(master_seed: int, replica: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master_seed), int(replica)])


def split(seed) -> tuple[np.random.Generator, int]:
    """Generator for initial conditions plus a 32-bit seed for the compiled dynamics."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    init_ss, dyn_ss = ss.spawn(2)
    return np.random.default_rng(init_ss), dynamics_seed(dyn_ss)


def dynamics_seed(seed) -> int:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    return int(ss.generate_state(1, dtype=np.uint32)[0])
