"""Deterministic RNG stream derivation for the Gibbs sampler.

Each conditional draw gets its own counter-based Philox stream identified by
(iteration, step, unit), keyed by the run seed. Streams are independent and
reproducible regardless of execution order, so unit-indexed draws within a
step can run in parallel and still match sequential execution bit for bit.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

STEP_INIT = 0
STEP_FFBS = 1
STEP_INTERACTION = 2
STEP_INTERACTION_FIN = 3
STEP_TRANSPROB = 4
STEP_TRANSPROB_FIN = 5
STEP_COEF = 6
STEP_SCALE = 7


@lru_cache(maxsize=8)
def _seed_sequence(seed: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed))


def stream(seed: int, iteration: int, step: int, unit: int) -> np.random.Generator:
    """Generator for the draw identified by (iteration, step, unit)."""
    counter = np.array([0, unit, step, iteration], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(seed=_seed_sequence(seed), counter=counter))


def chain_seed(base_seed: int, chain_index: int) -> int:
    """Derived seed for an independent sampler chain."""
    if chain_index == 0:
        return int(base_seed)
    ss = np.random.SeedSequence(entropy=int(base_seed), spawn_key=(int(chain_index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
