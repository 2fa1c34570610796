"""Seedable random sources.

One integer seed is threaded through every stochastic operation. Per-sample substreams are
derived from (seed, counter...) so results do not depend on evaluation order.
"""

from __future__ import annotations

import numpy as np
import torch


def substream(seed: int, *counter: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(counter)))


def derive_seed(seed: int, *counter: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=tuple(counter)).generate_state(1, dtype=np.uint32)[0])


def torch_generator(seed: int, *counter: int) -> torch.Generator:
    generator = torch.Generator()
    generator.manual_seed(derive_seed(seed, *counter))
    return generator
