"""Small seeded instance/tree pairs shared by several test modules."""

from __future__ import annotations

import numpy as np

from stochwaste.instance import random_instance
from stochwaste.scentree import BranchingStructure, random_tree


def small_case(seed: int, travel_cost: float = 0.0, symmetric: bool = False,
               max_bins: int = 5, max_T: int = 4, max_scenarios: int = 8, max_rate: float = 0.5):
    """Random instance with ``N <= max_bins``, ``T <= max_T`` and at most ``max_scenarios`` leaves."""
    rng = np.random.default_rng(seed)
    N = int(rng.integers(2, max_bins + 1))
    T = int(rng.integers(3, max_T + 1))
    while True:
        counts = (1, *rng.integers(1, 4, size=T - 1).tolist())
        if int(np.prod(counts)) <= max_scenarios:
            break
    inst = random_instance(N, T, seed=seed, travel_cost=travel_cost, symmetric=symmetric)
    tree = random_tree(BranchingStructure(counts), N, seed=seed, max_rate=max_rate,
                       bin_ids=inst.bin_ids)
    return inst, tree
