"""Print variable and constraint counts of both models for a range of bin counts.

Builds every model for real (no solving) and compares it with the closed-form
counts.  Usage: python3 scripts/count_models.py --bins 9 10 11 50
"""

from __future__ import annotations

import argparse
import time
from dataclasses import dataclass

from stochwaste.instance import random_instance
from stochwaste.models import VARIANTS, build_model, expected_counts
from stochwaste.scentree import BranchingStructure, random_tree


@dataclass
class CountConfig:
    bins: tuple[int, ...] = (9, 10, 11, 50)
    structure: str = "1x2x2x2x2x2"
    large: int = 121            # reported from the formula only


def main(cfg: CountConfig) -> None:
    s = BranchingStructure.parse(cfg.structure)
    base = random_tree(s, max(cfg.bins))
    print(f"{'bins':>5} {'model':>5} {'binary':>8} {'contin.':>9} {'equal.':>9} {'inequal.':>9} {'build s':>8}")
    for n in cfg.bins:
        inst = random_instance(n, s.T, seed=n, symmetric=True)
        tree = base.select_bins(range(1, n + 1))
        for v in VARIANTS:
            t0 = time.perf_counter()
            counts = build_model(inst, tree, v).size_report()
            dt = time.perf_counter() - t0
            assert tuple(counts.values()) == tuple(expected_counts(v, n, s.n_nodes, s.T).values())
            print(f"{n:>5} {v:>5} " + " ".join(f"{c:>9}" for c in counts.values()) + f" {dt:8.3f}")
    for v in VARIANTS:
        c = expected_counts(v, cfg.large, s.n_nodes, s.T)
        print(f"{cfg.large:>5} {v:>5} " + " ".join(f"{x:>9}" for x in c.values()) + "  (formula)")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--bins", type=int, nargs="+", default=list(CountConfig.bins))
    ap.add_argument("--structure", default=CountConfig.structure)
    a = ap.parse_args()
    main(CountConfig(tuple(a.bins), a.structure))
