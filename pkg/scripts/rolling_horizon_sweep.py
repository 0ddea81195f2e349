"""Rolling horizon versus the full tree model over every look-ahead window W.

Reports profit reduction (RP - RH) / RP and wall time per W on random
instances, plus the infeasible worst case for W = 1.
"""

from __future__ import annotations

import argparse
import time
from dataclasses import dataclass

from stochwaste.instance import random_instance
from stochwaste.markers import is_finite, to_text
from stochwaste.milp import SolverConfig, Status, solve_milp
from stochwaste.models import build_model, worst_case_instance
from stochwaste.rollhorizon import RhConfig, run_rolling_horizon
from stochwaste.scentree import BranchingStructure, random_tree


@dataclass
class SweepConfig:
    bins: int = 3
    structure: str = "1x2x2x1"
    instances: int = 3
    travel_cost: float = 0.1
    time_limit: float | None = None
    seed: int = 0


def reduction(rp, rh) -> str:
    if not is_finite(rh):
        return "∞"
    return f"{100 * (rp - rh) / rp:.2f}%" if rp > 0 else "n/a"


def main(cfg: SweepConfig) -> None:
    s = BranchingStructure.parse(cfg.structure)
    for k in range(cfg.instances):
        inst = random_instance(cfg.bins, s.T, seed=cfg.seed + k, travel_cost=cfg.travel_cost)
        tree = random_tree(s, cfg.bins, seed=cfg.seed + k, bin_ids=inst.bin_ids)
        t0 = time.perf_counter()
        full = solve_milp(build_model(inst, tree), SolverConfig())
        print(f"{inst.name}: RP = {full.objective:.3f} ({full.status.value}, {time.perf_counter() - t0:.2f}s)")
        if full.status != Status.OPTIMAL:
            continue
        for W in range(1, s.T - 1):
            t0 = time.perf_counter()
            res = run_rolling_horizon(inst, tree, RhConfig(window=W, time_limit=cfg.time_limit))
            print(f"  W={W}: RH = {to_text(res.profit, '{:.3f}'):>10}  reduction {reduction(full.objective, res.profit):>8}"
                  f"  {time.perf_counter() - t0:.2f}s")
    inst, tree = worst_case_instance(2, 5)
    print(f"worst case: RH(W=1) = {run_rolling_horizon(inst, tree, RhConfig(window=1)).profit!r}, "
          f"full model = {solve_milp(build_model(inst, tree)).objective:.3f}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--bins", type=int, default=SweepConfig.bins)
    ap.add_argument("--structure", default=SweepConfig.structure)
    ap.add_argument("--instances", type=int, default=SweepConfig.instances)
    ap.add_argument("--travel-cost", type=float, default=SweepConfig.travel_cost)
    ap.add_argument("--time-limit", type=float, default=None)
    ap.add_argument("--seed", type=int, default=SweepConfig.seed)
    a = ap.parse_args()
    main(SweepConfig(a.bins, a.structure, a.instances, a.travel_cost, a.time_limit, a.seed))
