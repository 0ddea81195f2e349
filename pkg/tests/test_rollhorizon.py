import json

import numpy as np
import pytest
from cases import small_case
from hypothesis import given
from hypothesis import strategies as st

from stochwaste.markers import NEG_INF
from stochwaste.milp import Status, solve_milp
from stochwaste.models import build_model_M, closed_form_profit_C0, worst_case_instance
from stochwaste.rollhorizon import (RhConfig, RollingHorizonError, TimeBudget, run_rolling_horizon,
                                    simulate_budget, subtree_restriction, time_budget_schedule)
from stochwaste.scentree import BranchingStructure, random_tree, validate_tree


class TestBudget:
    def test_rollover_example(self):
        out = simulate_budget(7200, [100, 5000, 0, 0, 0])
        assert out[0] == (1440.0, 100.0)
        assert out[1][0] == pytest.approx(2780.0)
        assert out[1][1] == pytest.approx(2780.0)     # stopped at its budget

    def test_schedule_formula(self):
        assert time_budget_schedule(100, 4) == [25.0] * 4
        assert time_budget_schedule(100, 4, [10, 30]) == [25.0, 40.0, 35.0, 60.0]
        with pytest.raises(ValueError):
            time_budget_schedule(0, 3)
        with pytest.raises(ValueError):
            time_budget_schedule(10, 1, [1, 2])

    @given(st.integers(1, 3600), st.lists(st.integers(0, 5000), min_size=1, max_size=12))
    def test_never_exceeds_total(self, total, demands):
        out = simulate_budget(total, demands)
        assert sum(u for _, u in out) <= total + 1e-9
        tb = TimeBudget(float(total), len(demands))
        spent = 0
        for k, want in enumerate(demands):
            b = tb.next_budget()
            assert b == pytest.approx((k + 1) * total / len(demands) - spent)
            use = min(want, b)
            tb.record(use)
            spent += use

    def test_exhausted(self):
        tb = TimeBudget(10, 1)
        tb.record(3)
        with pytest.raises(ValueError):
            tb.next_budget()


class TestConfig:
    def test_window_range(self):
        RhConfig(window=2).check_horizon(4)
        with pytest.raises(RollingHorizonError):
            RhConfig(window=3).check_horizon(4)
        with pytest.raises(ValueError):
            RhConfig(window=0)
        with pytest.raises(ValueError):
            RhConfig(time_limit=0)


class TestSubtrees:
    def test_conditional_probabilities(self):
        tree = random_tree(BranchingStructure((1, 2, 3, 2)), 2, seed=3)
        subs = subtree_restriction(tree, 2, 4)
        assert [r for r, _ in subs] == tree.nodes_at(2).tolist()
        for r, sub in subs:
            assert validate_tree(sub).ok
            assert sub.T == 3 and sub.n_nodes == 1 + 3 + 6
            leaf_mass = sum(tree.prob[n] for n in tree.leaves if r in tree.path(int(n)))
            assert leaf_mass / tree.prob[r] == pytest.approx(1.0)
        with pytest.raises(RollingHorizonError):
            subtree_restriction(tree, 3, 3)


class TestHeuristic:
    @pytest.mark.parametrize("seed", range(4))
    def test_zero_travel_cost_reaches_optimum(self, seed):
        inst, tree = small_case(seed)
        opt = closed_form_profit_C0(inst, tree)
        for W in range(1, tree.T - 1):
            res = run_rolling_horizon(inst, tree, RhConfig(window=W))
            assert res.profit == pytest.approx(opt, abs=1e-6)

    def test_never_beats_full_model(self):
        inst, tree = small_case(2, travel_cost=1.0, max_bins=3, max_T=4, max_scenarios=4)
        opt = solve_milp(build_model_M(inst, tree)).objective
        res = run_rolling_horizon(inst, tree, RhConfig(window=1))
        assert res.profit is NEG_INF or res.profit <= opt + 1e-6

    def test_worst_case(self):
        inst, tree = worst_case_instance(2, 5)
        res = run_rolling_horizon(inst, tree, RhConfig(window=1))
        assert res.profit is NEG_INF
        assert "infeasible" in res.trace.failure
        full = solve_milp(build_model_M(inst, tree))
        assert full.status == Status.OPTIMAL
        # looking two stages ahead sees the overflow coming
        res2 = run_rolling_horizon(inst, tree, RhConfig(window=2))
        assert res2.profit == pytest.approx(full.objective, abs=1e-6)

    def test_trace_and_budget(self, tmp_path):
        inst, tree = small_case(1)
        res = run_rolling_horizon(inst, tree, RhConfig(window=1, time_limit=30.0))
        profit, plan, trace = res
        assert len(trace.steps) == tree.T - 1
        assert sum(min(s.wall_time, s.budget) for s in trace.steps) <= 30.0
        data = json.loads(trace.save(tmp_path / "trace.json").read_text())
        assert data["window"] == 1
        assert res.to_dict()["kpis"]["profit"] == pytest.approx(profit)
        assert plan.profit == pytest.approx(profit)

    def test_horizon_mismatch(self):
        inst, tree = small_case(0)
        with pytest.raises(RollingHorizonError):
            run_rolling_horizon(inst, tree, RhConfig(window=tree.T - 1))
