import json

import numpy as np
import pytest
from cases import small_case

from stochwaste.markers import NEG_INF, POS_INF, is_finite
from stochwaste.measures import (FAILED, MeasureError, MeasureReport, compute_EV_and_EEV,
                                 compute_MEIV, compute_MESSV, compute_measures, compute_WS,
                                 expected_value_tree, loss_ratio, measure_table, save_report)
from stochwaste.models import closed_form_profit_C0, worst_case_instance
from stochwaste.scentree import ScenarioTree

TOL = 1e-6


def check_ordering(rep):
    assert is_finite(rep.RP)
    if is_finite(rep.WS):
        assert rep.WS >= rep.RP - TOL
    for vals in (rep.EEV, rep.MESSV, rep.MEIV):
        for v in vals:
            assert v != FAILED
            if is_finite(v):
                assert rep.RP >= v - TOL


class TestRatios:
    def test_loss_ratio(self):
        assert loss_ratio(10.0, 8.0) == pytest.approx(0.2)
        assert loss_ratio(10.0, NEG_INF) is POS_INF
        assert loss_ratio(0.0, 1.0) is None
        assert loss_ratio(-3.0, 1.0) is None
        assert loss_ratio(FAILED, 1.0) == FAILED
        assert loss_ratio(10.0, FAILED) == FAILED

    def test_report_rendering(self):
        rep = MeasureReport("a", 100.0, 90.0, 110.0, EEV=[95.0, NEG_INF], MESSV=[100.0, 99.0],
                            MEIV=[FAILED, 50.0])
        assert rep.EVPI == pytest.approx(0.1)
        assert rep.VSS[1] is POS_INF
        assert rep.has_error_marker
        table = measure_table([rep, MeasureReport("b", -5.0, 1.0, 2.0, [1.0, 1.0], [1.0, 1.0],
                                                  [1.0, 1.0])])
        lines = dict(line.split(",", 1) for line in table.strip().splitlines())
        assert lines["measure"] == "a,b"
        assert lines["%EVPI"] == "10%,n/a"
        assert lines["%VSS^1"] == "5%,n/a"
        assert lines["%VSS^2"].startswith("∞")
        assert lines["%MLUDS^1"].startswith("error")
        assert lines["RP"] == "100.00,-5.00"
        assert measure_table([]) == ""

    def test_absolute_losses_when_rp_negative(self):
        rep = MeasureReport("neg", -4.0, -5.0, -3.0, EEV=[-6.0], MESSV=[NEG_INF], MEIV=[-4.0])
        assert not rep.percentages_available
        assert rep.EVPI is None and rep.VSS == [None]
        losses = rep.absolute_losses()
        assert losses["EEV"] == [2.0] and losses["MESSV"] == [POS_INF] and losses["MEIV"] == [0.0]

    def test_save(self, tmp_path):
        rep = MeasureReport("s", 1.0, 1.0, 1.0, [NEG_INF], [1.0], [1.0])
        data = json.loads(save_report(rep, tmp_path / "m.json").read_text(encoding="utf-8"))
        assert data["EEV"] == ["-inf"]


class TestSolved:
    @pytest.mark.parametrize("seed", range(4))
    def test_ordering(self, seed):
        inst, tree = small_case(seed, travel_cost=0.05, max_bins=3, max_T=4, max_scenarios=4)
        rep = compute_measures(inst, tree)
        check_ordering(rep)
        assert len(rep.EEV) == tree.T - 1

    def test_single_scenario_all_zero(self):
        inst, tree = small_case(1, travel_cost=0.01, max_bins=3)
        path = ScenarioTree.single_path(tree.rates[tree.leaf_paths()[0]], tree.bin_ids)
        rep = compute_measures(inst, path)
        assert rep.RP > 0
        for label, v in rep.rows()[3:]:
            assert v == 0.0, label

    def test_ws_equals_closed_form_without_travel(self):
        inst, tree = small_case(2)
        ws, excluded = compute_WS(inst, tree)
        assert excluded == 0
        assert ws == pytest.approx(closed_form_profit_C0(inst, tree), abs=1e-6)

    def test_single_measure_functions(self):
        inst, tree = small_case(3, travel_cost=0.05, max_bins=3, max_T=3, max_scenarios=4)
        rep = compute_measures(inst, tree)
        ev, eev = compute_EV_and_EEV(inst, tree, 1)
        assert ev == pytest.approx(rep.EV, abs=TOL) and eev == pytest.approx(rep.EEV[0], abs=TOL)
        assert compute_MESSV(inst, tree, 1) == pytest.approx(rep.MESSV[0], abs=TOL)
        assert compute_MEIV(inst, tree, 1) == pytest.approx(rep.MEIV[0], abs=TOL)
        with pytest.raises(MeasureError):
            compute_MEIV(inst, tree, tree.T)

    def test_meiv_monotone_in_stage(self):
        inst, tree = small_case(0, travel_cost=0.05, max_bins=3, max_T=4, max_scenarios=4)
        rep = compute_measures(inst, tree)
        finite = [v for v in rep.MEIV if is_finite(v)]
        assert all(a >= b - TOL for a, b in zip(finite, finite[1:]))

    def test_infeasible_expected_value_path(self):
        inst, tree = worst_case_instance(2, 5)
        rep = compute_measures(inst, tree)
        assert is_finite(rep.RP)
        assert np.allclose(expected_value_tree(tree).rates, tree.rates)
