import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import accumulation_oracle

from stochwaste.instance import (Bin, DataQualityError, DistanceMatrix, FillHistory, IngestionError,
                                 Instance, InstanceError, Parameters, common_span,
                                 derive_accumulation_trajectories, draw_instance, instance_from_dict,
                                 load_fill_histories, load_instance, random_instance,
                                 save_fill_histories, save_instance, symmetrize_distances,
                                 synthetic_city)


def tiny(n=2, **params):
    d = np.ones((n + 1, n + 1)) - np.eye(n + 1)
    return Instance(Parameters(**params), tuple(Bin(i + 1, 2.5, 0.1) for i in range(n)),
                    DistanceMatrix(d), name="tiny")


class TestParameters:
    def test_defaults(self):
        p = Parameters()
        assert (p.C, p.R, p.Q, p.B, p.T) == (1.0, 0.30, 2000.0, 30.0, 6)

    @pytest.mark.parametrize("field,value", [("travel_cost_per_km", -1), ("selling_price", -0.1),
                                             ("vehicle_capacity", 0), ("waste_density", 0),
                                             ("horizon", 1), ("horizon", 2.5), ("big_m", 10)])
    def test_rejects(self, field, value):
        with pytest.raises(InstanceError):
            Parameters(**{field: value})


class TestInstance:
    def test_kg_conversion(self):
        inst = tiny()
        assert np.allclose(inst.capacity_kg, 75.0)
        assert np.allclose(inst.initial_kg, 7.5)

    def test_zero_bins_rejected(self):
        with pytest.raises(InstanceError):
            Instance(Parameters(), (), DistanceMatrix(np.zeros((1, 1))))

    def test_matrix_dimension_checked(self):
        with pytest.raises(InstanceError):
            Instance(Parameters(), (Bin(1),), DistanceMatrix(np.zeros((3, 3))))

    def test_duplicate_ids(self):
        with pytest.raises(InstanceError):
            Instance(Parameters(), (Bin(1), Bin(1)), DistanceMatrix(np.zeros((3, 3))))

    @pytest.mark.parametrize("bad", [[[0, -1], [1, 0]], [[1, 1], [1, 0]], [[0, np.inf], [1, 0]],
                                     [[0, 1, 2], [1, 0, 2]]])
    def test_bad_matrices(self, bad):
        with pytest.raises(InstanceError):
            DistanceMatrix(np.array(bad, dtype=float))

    def test_bin_validation(self):
        with pytest.raises(InstanceError):
            Bin(1, capacity_m3=0)
        with pytest.raises(InstanceError):
            Bin(1, initial_fill=1.5)

    def test_round_trip(self, tmp_path):
        inst = random_instance(4, 3, seed=2)
        path = save_instance(inst, tmp_path / "i.json")
        back = load_instance(path)
        assert back.bin_ids == inst.bin_ids
        assert back.distances == inst.distances
        assert back.parameters == inst.parameters
        assert back.coordinates == inst.coordinates

    def test_overrides_and_unknown(self, tmp_path):
        inst = random_instance(2, 3, seed=0)
        data = inst.to_dict()
        assert instance_from_dict(data, {"horizon": 5}).T == 5
        with pytest.raises(InstanceError):
            instance_from_dict(data, {"speed": 3})
        data["schema_version"] = 9
        with pytest.raises(InstanceError):
            instance_from_dict(data)

    def test_missing_and_malformed_files(self, tmp_path):
        with pytest.raises(InstanceError, match="not found"):
            load_instance(tmp_path / "nope.json")
        (tmp_path / "bad.json").write_text("{", encoding="utf-8")
        with pytest.raises(InstanceError):
            load_instance(tmp_path / "bad.json")
        (tmp_path / "lack.json").write_text(json.dumps({"bins": []}), encoding="utf-8")
        with pytest.raises(InstanceError, match="parameters"):
            load_instance(tmp_path / "lack.json")


class TestDistances:
    def test_symmetrize(self):
        d = DistanceMatrix(np.array([[0, 1, 4], [3, 0, 2], [2, 2, 0.0]]))
        s = symmetrize_distances(d)
        assert s.is_symmetric and not d.is_symmetric
        assert s.values[0, 1] == 2.0 and s.values[0, 2] == 3.0
        assert s.original is d
        assert symmetrize_distances(s).original is d

    def test_asymmetry_measure(self):
        d = DistanceMatrix(np.array([[0, 1.0], [3.0, 0]]))
        assert d.asymmetry() == pytest.approx(2 / 2)
        assert DistanceMatrix(np.zeros((2, 2))).asymmetry() == 0.0


class TestHistories:
    def test_rates_match_day_walk(self):
        h = FillHistory(7, (1, 3, 4, 8), (0.2, 0.6, 0.1, 0.8))
        r = derive_accumulation_trajectories(h)
        ref = accumulation_oracle(h.days, h.fills)
        assert r.first_day == 1 and r.last_day == 8
        for day, rate in ref.items():
            assert r.on(day) == pytest.approx(rate, abs=1e-15)

    @given(st.lists(st.integers(1, 5), min_size=1, max_size=8),
           st.lists(st.floats(0, 1), min_size=9, max_size=9))
    def test_rates_property(self, gaps, fills):
        days = tuple(np.cumsum([1] + gaps).tolist())
        fills = tuple(fills[: len(days)])
        h = FillHistory(1, days, fills)
        r = derive_accumulation_trajectories(h)
        ref = accumulation_oracle(days, fills)
        assert set(ref) == set(range(days[0], days[-1] + 1))
        for day, rate in ref.items():
            assert r.on(day) == pytest.approx(rate, abs=1e-15)
        # integrating the rates over an interval recovers the observed fill
        for k in range(1, len(days)):
            total = sum(r.on(t) for t in range(days[k - 1] + 1, days[k] + 1))
            assert total == pytest.approx(fills[k], abs=1e-12)

    def test_validation(self):
        with pytest.raises(IngestionError):
            FillHistory(1, (1, 1), (0.1, 0.2))
        with pytest.raises(DataQualityError):
            FillHistory(1, (1, 2), (0.1, 1.2))
        with pytest.raises(IngestionError):
            derive_accumulation_trajectories(FillHistory(1, (1,), (0.1,)))

    def test_csv_round_trip(self, tmp_path):
        hist = {1: FillHistory(1, (1, 3), (0.1, 0.4)), 2: FillHistory(2, (2, 5, 6), (0.0, 0.3, 0.2))}
        path = save_fill_histories(hist, tmp_path / "h.csv")
        assert load_fill_histories(path) == hist

    def test_csv_errors(self, tmp_path):
        with pytest.raises(IngestionError, match="not found"):
            load_fill_histories(tmp_path / "missing.csv")
        p = tmp_path / "bad.csv"
        p.write_text("bin_id,day_index,fill_fraction\n1,2,x\n", encoding="utf-8")
        with pytest.raises(IngestionError, match="malformed"):
            load_fill_histories(p)
        p.write_text("1,2,0.1\n1,2,0.3\n", encoding="utf-8")
        with pytest.raises(IngestionError, match="duplicate"):
            load_fill_histories(p)

    def test_common_span(self):
        a = derive_accumulation_trajectories(FillHistory(1, (1, 5), (0, 0.4)))
        b = derive_accumulation_trajectories(FillHistory(2, (3, 9), (0, 0.6)))
        assert common_span({1: a, 2: b}) == (4, 5)
        c = derive_accumulation_trajectories(FillHistory(3, (6, 9), (0, 0.3)))
        with pytest.raises(IngestionError):
            common_span({1: a, 3: c})


class TestGenerators:
    def test_synthetic_city_is_seeded(self):
        a = synthetic_city(12, seed=3)
        b = synthetic_city(12, seed=3)
        assert a.instance.distances == b.instance.distances
        assert a.histories == b.histories
        assert a.instance.distances.is_asymmetric

    def test_draw_instance_naming_and_submatrix(self):
        master = synthetic_city(15, seed=1).instance
        sub = draw_instance(master, 5, draw=2, seed=0)
        assert sub.name == "inst_2_5"
        rows = [0] + [master.bin_ids.index(b) + 1 for b in sub.bin_ids]
        assert np.array_equal(sub.distances.values, master.distances.values[np.ix_(rows, rows)])
        assert draw_instance(master, 5, draw=2, seed=0).bin_ids == sub.bin_ids
        with pytest.raises(InstanceError):
            draw_instance(master, 16, draw=1)

    def test_random_instance_symmetric_flag(self):
        assert random_instance(4, 3, seed=0, symmetric=True).distances.is_symmetric
        assert random_instance(4, 3, seed=0).distances.is_asymmetric
