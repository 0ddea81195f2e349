import pickle

import pytest

from stochwaste.markers import NEG_INF, POS_INF, from_json, is_finite, to_json, to_text


def test_ordering_against_numbers():
    assert NEG_INF < -1e308 < POS_INF
    assert POS_INF > 5 and not POS_INF < 5
    assert NEG_INF <= NEG_INF and not NEG_INF < NEG_INF
    assert max([3.0, POS_INF, 1.0], key=lambda v: v if is_finite(v) else float("inf")) is POS_INF


def test_no_silent_arithmetic():
    with pytest.raises(TypeError):
        float(NEG_INF)
    with pytest.raises(TypeError):
        NEG_INF + 1


def test_text_and_json():
    assert to_text(NEG_INF) == "-∞" and to_text(POS_INF) == "∞"
    assert to_text(None) == "n/a" and to_text(1.5) == "1.5"
    for v in (NEG_INF, POS_INF, 2.0):
        assert from_json(to_json(v)) == v
    assert from_json(to_json(NEG_INF)) is NEG_INF


def test_singletons_survive_pickle():
    assert pickle.loads(pickle.dumps(NEG_INF)) is NEG_INF
    assert pickle.loads(pickle.dumps(POS_INF)) is POS_INF
