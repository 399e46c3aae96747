import json

import numpy as np
import pytest

from floorcast.cli import data_path
from floorcast.errors import DomainError, SchemaError
from floorcast.importance import predicted_floor
from floorcast.saestats import (SaeStats, load_sae_stats, save_sae_stats, summarize,
                                summary_from_counts, to_prediction_inputs, write_summary_csv)
from floorcast.io import read_csv


def stats(imp, freq, **kw):
    return SaeStats(layer=kw.get("layer", 0), d_model=kw.get("d_model", 4),
                    importance=imp, activation_freq=freq, token_count=kw.get("token_count", 100))


@pytest.mark.parametrize("n_alive, l0, alpha, g, d_crit", [
    (28665, 218.3, 0.9924, 26.92, 1065),
    (29169, 249.0, 0.9915, 24.6, 1186),
    (31006, 234.9, 0.9924, 27.04, 1147),
])
def test_summary_from_published_counts(n_alive, l0, alpha, g, d_crit):
    s = summary_from_counts(n_alive, l0)
    assert s.alpha == pytest.approx(alpha, abs=5e-4)
    assert s.g == pytest.approx(g, abs=0.3)
    assert s.d_crit == pytest.approx(d_crit, abs=8)


def test_summarize_hand_example():
    # alive: 3 features, L0 = 0.5 + 0.25 + 0.25 = 1.0, alpha = 2/3
    s = summarize(stats([3.0, 2.0, 1.0, 0.5], [0.5, 0.25, 0.25, 0.0]))
    assert s.n_alive == 3
    assert s.n_total == 4
    assert s.avg_l0 == pytest.approx(1.0)
    assert s.alpha == pytest.approx(2 / 3)


def test_summarize_is_order_independent():
    rng = np.random.default_rng(0)
    freq = rng.uniform(0, 0.01, 5000)
    imp = rng.random(5000)
    perm = rng.permutation(5000)
    assert summarize(stats(imp, freq)) == summarize(stats(imp[perm], freq[perm]))


def test_no_alive_features():
    with pytest.raises(DomainError):
        summarize(stats([1.0, 1.0], [0.0, 0.0]))


@pytest.mark.parametrize("imp, freq, message", [
    ([], [], "no features"),
    ([1.0, 2.0], [0.1], "length mismatch"),
    ([1.0, 2.0], [0.1, 1.5], "activation_freq[1]"),
    ([-1.0], [0.1], "importance[0]"),
])
def test_validation_messages(imp, freq, message):
    with pytest.raises(SchemaError, match=message.replace("[", r"\[").replace("]", r"\]")):
        stats(imp, freq)


def test_round_trip(tmp_path):
    s = SaeStats(layer=3, d_model=16, importance=[0.3, 0.1 + 0.2, 1e-300],
                 activation_freq=[0.5, 1.0, 0.0], token_count=10, note="x")
    p = save_sae_stats(s, tmp_path / "s.json")
    assert load_sae_stats(p) == s


def test_load_reports_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"layer": 1,\n "d_model": }')
    with pytest.raises(SchemaError, match=r"bad.json:2:"):
        load_sae_stats(p)


def test_load_rejects_missing_field_and_version(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"schema_version": 1, "layer": 1}))
    with pytest.raises(SchemaError, match="missing"):
        load_sae_stats(p)
    p.write_text(json.dumps({"schema_version": 9, "layer": 1, "d_model": 1, "token_count": 1,
                             "importance": [1], "activation_freq": [1]}))
    with pytest.raises(SchemaError, match="schema_version"):
        load_sae_stats(p)


def test_bundled_layers_reproduce_published_summary():
    published = {int(r["layer"]): r for r in read_csv(data_path("table1_sae_summary.csv"))}
    for layer in (8, 12, 16):
        s = summarize(load_sae_stats(data_path(f"sae_layer{layer:02d}.json")))
        ref = published[layer]
        assert s.n_alive == int(ref["alive_F"])
        assert s.avg_l0 == pytest.approx(float(ref["avg_L0"]), abs=0.05)
        assert s.alpha == pytest.approx(float(ref["alpha"]), abs=5e-4)
        assert s.g == pytest.approx(float(ref["g"]), abs=0.3)
        assert s.d_crit == pytest.approx(float(ref["d_crit"]), abs=8)


def test_bundled_layer12_predicts_published_floors():
    imp, act = to_prediction_inputs(load_sae_stats(data_path("sae_layer12.json")))
    floors = [predicted_floor(imp, act, d).floor_raw for d in (128, 256, 512, 768, 1024)]
    assert floors == pytest.approx([0.0795, 0.0400, 0.0111, 0.0016, 0.0001], abs=5e-5)


def test_prediction_inputs_drop_dead_features():
    imp, act = to_prediction_inputs(stats([5.0, 4.0, 3.0], [0.2, 0.0, 0.1]))
    assert list(imp.values) == [5.0, 3.0]
    assert list(act.second_moments) == [1.0, 1.0]


def test_summary_csv(tmp_path):
    p = write_summary_csv([summary_from_counts(28665, 218.3, layer=12)], tmp_path / "t.csv")
    rec = read_csv(p)[0]
    assert rec["layer"] == "12" and rec["alive_F"] == "28665"
    assert float(rec["d_crit"]) == pytest.approx(1065, abs=8)
