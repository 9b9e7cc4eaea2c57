import json
import math
import re

import jsonschema
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tent.attention import (AttentionRecord, city_scores, collect_attention, export_attention,
                            head_city_scores, render_svg, schema, to_json, top_edges)
from tent.metrics import mae, mse, persistence_forecast
from tent.model import ModelConfig, forward, init_params, predict
from tent.tensor import DimensionError

finite = st.floats(-1e3, 1e3)


class TestMetrics:
    def test_examples(self):
        assert mae([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert mae([2.0, 4.0], [1.0, 2.0]) == 1.5
        assert mse([2.0, 4.0], [1.0, 2.0]) == 2.5

    @pytest.mark.parametrize("a,b", [([1.0], [1.0, 2.0]), ([], [])])
    def test_errors(self, a, b):
        with pytest.raises(DimensionError):
            mae(a, b)
        with pytest.raises(DimensionError):
            mse(a, b)

    @given(arrays(np.float64, 7, elements=finite), arrays(np.float64, 7, elements=finite))
    def test_jensen_and_loop_oracle(self, p, t):
        abs_sum = sq_sum = 0.0
        for a, b in zip(p, t):
            abs_sum += abs(b - a)
            sq_sum += (b - a) ** 2
        assert abs(mae(p, t) - abs_sum / 7) <= 1e-12 * max(1.0, abs_sum)
        assert abs(mse(p, t) - sq_sum / 7) <= 1e-12 * max(1.0, sq_sum)
        assert mae(p, t) <= math.sqrt(mse(p, t)) * (1 + 1e-12) + 1e-12

    def test_persistence(self):
        X = np.arange(2 * 3 * 2 * 2, dtype=float).reshape(2, 3, 2, 2)
        assert persistence_forecast(X, (1, 0)).tolist() == [X[0, 2, 1, 0], X[1, 2, 1, 0]]

    def test_model_output_metrics(self):
        cfg = ModelConfig(T=3, C=2, F=2, H=1, d_k=2, ffn_hidden=2)
        rng = np.random.default_rng(4)
        X, y = rng.random((9, 3, 2, 2)), rng.random(9)
        pred = predict(X, init_params(cfg, 4), cfg).ravel()
        assert abs(mae(pred, y) - sum(abs(a - b) for a, b in zip(y, pred)) / 9) <= 1e-12
        assert abs(mse(pred, y) - sum((a - b) ** 2 for a, b in zip(y, pred)) / 9) <= 1e-12


class TestScores:
    def test_uniform(self):
        S = np.full((4, 5, 3), 1 / 3)
        np.testing.assert_allclose(head_city_scores([S, S]), np.full((2, 3), 20 / 3), rtol=1e-14)

    def test_degenerate_single_step(self):
        S = np.array([[[0.2, 0.3, 0.5]]])
        assert np.array_equal(head_city_scores([S])[0], S[0, 0])

    def test_loop_oracle_exact(self):
        S = np.random.default_rng(0).random((2, 2, 3))
        expected = [((S[0, 0, c] + S[0, 1, c]) + S[1, 0, c]) + S[1, 1, c] for c in range(3)]
        assert head_city_scores([S])[0].tolist() == expected

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            head_city_scores([np.zeros((2, 2, 3)), np.zeros((2, 3, 3))])

    def test_city_scores(self):
        a = np.array([[1.0, 2.0, 3.0], [0.5, 0.25, 4.0]])
        assert city_scores(a).tolist() == [1.5, 2.25, 7.0]
        assert city_scores(a[:1]).tolist() == [1.0, 2.0, 3.0]

    @pytest.mark.parametrize("mode", ["test-mean", "per-sample"])
    def test_model_attention_invariants(self, mode):
        cfg = ModelConfig(T=5, C=4, F=2, H=2, d_k=4, ffn_hidden=3)
        X = np.random.default_rng(1).random((6, 5, 4, 2))
        S = collect_attention(X, init_params(cfg, 1), cfg, mode=mode, sample=2)
        rec = AttentionRecord(S, list("dcba"), horizon=4, target="b")
        assert np.array_equal(rec.as_c, rec.as_ch[0] + rec.as_ch[1])
        np.testing.assert_allclose(rec.as_ch.sum(axis=1), 25.0, atol=1e-9)
        assert abs(rec.as_c.sum() - 2 * 25) <= 1e-9

    def test_per_sample_matches_forward(self):
        cfg = ModelConfig(T=3, C=2, F=2, H=2, d_k=2, ffn_hidden=2)
        params = init_params(cfg, 2)
        X = np.random.default_rng(2).random((4, 3, 2, 2))
        S = collect_attention(X, params, cfg, mode="per-sample", sample=3)
        _, recs = forward(X[3], params, cfg)
        assert all(np.array_equal(S[r.head], r.S) for r in recs)


def record(H=2, C=3, T=2, seed=0, uniform=False):
    if uniform:
        S = np.full((H, T, T, C), 1.0 / C)
    else:
        raw = np.random.default_rng(seed).random((H, T, T, C))
        S = raw / raw.sum(axis=-1, keepdims=True)
    stations = ["oslo", "bergen", "alta"][:C]
    return AttentionRecord(S, stations, horizon=4, target="bergen",
                           coords={"oslo": (59.9, 10.7), "bergen": (60.4, 5.3), "alta": (70.0, 23.3)})


class TestExport:
    def test_json_roundtrip_and_schema(self, tmp_path):
        rec = record()
        export_attention(rec, tmp_path / "a.json", tmp_path / "a.svg", k=4)
        doc = json.loads((tmp_path / "a.json").read_text())
        jsonschema.validate(doc, schema())
        assert np.array_equal(np.array(doc["as_ch"]), rec.as_ch)
        assert np.array_equal(np.array(doc["as_c"]), rec.as_c)
        assert len(doc["edges"]) == 4 and doc["heads"] == 2
        assert doc["coordinates"]["alta"] == [70.0, 23.3]

    def test_schema_rejects_extra_fields(self):
        doc = to_json(record())
        doc["extra"] = 1
        with pytest.raises(jsonschema.ValidationError):
            jsonschema.validate(doc, schema())

    def test_top_k_all(self):
        rec = record()
        edges = top_edges(rec.as_ch, rec.stations, k=6)
        assert sorted((e["head"], e["station"]) for e in edges) == sorted(
            (h, s) for h in range(2) for s in rec.stations)
        weights = [e["weight"] for e in edges]
        assert weights == sorted(weights, reverse=True)

    def test_uniform_widths_equal(self):
        svg = render_svg(record(uniform=True), k=6)
        widths = set(re.findall(r'stroke-width="([0-9.]+)"', svg))
        assert widths == {"8.000000"}

    def test_svg_layout(self):
        svg = render_svg(record(), k=3)
        names = re.findall(r'<circle [^>]*fill="#[0-9a-f]+" data-station="(\w+)"', svg)
        assert names == ["alta", "bergen", "oslo"]
        assert re.search(r'fill="#d62728" data-station="bergen"', svg)
        assert svg.count("<line ") == 3
        assert svg == render_svg(record(), k=3)

    def test_unwritable_path(self, tmp_path):
        with pytest.raises(OSError):
            export_attention(record(), tmp_path / "missing" / "a.json")
