import json
import math

import numpy as np
import pytest

from credal_edl import data_io
from credal_edl.data_io import (RunConfig, SampleRecord, SyntheticSpec, generate_synthetic,
                                load_config, load_report, load_samples, write_report,
                                write_samples)
from credal_edl.credal import entropy_decomposition, reduce_to_extremes
from credal_edl.exceptions import InconsistentDimensions, ParseError, SchemaError


def write_lines(path, *objs):
    path.write_text("".join((o if isinstance(o, str) else json.dumps(o)) + "\n" for o in objs))
    return path


class TestLoad:
    def test_one_record(self, tmp_path):
        ens = np.full((3, 4), 0.25).tolist()
        recs = load_samples(write_lines(tmp_path / "a.jsonl", {"id": "x", "ensemble": ens}))
        assert len(recs) == 1
        assert recs[0].n_members == 3 and recs[0].k == 4 and not recs[0].counts_mode

    def test_bad_row_sum(self, tmp_path):
        path = write_lines(tmp_path / "a.jsonl", {"id": "x", "ensemble": [[0.6, 0.6]]})
        with pytest.raises(SchemaError) as info:
            load_samples(path)
        assert info.value.record == "x" and info.value.field == "ensemble"

    def test_counts_mode(self, tmp_path):
        path = write_lines(tmp_path / "a.jsonl", {"id": "c", "counts": [[9, 0], [2.5, 1]]})
        rec = load_samples(path)[0]
        assert rec.counts_mode
        np.testing.assert_allclose(rec.to_ensemble().members[0], [10 / 11, 1 / 11])

    def test_flat_vector_is_one_member(self, tmp_path):
        rec = load_samples(write_lines(tmp_path / "a.jsonl",
                                       {"id": "v", "ensemble": [0.3, 0.7], "true_label": 1}))[0]
        assert rec.n_members == 1 and rec.true_label == 1

    def test_parse_error_has_line(self, tmp_path):
        path = write_lines(tmp_path / "a.jsonl", {"id": "x", "ensemble": [0.5, 0.5]}, "", "{oops")
        with pytest.raises(ParseError) as info:
            load_samples(path)
        assert info.value.line == 3

    def test_inconsistent_k(self, tmp_path):
        path = write_lines(tmp_path / "a.jsonl", {"id": "a", "ensemble": [0.5, 0.5]},
                           {"id": "b", "ensemble": [0.2, 0.3, 0.5]})
        with pytest.raises(InconsistentDimensions):
            load_samples(path)

    @pytest.mark.parametrize("obj, field", [
        ({"ensemble": [0.5, 0.5]}, "id"),
        ({"id": "a"}, "ensemble"),
        ({"id": "a", "ensemble": [0.5, 0.5], "counts": [1, 1]}, "ensemble"),
        ({"id": "a", "ensemble": [0.5, 0.5], "true_label": 2}, "true_label"),
        ({"id": "a", "ensemble": [0.5, 0.5], "true_label": True}, "true_label"),
        ({"id": "a", "ensemble": [0.5, 0.5], "is_ood": "yes"}, "is_ood"),
        ({"id": "a", "counts": [1, -1]}, "counts"),
        ({"id": "a", "ensemble": [[0.5, 0.5], [1.0]]}, "ensemble"),
        ({"id": "a", "ensemble": [1.0]}, "ensemble"),
    ])
    def test_schema_errors(self, tmp_path, obj, field):
        with pytest.raises(SchemaError) as info:
            load_samples(write_lines(tmp_path / "a.jsonl", obj))
        assert info.value.field == field

    def test_record_needs_one_matrix(self):
        with pytest.raises(SchemaError):
            SampleRecord("a")


class TestRoundTrip:
    def test_samples(self, tmp_path):
        recs = generate_synthetic(SyntheticSpec(k=4, s=2, n_id=5, n_ood=5, seed=3))
        recs.append(SampleRecord("c", counts=np.array([[1.5, 0, 2]]) * 1.0, true_label=None))
        recs = recs[:-1]
        path = tmp_path / "s.jsonl"
        write_samples(recs, path)
        again = load_samples(path)
        assert again == recs
        write_samples(again, tmp_path / "t.jsonl")
        assert (tmp_path / "t.jsonl").read_bytes() == path.read_bytes()

    def test_report(self, tmp_path):
        rows = [{"id": "a", "decision": "predict", "region": [0, 2], "d_star": math.inf,
                 "slack": -math.inf, "nested": {"x": 1.5}},
                {"id": "b", "decision": "abstain_epistemic", "region": None}]
        path = tmp_path / "r.jsonl"
        write_report(rows, {"counts": {"predict": 1}}, path)
        got, summary = load_report(path)
        assert got == rows and summary == {"id": "__summary__", "counts": {"predict": 1}}
        text = path.read_text()
        assert "Infinity" not in text and json.loads(text.splitlines()[0])["d_star"] == "inf"

    def test_empty_report(self, tmp_path):
        write_report([], {"n_samples": 0}, tmp_path / "r.jsonl")
        assert load_report(tmp_path / "r.jsonl") == ([], {"id": "__summary__", "n_samples": 0})

    def test_field_order_is_kept(self, tmp_path):
        write_report([{"id": "a", "z": 1, "b": 2}], {}, tmp_path / "r.jsonl")
        first = (tmp_path / "r.jsonl").read_text().splitlines()[0]
        assert first.index('"z"') < first.index('"b"')


class TestSynthetic:
    def test_deterministic(self, tmp_path):
        spec = SyntheticSpec(k=5, s=3, n_id=20, n_ood=20, seed=7)
        write_samples(generate_synthetic(spec), tmp_path / "a.jsonl")
        write_samples(generate_synthetic(spec), tmp_path / "b.jsonl")
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
        other = generate_synthetic(SyntheticSpec(k=5, s=3, n_id=20, n_ood=20, seed=8))
        assert other != generate_synthetic(spec)

    def test_shapes_and_flags(self):
        recs = generate_synthetic(SyntheticSpec(k=6, s=4, n_id=3, n_ood=2))
        assert [r.is_ood for r in recs] == [False] * 3 + [True] * 2
        for r in recs:
            assert r.ensemble.shape == (4, 6)
            np.testing.assert_allclose(r.ensemble.sum(axis=1), 1.0)
            assert 0 <= r.true_label < 6

    def _mean_eu(self, spread):
        spec = SyntheticSpec(k=5, s=3, n_id=40, n_ood=1, spread_id=spread, seed=1)
        eus = [entropy_decomposition(reduce_to_extremes(r.ensemble), exact=True).eu
               for r in generate_synthetic(spec) if not r.is_ood]
        return float(np.mean(eus))

    def test_spread_controls_disagreement(self):
        tight, loose = self._mean_eu(1e6), self._mean_eu(0.5)
        assert tight < 1e-2 < loose

    def test_validation(self):
        with pytest.raises(SchemaError):
            SyntheticSpec(k=1)
        with pytest.raises(SchemaError):
            SyntheticSpec(spread_ood=0)


class TestConfig:
    def test_defaults_and_override(self):
        cfg = RunConfig()
        assert cfg.gamma == 0.05 and cfg.n_bins == 15
        assert cfg.replace(gamma=0.1, epsilon=None).gamma == 0.1

    @pytest.mark.parametrize("key, value", [
        ("gamma", 0.0), ("gamma", 1.0), ("epsilon", 0), ("mode", "x"), ("n_bins", 0),
        ("hull_tol", 0.0), ("seed", -1), ("grid", (0, 2)),
    ])
    def test_invalid(self, key, value):
        with pytest.raises(SchemaError) as info:
            RunConfig.from_mapping({key: value})
        assert info.value.field == key

    def test_unknown_key(self):
        with pytest.raises(SchemaError):
            RunConfig.from_mapping({"gama": 0.1})

    def test_load_yaml_and_json(self, tmp_path):
        (tmp_path / "c.yaml").write_text("gamma: 0.1\nexact_ihdr: true\n")
        (tmp_path / "c.json").write_text('{"epsilon": 0.25}')
        assert load_config(tmp_path / "c.yaml") == {"gamma": 0.1, "exact_ihdr": True}
        assert load_config(tmp_path / "c.json") == {"epsilon": 0.25}
        (tmp_path / "n.yaml").write_text("a:\n  b: 1\n")
        with pytest.raises(SchemaError):
            load_config(tmp_path / "n.yaml")
        (tmp_path / "bad.yaml").write_text("a: [1,\n")
        with pytest.raises(ParseError):
            load_config(tmp_path / "bad.yaml")


def test_summary_id_constant():
    assert data_io.SUMMARY_ID == "__summary__"
