import json
import math

import numpy as np
import pytest

from spikecap import io as sio
from spikecap.capacity_solver import Coding
from spikecap.core_it import entropy, example_source
from spikecap.errors import ValidationError
from spikecap.neuron_channel import CountChannelConfig, GammaChannel


class TestDeterministicJson:
    def test_floats_round_trip(self):
        vals = [0.1, 1 / 3, 2.0 ** -1074, 1e300, -0.0, 123456789.123456789]
        back = json.loads(sio.dumps({"v": vals}))["v"]
        assert back == vals

    def test_special_values(self):
        text = sio.dumps({"a": math.inf, "b": math.nan, "c": -math.inf})
        assert json.loads(text) == {"a": "inf", "b": "nan", "c": "-inf"}

    def test_numpy_types(self):
        text = sio.dumps({"a": np.float64(0.5), "b": np.int64(3), "c": np.arange(3), "d": np.bool_(True)})
        assert json.loads(text) == {"a": 0.5, "b": 3, "c": [0, 1, 2], "d": True}

    def test_byte_identical(self, solved):
        sol = solved(1.0, "rate")
        prov = sio.provenance({"kappa": 1.0})
        assert sio.dumps(sio.solution_to_dict(sol, prov)) == sio.dumps(sio.solution_to_dict(sol, prov))

    def test_unknown_type(self):
        with pytest.raises(TypeError):
            sio.dumps({"x": object()})


class TestReaders:
    def test_example_source_file(self, tmp_path):
        from pathlib import Path

        p = Path(__file__).resolve().parents[1] / "data" / "example_source.json"
        pmf = sio.read_pmf(p)
        assert len(pmf) == 256
        assert entropy(pmf) == pytest.approx(entropy(example_source()), abs=1e-12)

    def test_pmf_csv(self, tmp_path):
        p = tmp_path / "p.csv"
        p.write_text("# comment\na,b,c\n0.5,0.25,0.25\n")
        assert sio.read_pmf(p).probs.tolist() == [0.5, 0.25, 0.25]

    def test_pmf_missing_field(self, tmp_path):
        p = tmp_path / "p.json"
        p.write_text('{"labels": ["a"]}')
        with pytest.raises(ValidationError, match="'probs'"):
            sio.read_pmf(p)

    def test_pmf_bad_sum(self, tmp_path):
        p = tmp_path / "p.json"
        p.write_text('{"labels": ["a", "b"], "probs": [0.5, 0.6]}')
        with pytest.raises(ValidationError, match="'probs'"):
            sio.read_pmf(p)
        assert sio.read_pmf(p, renormalize=True).probs.sum() == pytest.approx(1.0)

    def test_non_numeric(self, tmp_path):
        p = tmp_path / "p.json"
        p.write_text('{"labels": ["a", "b"], "probs": [0.5, "x"]}')
        with pytest.raises(ValidationError, match="numbers"):
            sio.read_pmf(p)

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "p.json"
        p.write_text("{")
        with pytest.raises(ValidationError, match="invalid JSON"):
            sio.read_pmf(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValidationError, match="no such file"):
            sio.read_pmf(tmp_path / "nope.json")

    def test_joint_csv(self, tmp_path):
        p = tmp_path / "j.csv"
        p.write_text(",y0,y1\nx0,0.25,0.25\nx1,0.5,0\n")
        j = sio.read_joint(p)
        assert j.row_labels == ("x0", "x1") and j.col_labels == ("y0", "y1")

    def test_channel_json_row_error(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text('{"input_labels": ["0", "1"], "output_labels": ["0", "1"], '
                     '"rows": [[0.9, 0.1], [0.2, 0.7]]}')
        with pytest.raises(ValidationError, match="'rows'"):
            sio.read_channel(p)


class TestSolutionFiles:
    @pytest.mark.parametrize("coding", ["temporal", "rate"])
    def test_round_trip(self, solved, tmp_path, coding):
        sol = solved(2.0, coding)
        p = tmp_path / "s.json"
        sio.write_json(p, sio.solution_to_dict(sol))
        back = sio.read_solution(p)
        assert back.coding is Coding(coding)
        assert np.array_equal(back.ensemble.points, sol.ensemble.points)
        assert np.allclose(back.ensemble.weights, sol.ensemble.weights, rtol=0, atol=1e-15)
        assert back.capacity_per_use == sol.capacity_per_use
        assert back.capacity_bps == pytest.approx(sol.capacity_bps, rel=1e-12)
        assert back.certified
        assert back.channel == sol.channel

    def test_missing_field(self, tmp_path):
        p = tmp_path / "s.json"
        p.write_text('{"coding": "rate", "kappa": 1, "a0": 0.003, "b0": 0.03}')
        with pytest.raises(ValidationError, match="'points'"):
            sio.read_solution(p)

    def test_rate_needs_delta(self):
        with pytest.raises(ValidationError, match="'delta'"):
            sio.channel_from_dict({"kappa": 1, "a0": 0.003, "b0": 0.03}, "rate")

    def test_channel_configs(self):
        g = GammaChannel(2.0, 0.003, 0.03)
        assert sio.channel_from_dict(sio.channel_config_to_dict(g), "temporal") == g
        c = CountChannelConfig(g, 0.1)
        assert sio.channel_from_dict(sio.channel_config_to_dict(c), "rate") == c


class TestCsv:
    def test_provenance_block(self, tmp_path):
        p = tmp_path / "t.csv"
        sio.write_csv(p, ["a", "b"], [(0.1, 2)], sio.provenance({"k": 1}))
        text = p.read_text()
        assert text.startswith("# {")
        assert sio.read_csv_rows(p) == [["a", "b"], ["0.10000000000000001", "2"]]
