import json
from pathlib import Path

import pytest

from spikecap import io as sio
from spikecap.cli import EXIT_INVALID, EXIT_MISMATCH, EXIT_NONCONVERGED, EXIT_OK, main

DATA = Path(__file__).resolve().parents[1] / "data"


@pytest.fixture(scope="module")
def solution_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "sol.json"
    assert main(["capacity", "temporal", "--kappa", "1", "--out", str(path)]) == EXIT_OK
    return path


class TestIt:
    def test_entropy(self, capsys, tmp_path):
        out = tmp_path / "h.json"
        assert main(["it", "entropy", "--pmf", str(DATA / "example_source.json"), "--out", str(out)]) == 0
        assert "5.719668" in capsys.readouterr().out
        doc = json.loads(out.read_text())
        assert doc["quantity"] == "entropy" and doc["provenance"]["tool"] == "spikecap"

    def test_bsc_message(self, capsys):
        assert main(["it", "bsc", "--p", "0.1", "--message-bits", "1000"]) == 0
        out = capsys.readouterr().out
        assert "0.531004" in out and "1883.2" in out

    def test_bsc_half(self):
        assert main(["it", "bsc", "--p", "0.5", "--message-bits", "10"]) == EXIT_INVALID

    def test_ba(self, tmp_path, capsys):
        ch = tmp_path / "z.json"
        ch.write_text('{"input_labels": ["0", "1"], "output_labels": ["0", "1"], '
                      '"rows": [[1.0, 0.0], [0.5, 0.5]]}')
        assert main(["it", "ba", "--channel", str(ch)]) == 0
        assert "0.321928" in capsys.readouterr().out

    def test_bad_pmf(self, tmp_path):
        p = tmp_path / "p.json"
        p.write_text('{"labels": ["a", "b"], "probs": [0.5, 0.6]}')
        assert main(["it", "entropy", "--pmf", str(p)]) == EXIT_INVALID
        assert main(["it", "entropy", "--pmf", str(p), "--renormalize"]) == EXIT_OK

    def test_kl_infinite(self, tmp_path, capsys):
        p, q = tmp_path / "p.json", tmp_path / "q.json"
        p.write_text('{"labels": ["a", "b"], "probs": [0.5, 0.5]}')
        q.write_text('{"labels": ["a", "b"], "probs": [1.0, 0.0]}')
        assert main(["it", "kl", "--p", str(p), "--q", str(q)]) == 0
        assert "inf" in capsys.readouterr().out


class TestCapacity:
    def test_solution_file(self, solution_file):
        doc = json.loads(solution_file.read_text())
        assert doc["certificate"]["passed"] and doc["uncertified"] is False
        assert len(doc["points"]) == 2
        assert doc["provenance"]["config"]["kappa"] == 1.0

    def test_deterministic_output(self, tmp_path, monkeypatch):
        # same relative path, so the recorded config is identical too
        blobs = []
        for d in ("a", "b"):
            (tmp_path / d).mkdir()
            monkeypatch.chdir(tmp_path / d)
            assert main(["capacity", "temporal", "--kappa", "2", "--out", "s.json"]) == 0
            blobs.append((tmp_path / d / "s.json").read_bytes())
        assert blobs[0] == blobs[1]

    def test_kkt_csv(self, tmp_path):
        k = tmp_path / "k.csv"
        assert main(["capacity", "rate", "--kappa", "1", "--kkt-csv", str(k)]) == 0
        rows = sio.read_csv_rows(k)
        assert rows[0] == ["theta", "info_density_bits"] and len(rows) == 1002

    def test_degenerate_omega(self):
        assert main(["capacity", "temporal", "--a0", "0.03", "--b0", "0.003"]) == EXIT_INVALID

    def test_non_convergence(self, tmp_path):
        out = tmp_path / "partial.json"
        code = main(["capacity", "rate", "--kappa", "3", "--max-outer", "1", "--out", str(out)])
        assert code == EXIT_NONCONVERGED
        assert json.loads(out.read_text())["uncertified"] is True

    def test_config_and_override(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"kappa": 2.0, "a0": 0.004}')
        out = tmp_path / "s.json"
        assert main(["--config", str(cfg), "capacity", "temporal", "--kappa", "1", "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["kappa"] == 1.0 and doc["a0"] == 0.004

    def test_config_unknown_field(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"kapa": 2.0}')
        assert main(["--config", str(cfg), "capacity", "temporal"]) == EXIT_INVALID

    def test_config_supplies_required(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"pmf": str(DATA / "example_source.json")}))
        assert main(["--config", str(cfg), "it", "entropy"]) == 0
        assert "5.719668" in capsys.readouterr().out


class TestTuning:
    def test_csv(self, solution_file, tmp_path):
        csv_path, js = tmp_path / "t.csv", tmp_path / "t.json"
        assert main(["tuning", "--solution", str(solution_file), "--out-csv", str(csv_path),
                     "--out-json", str(js)]) == 0
        rows = sio.read_csv_rows(csv_path)
        assert rows[0] == ["x_break", "level_theta", "mean_response"]
        w1 = json.loads(solution_file.read_text())["weights"][0]
        assert float(rows[1][0]) == 0.0 and float(rows[2][0]) == pytest.approx(w1, abs=1e-11)
        assert abs(json.loads(js.read_text())["gap_bits"]) < 1e-9

    def test_refuses_uncertified(self, solution_file, tmp_path):
        doc = json.loads(solution_file.read_text())
        doc["weights"] = [0.8, 0.2]
        bad = tmp_path / "bad.json"
        sio.write_json(bad, doc)
        assert main(["tuning", "--solution", str(bad)]) == EXIT_INVALID

    def test_bad_stimulus(self, solution_file):
        assert main(["tuning", "--solution", str(solution_file), "--stimulus", "gauss:0,1"]) == EXIT_INVALID

    def test_staircase(self, solution_file, tmp_path):
        st = tmp_path / "st.csv"
        assert main(["tuning", "--solution", str(solution_file), "--staircase-csv", str(st),
                     "--samples", "11"]) == 0
        assert len(sio.read_csv_rows(st)) == 12


class TestDecodeAndMc:
    def test_decode(self, solution_file, tmp_path, capsys):
        out = tmp_path / "d.json"
        assert main(["decode", "--solution", str(solution_file), "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["hard_rate_bits"] <= doc["capacity_per_use_bits"]
        assert len(doc["owners"]) == len(doc["boundaries"]) + 1

    def test_mc_agree(self, solution_file, tmp_path):
        out = tmp_path / "mc.json"
        assert main(["mc-check", "--solution", str(solution_file), "--n", "20000", "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["agree"] and doc["provenance"]["seed"] == 0

    def test_mc_mismatch(self, solution_file):
        assert main(["mc-check", "--solution", str(solution_file), "--n", "20000",
                     "--sigmas", "0"]) == EXIT_MISMATCH

    def test_mc_too_few(self, solution_file):
        assert main(["mc-check", "--solution", str(solution_file), "--n", "10"]) == EXIT_INVALID
