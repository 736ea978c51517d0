import json

import numpy as np
import pytest

from spatialdg.cli import main
from spatialdg.dataio import load_csv
from spatialdg.trainer import load_checkpoint

FAST = ["--k", "3", "--dz", "4", "--hyper-hidden", "8,8", "--epochs", "15"]


@pytest.fixture
def data(tmp_path):
    path = tmp_path / "d.csv"
    assert main(["synth", "--locations", "20", "--samples", "5", "--features", "3", "--out", str(path)]) == 0
    return path


@pytest.fixture
def ckpt(tmp_path, data):
    out = tmp_path / "m.json"
    assert main(["train", "--data", str(data), "--out", str(out), *FAST]) == 0
    return out


class TestSynth:
    def test_default_size(self, tmp_path):
        out = tmp_path / "s.csv"
        assert main(["synth", "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "lat,lon,x0,x1,x2,x3,y"
        assert len(lines) == 4001
        manifest = json.loads((tmp_path / "s.csv.manifest.json").read_text())
        assert manifest["command"] == "synth" and manifest["seed"] == 0
        assert manifest["dataset_fingerprint"].startswith("sha256:")

    def test_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for p in (a, b):
            assert main(["synth", "--locations", "10", "--seed", "3", "--out", str(p)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_zero_locations(self, tmp_path, capsys):
        assert main(["synth", "--locations", "0", "--out", str(tmp_path / "x.csv")]) == 2
        err = capsys.readouterr().err.strip().splitlines()
        assert len(err) == 1 and err[0].startswith("usage_error:")

    def test_one_feature(self, tmp_path, capsys):
        assert main(["synth", "--features", "1", "--out", str(tmp_path / "x.csv")]) == 2
        assert capsys.readouterr().err.startswith("bad_count:")


class TestTrain:
    def test_outputs(self, tmp_path, ckpt):
        model = load_checkpoint(ckpt)
        assert model.config.mode == "signn" and len(model.seen_coords) == 16
        hist = (tmp_path / "m.history.csv").read_text().splitlines()
        assert hist[0] == "epoch,objective" and len(hist) == 16
        manifest = json.loads((tmp_path / "m.json.manifest.json").read_text())
        assert manifest["config"]["k"] == 3

    def test_deterministic(self, tmp_path, data, ckpt):
        other = tmp_path / "m2.json"
        assert main(["train", "--data", str(data), "--out", str(other), *FAST]) == 0
        assert other.read_bytes() == ckpt.read_bytes()

    def test_erm_blocks(self, tmp_path, data):
        out = tmp_path / "e.json"
        assert main(["train", "--data", str(data), "--out", str(out), "--mode", "erm", "--epochs", "3"]) == 0
        doc = json.loads(out.read_text())
        assert "Z" not in doc and "theta" not in doc and list(doc["phi"]) == ["task"]

    def test_config_file_and_flag_precedence(self, tmp_path, data):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"k": 2, "epochs": 4, "d_z": 3}))
        out = tmp_path / "m.json"
        assert main(["train", "--data", str(data), "--out", str(out), "--config", str(cfg), "--epochs", "2"]) == 0
        model = load_checkpoint(out)
        assert (model.config.k, model.config.epochs, model.config.d_z) == (2, 2, 3)

    def test_unknown_config_key(self, tmp_path, data, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"kk": 2}))
        assert main(["train", "--data", str(data), "--out", str(tmp_path / "m.json"), "--config", str(cfg)]) == 2
        assert capsys.readouterr().err.startswith("config_error:")

    def test_missing_file(self, tmp_path, capsys):
        assert main(["train", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "m.json")]) == 4
        assert len(capsys.readouterr().err.strip().splitlines()) == 1


class TestEval:
    def test_report_and_plot(self, tmp_path, data, ckpt):
        rep_path, svg, preds = tmp_path / "r.json", tmp_path / "map.svg", tmp_path / "p.csv"
        assert main(["eval", "--checkpoint", str(ckpt), "--data", str(data), "--out", str(rep_path),
                     "--plot", str(svg), "--predictions", str(preds)]) == 0
        rep = json.loads(rep_path.read_text())
        assert rep["metric_name"] == "mae" and len(rep["per_domain"]) == 4
        assert svg.read_text().count('class="site"') == 4
        assert len(preds.read_text().splitlines()) == 1 + 4 * 5

    def test_include_seen(self, tmp_path, data, ckpt, capsys):
        assert main(["eval", "--checkpoint", str(ckpt), "--data", str(data), "--include-seen"]) == 0
        assert len(json.loads(capsys.readouterr().out)["per_domain"]) == 20


class TestPredict:
    def test_matches_model(self, ckpt, capsys):
        assert main(["predict", "--checkpoint", str(ckpt), "--lat", "0.4", "--lon", "0.3",
                     "--features", "1,0,-1"]) == 0
        got = float(capsys.readouterr().out)
        want = load_checkpoint(ckpt).predict((0.3, 0.4), [[1.0, 0.0, -1.0]])[0]
        assert got == want

    def test_batch_matches_single(self, tmp_path, data, ckpt, capsys):
        ds = load_csv(data)
        assert main(["predict", "--checkpoint", str(ckpt), "--input", str(data)]) == 0
        got = np.array([float(v) for v in capsys.readouterr().out.split()])
        model = load_checkpoint(ckpt)
        want = np.concatenate([model.predict(d.location.coord, d.xs) for d in ds.domains])
        np.testing.assert_array_equal(got, want)

    def test_feature_count(self, ckpt, capsys):
        assert main(["predict", "--checkpoint", str(ckpt), "--lat", "0", "--lon", "0", "--features", "1,2"]) == 2
        assert capsys.readouterr().err.startswith("shape_mismatch:")

    def test_needs_inputs(self, ckpt, capsys):
        assert main(["predict", "--checkpoint", str(ckpt), "--lat", "0"]) == 2


def test_bench(tmp_path):
    out = tmp_path / "b.json"
    assert main(["bench", "--locations", "16", "--samples", "5", "--epochs", "5", "--k", "3",
                 "--dz", "4", "--hyper-hidden", "8,8", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert [r["mode"] for r in rep["rows"]] == ["signn", "signn_g", "erm"]
    assert len({r["split_fingerprint"] for r in rep["rows"]}) == 1
    assert (tmp_path / "b.json.manifest.json").exists()


def test_no_command(capsys):
    assert main([]) == 2
