import csv
import json
import os
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from riskwave.cli import run
from riskwave.dataio import ClinicalRecord
from riskwave.evaluate import roc
from riskwave.plotting import plot_km_curve, plot_roc
from riskwave.survival import Risk, km_fit

FAST = ["--window", "3", "--rank", "3", "--hidden", "2", "--max-epochs", "100", "--patience", "20"]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def files_under(root):
    return sorted(os.path.relpath(os.path.join(d, f), root) for d, _, fs in os.walk(root) for f in fs)


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert run(["simulate", "--out", str(out), "--genes", "12", "--patients", "24",
                "--low-risk-frac", "0.25", "--seed", "7"]) == 0
    return str(out / "expression.csv"), str(out / "clinical.csv"), str(out)


def inputs(sim):
    return ["--expression", sim[0], "--clinical", sim[1]]


class TestCommands:
    def test_label_matches_truth(self, sim, tmp_path):
        assert run(["label", *inputs(sim), "--out", str(tmp_path)]) == 0
        labels = read_csv(tmp_path / "labels.csv")
        truth = read_csv(os.path.join(sim[2], "truth.csv"))
        assert [r["label"] for r in labels] == [r["true_label"] for r in truth]
        assert sum(r["label"] == "LowRisk" for r in labels) == 6
        assert {"km_curve.csv", "km_curve.svg", "manifest.json"} <= set(os.listdir(tmp_path))

    def test_pipeline_twice_identical(self, sim, tmp_path):
        args = ["pipeline", *inputs(sim), *FAST, "--seed", "7"]
        assert run([*args, "--out", str(tmp_path / "a")]) == 0
        assert run([*args, "--out", str(tmp_path / "b")]) == 0
        a = (tmp_path / "a" / "manifest.json").read_text()
        assert a == (tmp_path / "b" / "manifest.json").read_text()
        outputs = json.loads(a)["outputs"]
        assert {"scores.csv", "roc.csv", "roc.svg", "labels.csv", "summary.json"} <= set(outputs)

    def test_replay_reproduces_hashes(self, sim, tmp_path):
        assert run(["evaluate", *inputs(sim), *FAST, "--seed", "3", "--out", str(tmp_path / "a")]) == 0
        assert run(["replay", str(tmp_path / "a" / "manifest.json"), "--out", str(tmp_path / "b")]) == 0
        a = json.loads((tmp_path / "a" / "manifest.json").read_text())
        b = json.loads((tmp_path / "b" / "manifest.json").read_text())
        assert a == b

    def test_seed_is_recorded(self, sim, tmp_path):
        run(["label", *inputs(sim), "--out", str(tmp_path), "--seed", "11"])
        doc = json.loads((tmp_path / "manifest.json").read_text())
        assert doc["seed"] == 11 and doc["command"] == "label"
        assert str(tmp_path) not in json.dumps(doc)

    def test_writes_only_under_out(self, sim, tmp_path):
        before = files_under(os.path.dirname(sim[0]))
        out = tmp_path / "nested" / "out"
        assert run(["featurize", *inputs(sim), *FAST, "--out", str(out)]) == 0
        assert files_under(os.path.dirname(sim[0])) == before
        assert files_under(tmp_path) == [os.path.join("nested", "out", f) for f in files_under(out)]

    def test_featurize_shapes(self, sim, tmp_path):
        run(["featurize", *inputs(sim), *FAST, "--out", str(tmp_path)])
        H = read_csv(tmp_path / "H.csv")
        Hc = read_csv(tmp_path / "H_compressed.csv")
        assert len(H) == 12 * 3 and H[0]["row_id"] == "G001:w1" and H[3]["row_id"] == "G002:w1"
        assert len(Hc) == 3 and len(Hc[0]) == 25

    def test_train_then_predict(self, sim, tmp_path):
        assert run(["train", *inputs(sim), *FAST, "--out", str(tmp_path / "t")]) == 0
        assert run(["predict", "--model", str(tmp_path / "t" / "model.npz"),
                    "--expression", sim[0], "--out", str(tmp_path / "p")]) == 0
        trained = read_csv(tmp_path / "t" / "train_scores.csv")
        predicted = read_csv(tmp_path / "p" / "predictions.csv")
        assert [r["score"] for r in trained] == [r["score"] for r in predicted]

    def test_regular_protocol(self, sim, tmp_path):
        assert run(["evaluate", *inputs(sim), *FAST, "--protocol", "regular", "--holdout", "8",
                    "--undersample", "10", "--out", str(tmp_path)]) == 0
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["n_scored"] == 8
        assert len(summary["retained_training_ids"]) == 4 + 10

    def test_search_then_config(self, sim, tmp_path):
        assert run(["search", *inputs(sim), "--max-epochs", "60", "--windows", "2,3", "--ranks", "2",
                    "--train-fracs", "0.8", "--hiddens", "1,2", "--thresholds", "0.4,0.6",
                    "--protocol", "regular", "--holdout", "8", "--out", str(tmp_path / "s")]) == 0
        rows = read_csv(tmp_path / "s" / "leaderboard.csv")
        assert list(rows[0]) == ["T", "k", "P", "h", "Th", "tpr", "fpr", "auc", "youden", "status"]
        assert len(rows) == 2 * 1 * 1 * 2 * 2
        best = json.loads((tmp_path / "s" / "best_config.json").read_text())
        assert run(["train", *inputs(sim), "--max-epochs", "60", "--config",
                    str(tmp_path / "s" / "best_config.json"), "--out", str(tmp_path / "t")]) == 0
        doc = json.loads((tmp_path / "t" / "manifest.json").read_text())
        assert doc["config"]["window"] == best["window"] and doc["config"]["threshold"] == best["threshold"]


class TestErrors:
    def test_missing_input_names_path(self, tmp_path, capsys):
        missing = str(tmp_path / "absent.csv")
        assert run(["label", "--expression", missing, "--clinical", missing, "--out", str(tmp_path / "o")]) != 0
        err = capsys.readouterr().err
        assert err.count("\n") == 1 and missing in err and err.startswith("error: ")

    def test_unknown_flag(self, capsys):
        assert run(["label", "--frobnicate", "--out", "x", "--expression", "a", "--clinical", "b"]) == 2
        err = capsys.readouterr().err
        assert err.count("\n") == 1 and "--frobnicate" in err

    def test_invalid_parameter(self, sim, tmp_path, capsys):
        assert run(["evaluate", *inputs(sim), "--threshold", "1.5", "--out", str(tmp_path)]) == 1
        assert "threshold" in capsys.readouterr().err

    def test_bad_config_key(self, sim, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"windowz": 3}')
        assert run(["train", *inputs(sim), "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        assert "windowz" in capsys.readouterr().err


class TestPlots:
    def test_km_svg_deterministic(self, tmp_path):
        curve = km_fit([ClinicalRecord(f"p{i}", t, c) for i, (t, c) in
                        enumerate([(300, False), (900, True), (1500, False), (2500, False), (3000, True)])])
        plot_km_curve(curve, tmp_path / "a.svg")
        plot_km_curve(curve, tmp_path / "b.svg")
        assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
        assert ET.parse(tmp_path / "a.svg").getroot().tag.endswith("svg")

    def test_roc_svg(self, tmp_path):
        rng = np.random.default_rng(0)
        curve = roc(rng.uniform(size=20), [Risk.LOW] * 8 + [Risk.HIGH] * 12)
        plot_roc(curve, tmp_path / "r.svg", (0.5, 0.6, 0.3))
        text = (tmp_path / "r.svg").read_text()
        assert "AUC" in text and ET.fromstring(text).tag.endswith("svg")
