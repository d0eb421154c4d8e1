import json
import time

import numpy as np
import pytest
import torch

from hifi import varenc
from hifi.cli import main
from hifi.evaluation import ScoreSeries
from hifi.train import TrainLog

from conftest import TINY_FLAGS


def _train(src, out, *extra):
    return main(["train", str(src), str(out), *TINY_FLAGS, *extra])


def test_train_with_default_model_config_writes_artifacts(synth_dir, tmp_path):
    assert main(["train", str(synth_dir), str(tmp_path / "run"), "--epochs", "1"]) == 0
    for name in ("checkpoint.ckpt", "trainlog.tsv", "manifest.json"):
        assert (tmp_path / "run" / name).exists()
    manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
    assert "w = 100" in manifest["config"] and "d1 = 64" in manifest["config"]
    assert manifest["checkpoint_sha256"] and manifest["datasets"]


def test_variant_recorded_in_manifest(synth_dir, tmp_path):
    assert _train(synth_dir, tmp_path / "run", "--variant", "no_fi") == 0
    manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
    assert manifest["variant"] == "no_fi" and "variant = no_fi" in manifest["config"]


def test_invalid_head_width_rejected_before_compute(synth_dir, tmp_path, capsys):
    assert main(["train", str(synth_dir), str(tmp_path / "run"), "--d_k", "5"]) == 1
    assert "num_heads * d_k must equal d1" in capsys.readouterr().err
    assert not (tmp_path / "run").exists()


def test_config_file_with_flag_override(synth_dir, tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[model]\nvariant = no_ve\n[train]\nseed = 4\n")
    assert _train(synth_dir, tmp_path / "run", "--config", str(cfg), "--seed", "5") == 0
    manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
    assert manifest["variant"] == "no_ve" and manifest["seeds"]["init"] == 5


def test_evaluate_report_and_deterministic_rerun(synth_dir, tmp_path, capsys):
    _train(synth_dir, tmp_path / "run")
    capsys.readouterr()
    ckpt = str(tmp_path / "run" / "checkpoint.ckpt")
    reports = []
    for i in range(2):
        assert main(["evaluate", ckpt, str(synth_dir), "--deterministic", "true", "--out_dir", str(tmp_path / f"e{i}")]) == 0
        reports.append(capsys.readouterr().out)
    assert reports[0] == reports[1]
    fields = dict(line.split("=", 1) for line in reports[0].split())
    assert set(fields) == {"F1_best", "precision", "recall", "threshold"}
    assert 0.0 <= float(fields["F1_best"]) <= 1.0
    a = ScoreSeries.read(tmp_path / "e0" / "scores.txt")
    b = ScoreSeries.read(tmp_path / "e1" / "scores.txt")
    assert np.array_equal(a.scores, b.scores)
    assert json.loads((tmp_path / "e0" / "metrics.json").read_text())["overall"]["f1"] == pytest.approx(float(fields["F1_best"]), abs=1e-6)


def test_score_writes_rows(synth_dir, tmp_path):
    _train(synth_dir, tmp_path / "run")
    out = tmp_path / "scores.txt"
    assert main(["score", str(tmp_path / "run" / "checkpoint.ckpt"), str(synth_dir), "--out", str(out)]) == 0
    s = ScoreSeries.read(out)
    assert s.timestamps[0] == 15 and len(s.scores) == 600 - 15


def test_evaluate_missing_checkpoint(synth_dir, tmp_path):
    assert main(["evaluate", str(tmp_path / "nope.ckpt"), str(synth_dir)]) == 1


def test_training_reruns_are_identical(synth_dir, tmp_path):
    _train(synth_dir, tmp_path / "a", "--epochs", "2")
    _train(synth_dir, tmp_path / "b", "--epochs", "2")
    la, lb = TrainLog.read(tmp_path / "a" / "trainlog.tsv"), TrainLog.read(tmp_path / "b" / "trainlog.tsv")
    assert la.values() == lb.values()
    assert (tmp_path / "a" / "checkpoint.ckpt").read_bytes() == (tmp_path / "b" / "checkpoint.ckpt").read_bytes()


def test_ablate_gives_comparable_reports(synth_dir, tmp_path, capsys):
    assert main(["ablate", str(synth_dir), str(tmp_path / "abl"), *TINY_FLAGS,
                 "--variants", "full,no_fi,no_ve,no_fi_ve", "--deterministic", "true"]) == 0
    summary = json.loads((tmp_path / "abl" / "ablation.json").read_text())
    assert list(summary) == ["full", "no_fi", "no_ve", "no_fi_ve"]
    for r in summary.values():
        assert set(r) == {"threshold", "precision", "recall", "f1", "tp", "fp", "fn"}
        assert r["tp"] + r["fn"] == summary["full"]["tp"] + summary["full"]["fn"]
    assert "F1_best" in (tmp_path / "abl" / "ablation.txt").read_text()


def test_multi_entity_train_and_micro_average(synth_dir, tmp_path, capsys):
    data = tmp_path / "data"
    for name in ("m1", "m2"):
        (data / name).mkdir(parents=True)
        for f in ("train.csv", "test.csv", "labels.txt"):
            (data / name / f).write_bytes((synth_dir / f).read_bytes())
    assert _train(data, tmp_path / "run") == 0
    assert (tmp_path / "run" / "m1" / "checkpoint.ckpt").exists()
    capsys.readouterr()
    assert main(["evaluate", str(tmp_path / "run"), str(data), "--deterministic", "true"]) == 0
    out = capsys.readouterr().out
    assert "[m1]" in out and "[m2]" in out and "[micro-average]" in out


def test_export_graph(synth_dir, tmp_path):
    _train(synth_dir, tmp_path / "run")
    out = tmp_path / "edges.txt"
    assert main(["export-graph", str(tmp_path / "run" / "checkpoint.ckpt"), str(out)]) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "src dst weight"
    edges = [r.split() for r in rows[1:]]
    assert 0 < len(edges) <= 8 * 3
    assert all(int(i) != int(j) and 0 < float(w) < 1 for i, j, w in edges)


def test_export_graph_rejects_variant_without_graph(synth_dir, tmp_path):
    _train(synth_dir, tmp_path / "run", "--variant", "no_fi")
    assert main(["export-graph", str(tmp_path / "run" / "checkpoint.ckpt"), str(tmp_path / "e.txt")]) == 1


def test_convert_generic(synth_dir, tmp_path, capsys):
    assert main(["convert", "--dataset", "generic", str(synth_dir), str(tmp_path / "conv")]) == 0
    assert (tmp_path / "conv" / synth_dir.name / "labels.txt").exists()
    assert main(["convert", "--dataset", "smd", str(tmp_path / "missing"), str(tmp_path / "x")]) == 1


def test_synth_command(tmp_path):
    assert main(["synth", str(tmp_path / "s")]) == 0
    assert len((tmp_path / "s" / "segments.txt").read_text().splitlines()) == 5


def test_selfcheck_passes_quickly(capsys):
    t0 = time.perf_counter()
    assert main(["selfcheck"]) == 0
    assert time.perf_counter() - t0 < 60
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") == 7


def test_selfcheck_catches_wrong_kl(monkeypatch, capsys):
    def off_by_constant(mu, log_var):
        return 0.5 * (mu.pow(2) + torch.exp(log_var) - log_var).reshape(mu.shape[0], -1).sum(-1).mean()

    monkeypatch.setattr(varenc, "kl_to_standard_normal", off_by_constant)
    assert main(["selfcheck"]) == 2
    lines = {l.split("  ")[0].strip(): l for l in capsys.readouterr().out.splitlines()[1:]}
    assert "FAIL" in lines["KL closed form"]
    assert "PASS" in lines["softmax rows sum to one"]
