"""Entity-level train / score / evaluate steps shared by the CLI and demos."""
from __future__ import annotations

import hashlib
import json
import platform
import subprocess
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from . import __version__
from .checkpoint import model_from_checkpoint
from .config import RunConfig, ScoreOptions, format_config
from .dataio import (Normalizer, RawSeries, apply_normalizer, fit_normalizer, load_labels, load_series,
                     make_windows, split_train_val)
from .evaluation import DetectionResult, ScoreSeries, best_f1_sweep, score_dataset
from .model import HifiModel
from .train import TrainLog, train

CHECKPOINT_NAME = "checkpoint.ckpt"
TRAINLOG_NAME = "trainlog.tsv"
MANIFEST_NAME = "manifest.json"


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def build_id() -> str:
    parts = [f"hifi {__version__}", f"torch {torch.__version__}", f"numpy {np.__version__}",
             f"python {platform.python_version()}"]
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).resolve().parent, timeout=5)
        if rev.returncode == 0:
            parts.append(f"git {rev.stdout.strip()}")
    except (OSError, subprocess.SubprocessError):
        pass
    return "; ".join(parts)


def normalizer_extras(n: Normalizer, clip: bool) -> dict[str, np.ndarray]:
    return {"normalizer_min": n.min, "normalizer_max": n.max, "clip": np.array([1.0 if clip else 0.0])}


def normalizer_from_extras(extras: dict) -> tuple[Normalizer, bool]:
    return Normalizer(extras["normalizer_min"], extras["normalizer_max"]), bool(extras["clip"][0])


@dataclass
class TrainOutcome:
    model: HifiModel
    log: TrainLog
    checkpoint: Path
    manifest: dict


def train_entity(data_dir: str | Path, out_dir: str | Path, run: RunConfig) -> TrainOutcome:
    """Fit one model on ``data_dir/train.csv``; writes checkpoint, train log and manifest."""
    data_dir, out_dir = Path(data_dir), Path(out_dir)
    started = time.time()
    train_file = data_dir / "train.csv"
    raw = load_series(train_file, run.data.format)
    cfg = run.model_config(raw.d)
    tcfg = run.train.validate()
    norm = fit_normalizer(raw)
    series = apply_normalizer(norm, raw, clip=run.data.clip)
    windows = make_windows(series, cfg.w, run.data.stride)
    tr, val = split_train_val(windows, tcfg.val_fraction, tcfg.seed)

    out_dir.mkdir(parents=True, exist_ok=True)
    model = HifiModel(cfg, seed=tcfg.seed)
    ckpt = out_dir / CHECKPOINT_NAME
    _, tlog = train(model, tr, val, tcfg, ckpt, normalizer_extras(norm, run.data.clip))
    tlog.write(out_dir / TRAINLOG_NAME)
    manifest = {
        "config": format_config(cfg, tcfg, run.data, run.score),
        "variant": cfg.variant,
        "seeds": {"init": tcfg.seed, "split": tcfg.seed, "shuffle": tcfg.seed, "latent": tcfg.seed + 1,
                  "validation_latent": tcfg.seed + 2, "score_latent": run.score.eps_seed},
        "datasets": {str(train_file): sha256_file(train_file)},
        "checkpoint": str(ckpt),
        "checkpoint_sha256": sha256_file(ckpt),
        "best_epoch": tlog.best_epoch,
        "best_val_loss": tlog.epochs[tlog.best_epoch].val_loss if tlog.best_epoch is not None else None,
        "build": build_id(),
        "argv": sys.argv,
        "started": started,
        "wall_seconds": time.time() - started,
    }
    write_manifest(out_dir / MANIFEST_NAME, manifest)
    return TrainOutcome(model, tlog, ckpt, manifest)


def write_manifest(path: Path, manifest: dict) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, default=str) + "\n")


def load_test(data_dir: Path, fmt: str = "auto") -> tuple[RawSeries, Optional[np.ndarray]]:
    test = load_series(data_dir / "test.csv", fmt)
    label_file = data_dir / "labels.txt"
    labels = load_labels(label_file, test.T) if label_file.exists() else None
    return test, labels


def score_entity(checkpoint: str | Path, data_dir: str | Path, opts: ScoreOptions,
                 fmt: str = "auto") -> ScoreSeries:
    model, extras = model_from_checkpoint(checkpoint)
    norm, clip = normalizer_from_extras(extras)
    test, labels = load_test(Path(data_dir), fmt)
    return score_dataset(model, apply_normalizer(norm, test, clip), labels,
                         deterministic=opts.deterministic, eps_seed=opts.eps_seed, samples=opts.samples)


def evaluate_entity(checkpoint: str | Path, data_dir: str | Path, opts: ScoreOptions,
                    fmt: str = "auto") -> tuple[ScoreSeries, DetectionResult]:
    scores = score_entity(checkpoint, data_dir, opts, fmt)
    if scores.labels is None:
        raise FileNotFoundError(Path(data_dir) / "labels.txt")
    return scores, best_f1_sweep(scores)
