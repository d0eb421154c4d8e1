"""Converters from the public benchmark layouts to per-entity text triples.

Every converter writes ``<out_dir>/<entity>/{train.csv,test.csv,labels.txt}``.

Expected source layouts:

* SMD: ``train/<machine>.txt``, ``test/<machine>.txt``, ``test_label/<machine>.txt``
  (comma-separated, no header; one label per line).
* SMAP / MSL: ``train/<chan>.npy``, ``test/<chan>.npy`` and
  ``labeled_anomalies.csv`` with columns ``chan_id, spacecraft,
  anomaly_sequences, class, num_values``; sequences are inclusive
  ``[start, end]`` pairs.
* generic: a directory holding ``train.*``, ``test.*`` and ``labels.*``.
"""
from __future__ import annotations

import ast
import csv
import logging
from pathlib import Path

import numpy as np

from .dataio import (DataFormatError, DataValidationError, RawSeries, load_labels, load_series,
                     save_labels, save_series)

log = logging.getLogger(__name__)

DATASETS = ("smd", "smap", "msl", "generic")


def _write_entity(out_dir: Path, entity: str, train: RawSeries, test: RawSeries, labels: np.ndarray) -> Path:
    if train.d != test.d:
        raise DataValidationError(f"{entity}: train has {train.d} channels, test {test.d}")
    if labels.shape[0] != test.T:
        raise DataValidationError(f"{entity}: {labels.shape[0]} labels for {test.T} test rows")
    dest = out_dir / entity
    dest.mkdir(parents=True, exist_ok=True)
    save_series(train, dest / "train.csv")
    save_series(test, dest / "test.csv")
    save_labels(labels, dest / "labels.txt")
    return dest


def _require(root: Path, names: list[str]) -> None:
    missing = [n for n in names if not (root / n).exists()]
    if missing:
        raise DataFormatError(
            f"{root}: unrecognized layout, missing {missing}; expected entries {names}")


def convert_smd(root: Path, out_dir: Path) -> list[Path]:
    root = Path(root)
    if (root / "ServerMachineDataset").is_dir():
        root = root / "ServerMachineDataset"
    _require(root, ["train", "test", "test_label"])
    written = []
    for train_file in sorted((root / "train").glob("*.txt")):
        entity = train_file.stem
        test_file = root / "test" / train_file.name
        label_file = root / "test_label" / train_file.name
        for f in (test_file, label_file):
            if not f.exists():
                raise DataFormatError(f"{entity}: missing {f}")
        test = load_series(test_file, "csv")
        labels = load_labels(label_file, test.T)
        written.append(_write_entity(out_dir, entity, load_series(train_file, "csv"), test, labels))
    if not written:
        raise DataFormatError(f"{root / 'train'}: no machine files (*.txt)")
    return written


def _sequences_to_labels(sequences: str, length: int) -> np.ndarray:
    labels = np.zeros(length, dtype=np.int8)
    for start, end in ast.literal_eval(sequences):
        labels[int(start):int(end) + 1] = 1
    return labels


def convert_nasa(root: Path, out_dir: Path, spacecraft: str) -> list[Path]:
    """SMAP or MSL telemetry channels; ``spacecraft`` is ``"SMAP"`` or ``"MSL"``."""
    root = Path(root)
    _require(root, ["train", "test", "labeled_anomalies.csv"])
    written = []
    with open(root / "labeled_anomalies.csv", newline="") as fh:
        rows = [r for r in csv.DictReader(fh) if r["spacecraft"].strip().upper() == spacecraft.upper()]
    if not rows:
        raise DataFormatError(f"{root / 'labeled_anomalies.csv'}: no rows for spacecraft {spacecraft}")
    for row in sorted(rows, key=lambda r: r["chan_id"]):
        chan = row["chan_id"].strip()
        train_file, test_file = root / "train" / f"{chan}.npy", root / "test" / f"{chan}.npy"
        for f in (train_file, test_file):
            if not f.exists():
                raise DataFormatError(f"{chan}: missing {f}")
        train = RawSeries(np.load(train_file))
        test = RawSeries(np.load(test_file))
        labels = _sequences_to_labels(row["anomaly_sequences"], test.T)
        written.append(_write_entity(out_dir, chan, train, test, labels))
    return written


def _find(root: Path, stem: str) -> Path:
    hits = sorted(p for p in root.iterdir() if p.stem == stem and not p.name.endswith(".desc"))
    if not hits:
        raise DataFormatError(f"{root}: missing {stem}.* (expected train.*, test.*, labels.*)")
    return hits[0]


def convert_generic(root: Path, out_dir: Path) -> list[Path]:
    root = Path(root)
    train = load_series(_find(root, "train"))
    test = load_series(_find(root, "test"))
    labels = load_labels(_find(root, "labels"), test.T)
    return [_write_entity(out_dir, root.name or "data", train, test, labels)]


def convert(dataset: str, in_path: str | Path, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    dataset = dataset.lower()
    if dataset == "smd":
        return convert_smd(Path(in_path), out_dir)
    if dataset in ("smap", "msl"):
        return convert_nasa(Path(in_path), out_dir, dataset.upper())
    if dataset == "generic":
        return convert_generic(Path(in_path), out_dir)
    raise ValueError(f"unknown dataset {dataset!r}; choose from {DATASETS}")


def entity_dirs(data_dir: str | Path) -> list[Path]:
    """``data_dir`` itself if it holds ``train.csv``, else its subdirectories that do."""
    data_dir = Path(data_dir)
    if (data_dir / "train.csv").exists():
        return [data_dir]
    found = sorted(p for p in data_dir.iterdir() if p.is_dir() and (p / "train.csv").exists())
    if not found:
        raise DataFormatError(f"{data_dir}: no train.csv here or in any subdirectory")
    return found
