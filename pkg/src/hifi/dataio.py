"""Loading, normalization and windowing of multivariate series.

Supported on-disk layouts:

* delimited text: one row per timestamp, ``d`` numeric columns separated by
  commas or whitespace, optional header row of channel names;
* binary: flat little-endian float32 matrix plus a sidecar ``<file>.desc``
  text file holding ``"T d"``;
* labels: one ``0``/``1`` per line.
"""
from __future__ import annotations

import csv
import math
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


class DataFormatError(ValueError):
    """A file could not be parsed as a numeric matrix."""


class DataValidationError(ValueError):
    """Parsed data violates a value constraint (non-finite cell, bad label...)."""


@dataclass
class RawSeries:
    values: np.ndarray
    channel_names: Optional[list[str]] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.ndim != 2 or self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise DataValidationError(f"series must be a non-empty T x d matrix, got shape {self.values.shape}")
        if self.channel_names is not None and len(self.channel_names) != self.values.shape[1]:
            raise DataValidationError(
                f"{len(self.channel_names)} channel names for {self.values.shape[1]} channels")

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass
class Normalizer:
    """Per-channel min-max scaler fitted on training data."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        self.min = np.asarray(self.min, dtype=np.float64)
        self.max = np.asarray(self.max, dtype=np.float64)
        if self.min.shape != self.max.shape or self.min.ndim != 1:
            raise DataValidationError("normalizer min/max must be equal-length vectors")
        if np.any(self.min > self.max):
            raise DataValidationError("normalizer has min > max")

    @property
    def d(self) -> int:
        return self.min.shape[0]


@dataclass
class WindowBatch:
    """Stride-``k`` windows over a series, stored as end indices into it.

    Windows are gathered on demand so a long series does not get copied
    ``w`` times.
    """

    series: np.ndarray
    end_indices: np.ndarray
    w: int
    dtype: np.dtype = field(default=np.dtype(np.float32))

    def __post_init__(self):
        self.end_indices = np.asarray(self.end_indices, dtype=np.int64)

    def __len__(self) -> int:
        return int(self.end_indices.shape[0])

    @property
    def d(self) -> int:
        return self.series.shape[1]

    def take(self, rows: Sequence[int] | np.ndarray) -> np.ndarray:
        """Materialize the windows at positions ``rows`` as ``[len(rows), w, d]``."""
        ends = self.end_indices[np.asarray(rows, dtype=np.int64)]
        offsets = np.arange(-self.w + 1, 1)
        return self.series[ends[:, None] + offsets[None, :]].astype(self.dtype, copy=False)

    @property
    def windows(self) -> np.ndarray:
        return self.take(np.arange(len(self)))

    def subset(self, rows: np.ndarray) -> "WindowBatch":
        return WindowBatch(self.series, self.end_indices[np.sort(rows)], self.w, self.dtype)


_SPLIT = re.compile(r"[,\s]+")


def _parse_row(line: str) -> list[str]:
    return [tok for tok in _SPLIT.split(line.strip()) if tok]


def _looks_numeric(tokens: list[str]) -> bool:
    try:
        for tok in tokens:
            float(tok)
    except ValueError:
        return False
    return True


def _load_text(path: Path, delimiter: Optional[str]) -> RawSeries:
    rows: list[list[float]] = []
    names = None
    width = None
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        tokens = next(csv.reader([line], delimiter=delimiter)) if delimiter else _parse_row(line)
        tokens = [t.strip() for t in tokens]
        if width is None and names is None and not rows and not _looks_numeric(tokens):
            names = tokens
            width = len(tokens)
            continue
        if width is None:
            width = len(tokens)
        if len(tokens) != width:
            raise DataFormatError(
                f"{path}: row {lineno} has {len(tokens)} columns, expected {width}")
        row = []
        for col, tok in enumerate(tokens, start=1):
            try:
                row.append(float(tok))
            except ValueError:
                raise DataFormatError(f"{path}: row {lineno}, column {col}: cannot parse {tok!r}") from None
        rows.append(row)
    if not rows:
        raise DataFormatError(f"{path}: no numeric rows")
    values = np.asarray(rows, dtype=np.float64)
    _check_finite(values, path)
    return RawSeries(values, names)


def _check_finite(values: np.ndarray, path) -> None:
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        r, c = bad[0]
        raise DataValidationError(
            f"{path}: non-finite value {values[r, c]} at row {r + 1}, column {c + 1}")


def descriptor_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".desc")


def _load_binary(path: Path) -> RawSeries:
    desc = descriptor_path(path)
    if not desc.exists():
        raise DataFormatError(f"{path}: missing descriptor {desc}")
    parts = desc.read_text().split()
    if len(parts) != 2:
        raise DataFormatError(f"{desc}: expected 'T d', got {desc.read_text()!r}")
    T, d = (int(p) for p in parts)
    raw = np.fromfile(path, dtype="<f4")
    if raw.size != T * d:
        raise DataFormatError(f"{path}: {raw.size} float32 values, descriptor says {T}x{d}")
    values = raw.reshape(T, d).astype(np.float64)
    _check_finite(values, path)
    return RawSeries(values)


def load_series(path: str | Path, format: str = "auto") -> RawSeries:
    """Read a ``T x d`` matrix.

    ``format`` is one of ``csv``, ``space``, ``binary`` or ``auto`` (binary when
    a ``.desc`` sidecar exists, otherwise delimited text with comma or
    whitespace separators).
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if format == "auto":
        format = "binary" if descriptor_path(path).exists() else "text"
    if format == "binary":
        return _load_binary(path)
    if format == "csv":
        return _load_text(path, ",")
    if format in ("space", "text"):
        return _load_text(path, None)
    raise ValueError(f"unknown format {format!r}")


def save_series(series: RawSeries, path: str | Path, format: str = "csv") -> None:
    path = Path(path)
    if format == "binary":
        series.values.astype("<f4").tofile(path)
        descriptor_path(path).write_text(f"{series.T} {series.d}\n")
        return
    with open(path, "w", newline="") as fh:
        if series.channel_names:
            fh.write(",".join(series.channel_names) + "\n")
        for row in series.values:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_labels(path: str | Path, length: Optional[int] = None) -> np.ndarray:
    path = Path(path)
    out = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        tok = line.strip()
        if not tok:
            continue
        if tok not in ("0", "1", "0.0", "1.0"):
            raise DataValidationError(f"{path}: line {lineno}: label must be 0 or 1, got {tok!r}")
        out.append(int(float(tok)))
    labels = np.asarray(out, dtype=np.int8)
    if length is not None and labels.shape[0] != length:
        raise DataValidationError(f"{path}: {labels.shape[0]} labels for a test split of length {length}")
    return labels


def save_labels(labels: np.ndarray, path: str | Path) -> None:
    Path(path).write_text("".join(f"{int(v)}\n" for v in labels))


def fit_normalizer(train: RawSeries) -> Normalizer:
    lo = train.values.min(axis=0)
    hi = train.values.max(axis=0)
    hi = np.where(hi == lo, lo + 1.0, hi)
    return Normalizer(lo, hi)


def apply_normalizer(n: Normalizer, s: RawSeries, clip: bool = True) -> RawSeries:
    if s.d != n.d:
        raise DataValidationError(f"normalizer fitted on {n.d} channels, series has {s.d}")
    out = (s.values - n.min) / (n.max - n.min)
    if clip:
        out = np.clip(out, 0.0, 1.0)
    return RawSeries(out, s.channel_names)


def make_windows(s: RawSeries | np.ndarray, w: int, stride: int = 1) -> WindowBatch:
    values = s.values if isinstance(s, RawSeries) else np.asarray(s, dtype=np.float64)
    T = values.shape[0]
    if w < 1 or stride < 1:
        raise ValueError("window length and stride must be positive")
    if T < w:
        raise DataValidationError(f"series of length {T} is shorter than the window length {w}")
    n = (T - w) // stride + 1
    return WindowBatch(values, np.arange(n) * stride + w - 1, w)


def split_train_val(batch: WindowBatch, val_fraction: float, seed: int) -> tuple[WindowBatch, WindowBatch]:
    """Random disjoint partition of windows; ``round(val_fraction * B)`` go to validation."""
    if not 0.0 < val_fraction < 1.0:
        raise ValueError(f"val_fraction must lie in (0, 1), got {val_fraction}")
    B = len(batch)
    if B == 0:
        raise DataValidationError("cannot split an empty window batch")
    n_val = int(math.floor(val_fraction * B + 0.5))
    if n_val == 0:
        warnings.warn(f"validation split is empty ({B} windows, fraction {val_fraction})", stacklevel=2)
    perm = np.random.default_rng(seed).permutation(B)
    return batch.subset(perm[n_val:]), batch.subset(perm[:n_val])
