"""Coupled-sinusoid benchmark with injected spikes and level shifts."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import RawSeries

DEFAULT_SEED = 20211


@dataclass
class SyntheticDataset:
    train: RawSeries
    test: RawSeries
    labels: np.ndarray
    segments: list[tuple[int, int, str]]


def _coupled_signal(t: np.ndarray, d: int, rng: np.random.Generator, noise: float) -> np.ndarray:
    # three latent oscillators mixed into d channels so channels are correlated
    latent = np.stack([
        np.sin(2 * np.pi * t / 40.0),
        np.sin(2 * np.pi * t / 97.0 + 0.7),
        np.sin(2 * np.pi * t / 23.0 + 1.9) * np.sin(2 * np.pi * t / 300.0),
    ], axis=1)
    mix = np.random.default_rng(7).normal(size=(3, d))
    x = latent @ mix
    x[:, 1:] += 0.5 * x[:, :-1]
    return x + noise * rng.normal(size=x.shape)


def make_synthetic(seed: int = DEFAULT_SEED, T_train: int = 5000, T_test: int = 2000, d: int = 5,
                   n_anomalies: int = 5, noise: float = 0.05, margin: int = 150) -> SyntheticDataset:
    """Generate train/test series and test labels.

    Anomalies alternate between spikes (short, large excursions on a couple of
    channels) and level shifts (longer constant offsets on one channel). They
    are placed without overlap, at least ``margin`` steps from the test start.
    """
    rng = np.random.default_rng(seed)
    t_all = np.arange(T_train + T_test, dtype=np.float64)
    x = _coupled_signal(t_all, d, rng, noise)
    train, test = x[:T_train].copy(), x[T_train:].copy()
    scale = train.std(axis=0)

    labels = np.zeros(T_test, dtype=np.int8)
    segments: list[tuple[int, int, str]] = []
    slot = (T_test - margin) // n_anomalies
    for i in range(n_anomalies):
        kind = "spike" if i % 2 == 0 else "level_shift"
        length = int(rng.integers(3, 8)) if kind == "spike" else int(rng.integers(30, 60))
        lo = margin + i * slot
        start = int(rng.integers(lo, lo + slot - length - 10))
        stop = start + length
        if kind == "spike":
            chans = rng.choice(d, size=2, replace=False)
            sign = rng.choice([-1.0, 1.0], size=2)
            test[start:stop, chans] += sign * 4.0 * scale[chans]
        else:
            chan = int(rng.integers(d))
            test[start:stop, chan] += rng.choice([-1.0, 1.0]) * 2.0 * scale[chan]
        labels[start:stop] = 1
        segments.append((start, stop, kind))
    return SyntheticDataset(RawSeries(train), RawSeries(test), labels, segments)
