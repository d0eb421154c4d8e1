"""Mini-batch Adam training with best-validation checkpoint selection."""
from __future__ import annotations

import copy
import dataclasses
import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import numpy as np
import torch

from .checkpoint import save_checkpoint
from .dataio import WindowBatch
from .model import HifiModel, loss

log = logging.getLogger(__name__)

# offsets from TrainConfig.seed for the independent random streams
_SHUFFLE_STREAM = 0
_EPS_STREAM = 1
_VAL_EPS_STREAM = 2


class TrainingError(RuntimeError):
    """Optimization hit a non-finite loss or gradient."""


@dataclass
class TrainConfig:
    seed: int
    lr: float = 0.005
    batch_size: int = 64
    epochs: int = 100
    val_fraction: float = 0.3
    grad_clip: Optional[float] = None
    log_every: int = 50

    def validate(self) -> "TrainConfig":
        from .model import ConfigError

        if self.lr < 0 or self.batch_size < 1 or self.epochs < 1 or self.log_every < 1:
            raise ConfigError("lr must be >= 0 and batch_size, epochs, log_every positive")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError(f"val_fraction must lie in (0, 1), got {self.val_fraction}")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigError("grad_clip must be positive when set")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    recon: float
    kl: float
    wall_time: float


@dataclass
class TrainLog:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: Optional[int] = None

    COLUMNS = ("epoch", "train_loss", "val_loss", "recon", "kl", "wall_time")

    def values(self) -> list[tuple]:
        """Logged numbers without wall-clock times, for reproducibility comparisons."""
        return [(r.epoch, r.train_loss, r.val_loss, r.recon, r.kl) for r in self.epochs]

    def write(self, path: str | Path) -> None:
        rows = ["\t".join(self.COLUMNS)]
        for r in self.epochs:
            rows.append("\t".join([str(r.epoch)] + [repr(getattr(r, c)) for c in self.COLUMNS[1:]]))
        rows.append(f"# best_epoch={self.best_epoch}")
        Path(path).write_text("\n".join(rows) + "\n")

    @classmethod
    def read(cls, path: str | Path) -> "TrainLog":
        out = cls()
        for line in Path(path).read_text().splitlines()[1:]:
            if line.startswith("# best_epoch="):
                value = line.split("=", 1)[1]
                out.best_epoch = None if value == "None" else int(value)
                continue
            f = line.split("\t")
            out.epochs.append(EpochRecord(int(f[0]), *(float(v) for v in f[1:])))
        return out


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: Mapping[str, torch.Tensor], grads: Mapping[str, torch.Tensor], state: AdamState,
              lr: float, betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> AdamState:
    """Bias-corrected Adam update, applied in place to ``params``."""
    for name, g in grads.items():
        if not torch.isfinite(g).all():
            raise TrainingError(f"non-finite gradient in {name}")
    b1, b2 = betas
    state.step += 1
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    with torch.no_grad():
        for name, p in params.items():
            g = grads[name]
            if name not in state.m:
                state.m[name] = torch.zeros_like(p)
                state.v[name] = torch.zeros_like(p)
            m = state.m[name].mul_(b1).add_(g, alpha=1.0 - b1)
            v = state.v[name].mul_(b2).addcmul_(g, g, value=1.0 - b2)
            p.sub_(lr * (m / bc1) / ((v / bc2).sqrt() + eps))
    return state


def _batches(n: int, batch_size: int, order: np.ndarray):
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def evaluate_terms(model: HifiModel, windows: WindowBatch, eps_seed: int,
                   batch_size: int = 256) -> tuple[float, float, float]:
    """Window-weighted mean ``(total, recon, kl)`` over ``windows``.

    Latent noise is replayed from ``eps_seed`` so repeated calls agree exactly.
    """
    if len(windows) == 0:
        return float("nan"), float("nan"), float("nan")
    was_training = model.training
    model.eval()
    gen = torch.Generator().manual_seed(int(eps_seed))
    sums = np.zeros(3)
    try:
        with torch.no_grad():
            for rows in _batches(len(windows), batch_size, np.arange(len(windows))):
                trace = model(torch.from_numpy(windows.take(rows)), generator=gen)
                terms = loss(trace, beta=model.config.beta, squared=model.config.squared_recon)
                sums += np.array([terms.total.item(), terms.recon.item(), terms.kl.item()]) * len(rows)
    finally:
        model.train(was_training)
    total, recon, kl = (sums / len(windows)).tolist()
    return total, recon, kl


def evaluate_loss(model: HifiModel, windows: WindowBatch, eps_seed: int, batch_size: int = 256) -> float:
    """Mean full loss (reconstruction + beta * KL) without gradient tracking."""
    return evaluate_terms(model, windows, eps_seed, batch_size)[0]


def train(model: HifiModel, train_windows: WindowBatch, val_windows: Optional[WindowBatch],
          tcfg: TrainConfig, checkpoint_path: Optional[str | Path] = None,
          extras: Optional[Mapping[str, np.ndarray]] = None, eval_batch_size: int = 256):
    """Fit ``model`` and leave it holding the best-validation parameters.

    Returns ``(best_params, TrainLog)``. With ``checkpoint_path`` the best
    parameters are also written there, together with ``extras``.
    """
    tcfg.validate()
    if len(train_windows) == 0:
        raise ValueError("no training windows")
    if val_windows is None or len(val_windows) == 0:
        warnings.warn("empty validation set: the last epoch is kept", stacklevel=2)
        val_windows = None
    shuffle_rng = np.random.default_rng(tcfg.seed + _SHUFFLE_STREAM)
    eps_gen = torch.Generator().manual_seed(tcfg.seed + _EPS_STREAM)
    named = dict(model.named_parameters())
    state = AdamState()
    tlog = TrainLog()
    best_val = math.inf
    best_params = None
    beta = model.config.beta
    squared = model.config.squared_recon

    step = 0
    for epoch in range(tcfg.epochs):
        t0 = time.perf_counter()
        model.train()
        order = shuffle_rng.permutation(len(train_windows))
        sums = np.zeros(3)
        for rows in _batches(len(order), tcfg.batch_size, order):
            X = torch.from_numpy(train_windows.take(rows))
            trace = model(X, generator=eps_gen)
            terms = loss(trace, beta=beta, squared=squared)
            if not torch.isfinite(terms.total):
                raise TrainingError(f"non-finite loss at epoch {epoch}, step {step}")
            model.zero_grad(set_to_none=True)
            terms.total.backward()
            grads = {n: (p.grad if p.grad is not None else torch.zeros_like(p)) for n, p in named.items()}
            if tcfg.grad_clip is not None:
                torch.nn.utils.clip_grad_norm_(list(grads.values()), tcfg.grad_clip)
            adam_step(named, grads, state, tcfg.lr)
            sums += np.array([terms.total.item(), terms.recon.item(), terms.kl.item()]) * len(rows)
            step += 1
            if step % tcfg.log_every == 0:
                log.info("epoch %d step %d loss %.6f", epoch, step, terms.total.item())
        sums /= len(order)
        if val_windows is not None:
            val_loss = evaluate_loss(model, val_windows, tcfg.seed + _VAL_EPS_STREAM, eval_batch_size)
        else:
            val_loss = float("nan")
        tlog.epochs.append(EpochRecord(epoch, float(sums[0]), val_loss, float(sums[1]), float(sums[2]),
                                       time.perf_counter() - t0))
        log.info("epoch %d train %.6f val %.6f", epoch, sums[0], val_loss)
        if val_windows is None or val_loss < best_val:
            best_val = val_loss
            tlog.best_epoch = epoch
            best_params = copy.deepcopy(model.state_dict())

    model.load_state_dict(best_params)
    model.eval()
    if checkpoint_path is not None:
        save_checkpoint(best_params, model.config, checkpoint_path, extras)
    return best_params, tlog
