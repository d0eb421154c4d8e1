"""The full detector: hidden projection, feature interaction, attention
encoder, Gaussian bottleneck, attention decoder and reconstruction head.

Parameters are addressed by dotted path (``graphfi.E1``,
``attn.encoder.layers.0.attention.W_Q.weight``, ...), i.e. ordinary
``named_parameters`` names.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch
from torch import Tensor, nn

from .attn import Decoder, Encoder, _init_linear, positional_encoding
from .graphfi import FeatureInteraction
from .varenc import VariationalHeads, kl_per_window, reparameterize

VARIANTS = ("full", "no_fi", "no_ve", "no_fi_ve", "encoder_only")

# channel counts of the public benchmark distributions
DATASET_DIMS = {"smap": 25, "msl": 55, "smd": 38}


class ConfigError(ValueError):
    """A configuration violates a structural constraint."""


@dataclass
class HifiConfig:
    d: int
    w: int = 100
    d1: int = 64
    d2: int = 64
    d3: int = 128
    d_k: int = 16
    num_heads: int = 4
    l: int = 2
    alpha: float = 0.2
    beta: float = 1.0
    K: int = 3
    k_topk: int = 16
    variant: str = "full"
    encoder_only_layers: int = 4
    squared_recon: bool = False

    @classmethod
    def for_dataset(cls, name: str, d: Optional[int] = None, **overrides) -> "HifiConfig":
        """Benchmark per-dataset settings (``d3 = 256`` on MSL, 128 elsewhere)."""
        key = name.lower()
        if d is None:
            d = DATASET_DIMS[key]
        return cls(d=d, **{"d3": 256 if key == "msl" else 128, **overrides})

    def validate(self) -> "HifiConfig":
        for name in ("d", "w", "d1", "d2", "d3", "d_k", "num_heads", "K", "k_topk", "encoder_only_layers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.l < 0:
            raise ConfigError(f"l must be non-negative, got {self.l}")
        if self.num_heads * self.d_k != self.d1:
            raise ConfigError(
                f"num_heads * d_k must equal d1: {self.num_heads} * {self.d_k} != {self.d1}")
        if self.k_topk > self.d1:
            raise ConfigError(f"k_topk must not exceed d1 ({self.k_topk} > {self.d1})")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.beta < 0:
            raise ConfigError(f"beta must be non-negative, got {self.beta}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        return self

    @property
    def uses_fi(self) -> bool:
        return self.variant in ("full", "no_ve")

    @property
    def uses_ve(self) -> bool:
        return self.variant in ("full", "no_fi")

    @property
    def uses_decoder(self) -> bool:
        return self.variant != "encoder_only"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "HifiConfig":
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in values.items():
            if key not in types:
                raise ConfigError(f"unknown model config key {key!r}")
            kwargs[key] = _coerce(value, types[key])
        return cls(**kwargs)


def _coerce(value, type_name):
    if not isinstance(value, str):
        return value
    if type_name in ("int", int):
        return int(value)
    if type_name in ("float", float):
        return float(value)
    if type_name in ("bool", bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {value!r}")
    return value


@dataclass
class ForwardTrace:
    X: Tensor
    X_h: Tensor
    X_ho: Optional[Tensor]
    X_in: Tensor
    X_eo: Tensor
    mu: Optional[Tensor]
    log_var: Optional[Tensor]
    z: Optional[Tensor]
    X_rec: Tensor
    eps: Optional[Tensor] = None


@dataclass
class LossTerms:
    total: Tensor
    recon: Tensor
    kl: Tensor


class _AttentionStacks(nn.Module):
    def __init__(self, cfg: HifiConfig):
        super().__init__()
        n_enc = cfg.encoder_only_layers if cfg.variant == "encoder_only" else cfg.l
        self.encoder = Encoder(cfg.d1, cfg.d3, cfg.num_heads, cfg.d_k, n_enc)
        if cfg.uses_decoder:
            self.decoder = Decoder(cfg.d1, cfg.d3, cfg.num_heads, cfg.d_k, cfg.l)
        else:
            self.decoder = None


class HifiModel(nn.Module):
    def __init__(self, config: HifiConfig, seed: int = 0):
        super().__init__()
        self.config = config.validate()
        cfg = config
        self.hidden = nn.Linear(cfg.d, cfg.d1)
        self.graphfi = (FeatureInteraction(cfg.d1, cfg.d2, cfg.K, cfg.k_topk, cfg.alpha)
                        if cfg.uses_fi else None)
        self.attn = _AttentionStacks(cfg)
        self.varenc = VariationalHeads(cfg.d1) if cfg.uses_ve else None
        self.output_head = nn.Linear(cfg.d1, cfg.d)
        self.reset_parameters(seed)
        self._pe: dict = {}

    def reset_parameters(self, seed: int = 0) -> None:
        g = torch.Generator().manual_seed(int(seed))
        _init_linear(self.hidden, g)
        if self.graphfi is not None:
            self.graphfi.reset_parameters(g)
        self.attn.encoder.reset_parameters(g)
        if self.attn.decoder is not None:
            self.attn.decoder.reset_parameters(g)
        if self.varenc is not None:
            self.varenc.reset_parameters(g)
        _init_linear(self.output_head, g)

    def parameter_paths(self) -> list[str]:
        return [name for name, _ in self.named_parameters()]

    def positional(self, w: int, dtype) -> Tensor:
        key = (w, dtype)
        if key not in self._pe:
            self._pe[key] = positional_encoding(w, self.config.d1, dtype)
        return self._pe[key]

    def forward(self, X: Tensor, generator: Optional[torch.Generator] = None,
                eps: Optional[Tensor] = None, deterministic: bool = False) -> ForwardTrace:
        """Run the pipeline for windows ``X`` of shape ``[B, w, d]``.

        The latent sample uses ``eps`` when given, else draws from
        ``generator``; ``deterministic`` uses ``z = mu``.
        """
        if isinstance(X, np.ndarray):
            X = torch.from_numpy(X)
        X = X.to(self.hidden.weight.dtype)
        if X.ndim != 3 or X.shape[-1] != self.config.d:
            raise ValueError(f"expected windows [B, w, {self.config.d}], got {tuple(X.shape)}")
        P = self.positional(X.shape[1], X.dtype)
        X_h = self.hidden(X)
        X_ho = self.graphfi(X_h) if self.graphfi is not None else None
        X_in = P + X_h if X_ho is None else P + X_ho + X_h
        X_eo = self.attn.encoder(X_in)
        mu = log_var = None
        if self.varenc is not None:
            mu, log_var = self.varenc(X_eo)
            if deterministic:
                z, eps = mu, None
            else:
                z, eps = reparameterize(mu, log_var, generator, eps)
        else:
            z, eps = (X_eo, None) if self.attn.decoder is not None else (None, None)
        if self.attn.decoder is not None:
            X_rec = self.attn.decoder(z, P, self.output_head)
        else:
            X_rec = self.output_head(X_eo)
        return ForwardTrace(X, X_h, X_ho, X_in, X_eo, mu, log_var, z, X_rec, eps)

    def interaction_graph(self):
        if self.graphfi is None:
            raise ConfigError(f"variant {self.config.variant!r} has no interaction graph")
        return self.graphfi.graph()


def loss(trace: ForwardTrace, X: Optional[Tensor] = None, beta: float = 1.0,
         squared: bool = False) -> LossTerms:
    """Per-step Euclidean reconstruction error summed over the window, plus
    ``beta`` times the summed KL; both averaged over the batch.

    ``squared`` switches to the squared norm (not the default objective).
    """
    X = trace.X if X is None else X
    resid = X.to(trace.X_rec.dtype) - trace.X_rec
    if squared:
        per_step = resid.pow(2).sum(dim=-1)
    else:
        per_step = torch.linalg.vector_norm(resid, dim=-1)
    recon = per_step.sum(dim=-1).mean()
    if trace.mu is not None:
        kl = kl_per_window(trace.mu, trace.log_var).mean()
    else:
        kl = torch.zeros((), dtype=recon.dtype)
    return LossTerms(recon + beta * kl, recon, kl)


def anomaly_score(trace: ForwardTrace, X: Optional[Tensor] = None) -> Tensor:
    """Euclidean norm of each window's last-step residual, shape ``[B]``."""
    X = trace.X if X is None else X
    return torch.linalg.vector_norm(X[:, -1, :].to(trace.X_rec.dtype) - trace.X_rec[:, -1, :], dim=-1)
