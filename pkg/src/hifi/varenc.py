"""Per-time-step Gaussian bottleneck: heads, reparameterized sampling, KL."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import torch
from torch import Tensor, nn

LOG_VAR_CLAMP = 10.0


@dataclass
class LatentEncoding:
    mu: Tensor
    log_var: Tensor
    z: Tensor
    eps: Optional[Tensor] = None


class VariationalHeads(nn.Module):
    def __init__(self, d1: int):
        super().__init__()
        self.W_mu = nn.Linear(d1, d1)
        self.W_sigma = nn.Linear(d1, d1)

    def reset_parameters(self, generator=None) -> None:
        bound = 1.0 / math.sqrt(self.W_mu.in_features)
        with torch.no_grad():
            for lin in (self.W_mu, self.W_sigma):
                lin.weight.uniform_(-bound, bound, generator=generator)
                lin.bias.zero_()

    def forward(self, X_eo: Tensor) -> tuple[Tensor, Tensor]:
        return encode_distribution(self, X_eo)


def encode_distribution(h: VariationalHeads, X_eo: Tensor) -> tuple[Tensor, Tensor]:
    """Two independent affine maps to ``(mu, log_var)``; ``log_var`` is clamped to ±10."""
    mu = h.W_mu(X_eo)
    log_var = torch.clamp(h.W_sigma(X_eo), -LOG_VAR_CLAMP, LOG_VAR_CLAMP)
    return mu, log_var


def draw_eps(shape, dtype=torch.float32, generator: Optional[torch.Generator] = None) -> Tensor:
    return torch.randn(shape, dtype=dtype, generator=generator)


def reparameterize(mu: Tensor, log_var: Tensor, generator: Optional[torch.Generator] = None,
                   eps: Optional[Tensor] = None) -> tuple[Tensor, Tensor]:
    """One sample ``z = mu + exp(log_var / 2) * eps``; returns ``(z, eps)``.

    ``eps`` is drawn from ``generator`` unless supplied, and never carries
    gradient.
    """
    if mu.shape != log_var.shape:
        raise ValueError(f"mu {tuple(mu.shape)} and log_var {tuple(log_var.shape)} differ")
    if eps is None:
        eps = draw_eps(mu.shape, mu.dtype, generator)
    eps = eps.detach().to(mu.dtype)
    return mu + torch.exp(0.5 * log_var) * eps, eps


def kl_per_window(mu: Tensor, log_var: Tensor) -> Tensor:
    """KL(N(mu, sigma^2) || N(0, 1)) summed over latent channels and time, shape ``[B]``."""
    kl = 0.5 * (mu.pow(2) + torch.exp(log_var) - log_var - 1.0)
    return kl.reshape(kl.shape[0], -1).sum(dim=-1)


def kl_to_standard_normal(mu: Tensor, log_var: Tensor) -> Tensor:
    """Batch mean of :func:`kl_per_window`."""
    return kl_per_window(mu, log_var).mean()
