"""Multi-head scaled-dot attention encoder/decoder (post-norm, no masking)."""
from __future__ import annotations

import math
from typing import Optional

import torch
from torch import Tensor, nn


def scaled_dot_attention(Q: Tensor, K: Tensor, V: Tensor, num_heads: int = 1,
                         return_weights: bool = False):
    """softmax(Q K^T / sqrt(d_k)) V, computed per head.

    Inputs are ``[B, w, h*d]`` with heads laid out as contiguous blocks of the
    last axis. With ``return_weights`` the ``[B, h, w_q, w_k]`` attention
    weights are returned too.
    """
    B, w_q, width_q = Q.shape
    w_k = K.shape[1]
    if K.shape[0] != B or V.shape[:2] != K.shape[:2] or K.shape[-1] != width_q:
        raise ValueError(f"incompatible shapes Q{tuple(Q.shape)} K{tuple(K.shape)} V{tuple(V.shape)}")
    if width_q % num_heads or V.shape[-1] % num_heads:
        raise ValueError(f"widths {width_q}/{V.shape[-1]} not divisible by {num_heads} heads")
    d_k = width_q // num_heads
    d_v = V.shape[-1] // num_heads
    q = Q.reshape(B, w_q, num_heads, d_k).transpose(1, 2)
    k = K.reshape(B, w_k, num_heads, d_k).transpose(1, 2)
    v = V.reshape(B, w_k, num_heads, d_v).transpose(1, 2)
    weights = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(d_k), dim=-1)
    out = (weights @ v).transpose(1, 2).reshape(B, w_q, num_heads * d_v)
    return (out, weights) if return_weights else out


def positional_encoding(w: int, d1: int, dtype=torch.float32) -> Tensor:
    """Fixed sinusoidal table ``P[t, 2i] = sin(t / 10000^(2i/d1))``, ``P[t, 2i+1] = cos(...)``."""
    t = torch.arange(w, dtype=torch.float64)[:, None]
    two_i = torch.arange(0, d1, 2, dtype=torch.float64)
    angle = t / torch.pow(10000.0, two_i / d1)
    P = torch.zeros(w, d1, dtype=torch.float64)
    P[:, 0::2] = torch.sin(angle)
    P[:, 1::2] = torch.cos(angle[:, : d1 // 2])
    return P.to(dtype)


def _init_linear(layer: nn.Linear, generator: Optional[torch.Generator]) -> None:
    bound = 1.0 / math.sqrt(layer.in_features)
    with torch.no_grad():
        layer.weight.uniform_(-bound, bound, generator=generator)
        if layer.bias is not None:
            layer.bias.zero_()


class MultiHeadAttention(nn.Module):
    def __init__(self, d1: int, num_heads: int, d_k: int):
        super().__init__()
        if num_heads * d_k != d1:
            raise ValueError(f"num_heads * d_k must equal d1 ({num_heads} * {d_k} != {d1})")
        self.num_heads = num_heads
        self.W_Q = nn.Linear(d1, d1)
        self.W_K = nn.Linear(d1, d1)
        self.W_V = nn.Linear(d1, d1)
        self.W_O = nn.Linear(d1, d1)

    def reset_parameters(self, generator=None) -> None:
        for lin in (self.W_Q, self.W_K, self.W_V, self.W_O):
            _init_linear(lin, generator)

    def forward(self, X_q: Tensor, X_kv: Tensor) -> Tensor:
        heads = scaled_dot_attention(self.W_Q(X_q), self.W_K(X_kv), self.W_V(X_kv), self.num_heads)
        return self.W_O(heads)


class NonLinear(nn.Module):
    """Position-wise ``W2 ReLU(W1 x + b1) + b2``."""

    def __init__(self, d1: int, d3: int):
        super().__init__()
        self.W1 = nn.Linear(d1, d3)
        self.W2 = nn.Linear(d3, d1)

    def reset_parameters(self, generator=None) -> None:
        _init_linear(self.W1, generator)
        _init_linear(self.W2, generator)

    def forward(self, X: Tensor) -> Tensor:
        return self.W2(torch.relu(self.W1(X)))


class _Layer(nn.Module):
    def __init__(self, d1: int, d3: int, num_heads: int, d_k: int):
        super().__init__()
        self.attention = MultiHeadAttention(d1, num_heads, d_k)
        self.nonlinear = NonLinear(d1, d3)
        self.norm1 = nn.LayerNorm(d1)
        self.norm2 = nn.LayerNorm(d1)

    def reset_parameters(self, generator=None) -> None:
        self.attention.reset_parameters(generator)
        self.nonlinear.reset_parameters(generator)
        self.norm1.reset_parameters()
        self.norm2.reset_parameters()

    def forward(self, X_q: Tensor, X_kv: Tensor) -> Tensor:
        X = self.norm1(X_q + self.attention(X_q, X_kv))
        return self.norm2(X + self.nonlinear(X))


class Encoder(nn.Module):
    """``l`` self-attention layers; ``l = 0`` is the identity."""

    def __init__(self, d1: int, d3: int, num_heads: int, d_k: int, l: int):
        super().__init__()
        self.layers = nn.ModuleList(_Layer(d1, d3, num_heads, d_k) for _ in range(l))

    def reset_parameters(self, generator=None) -> None:
        for layer in self.layers:
            layer.reset_parameters(generator)

    def forward(self, X_in: Tensor) -> Tensor:
        X = X_in
        for layer in self.layers:
            X = layer(X, X)
        return X


class Decoder(nn.Module):
    """Cross-attention stack reading keys/values from the latent sequence.

    The first layer queries with the positional table; later layers query with
    the previous layer's output. ``head`` (the ``d1 -> d`` reconstruction map)
    is applied last when given.
    """

    def __init__(self, d1: int, d3: int, num_heads: int, d_k: int, l: int):
        super().__init__()
        self.layers = nn.ModuleList(_Layer(d1, d3, num_heads, d_k) for _ in range(l))

    def reset_parameters(self, generator=None) -> None:
        for layer in self.layers:
            layer.reset_parameters(generator)

    def forward(self, Z: Tensor, P: Tensor, head: Optional[nn.Module] = None) -> Tensor:
        X = P.to(Z.dtype).expand(Z.shape[0], -1, -1)
        for layer in self.layers:
            X = layer(X, Z)
        return head(X) if head is not None else X
