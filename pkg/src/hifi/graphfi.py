r"""Learned feature-interaction graph and propagation with restart.

Observations are projected to ``d1`` hidden channels. Each hidden channel is
a graph node; a directed weighted adjacency is built from two embedding
tables,

.. math::
    M_1 = \tanh(E_1\Theta_1),\quad M_2 = \tanh(E_2\Theta_2),\quad
    A = \mathrm{ReLU}(\tanh(M_1M_2^\top - M_2M_1^\top)),

kept to its ``k`` strongest entries per row, self-looped and symmetrically
normalized. Every time step is then propagated independently,

.. math::
    H_{k+1} = (1-\alpha)\hat{A}H_k + \alpha H_0,

and the depth outputs ``H_0..H_K`` are concatenated and mapped back to
``d1`` channels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import torch
from torch import Tensor, nn


@dataclass
class InteractionGraph:
    A_dense: Tensor
    A_sparse: Tensor
    A_hat: Tensor

    def edges(self) -> list[tuple[int, int, float]]:
        """Nonzero entries of ``A_sparse`` as ``(src, dst, weight)`` triples."""
        a = self.A_sparse.detach().cpu()
        idx = torch.nonzero(a, as_tuple=False)
        return [(int(i), int(j), float(a[i, j])) for i, j in idx]


def hidden_transform(W_h: Tensor, b_h: Tensor, X: Tensor) -> Tensor:
    """Per-step affine map ``[B, w, d] -> [B, w, d1]``."""
    if X.shape[-1] != W_h.shape[1]:
        raise ValueError(f"input has {X.shape[-1]} channels, W_h expects {W_h.shape[1]}")
    return X @ W_h.transpose(0, 1) + b_h


def adjacency_preactivation(E1: Tensor, E2: Tensor, Theta1: Tensor, Theta2: Tensor) -> Tensor:
    """The antisymmetric matrix ``M1 M2^T - M2 M1^T`` fed to tanh/ReLU."""
    if E1.shape[0] != E1.shape[1] or E1.shape != E2.shape:
        raise ValueError("E1 and E2 must both be d1 x d1")
    if Theta1.shape != Theta2.shape or Theta1.shape[0] != E1.shape[1]:
        raise ValueError("Theta1 and Theta2 must both be d1 x d2")
    M1 = torch.tanh(E1 @ Theta1)
    M2 = torch.tanh(E2 @ Theta2)
    S = M1 @ M2.transpose(0, 1)
    # S.T is exactly M2 M1^T; using it keeps the diagonal identically zero.
    return S - S.transpose(0, 1)


def build_adjacency(E1: Tensor, E2: Tensor, Theta1: Tensor, Theta2: Tensor) -> Tensor:
    """Dense nonnegative adjacency with zero diagonal.

    Entries lie in ``[0, 1)`` mathematically; in finite precision tanh can
    round to exactly 1 for very large preactivations.
    """
    return torch.relu(torch.tanh(adjacency_preactivation(E1, E2, Theta1, Theta2)))


def topk_mask(A: Tensor, k: int) -> Tensor:
    if not 1 <= k <= A.shape[-1]:
        raise ValueError(f"k={k} must lie in [1, {A.shape[-1]}]")
    # stable descending sort keeps lower column indices first among ties
    order = torch.sort(A.detach(), dim=-1, descending=True, stable=True).indices[..., :k]
    mask = torch.zeros(A.shape, dtype=torch.bool, device=A.device)
    return mask.scatter_(-1, order, True)


def topk_sparsify(A: Tensor, k: int) -> Tensor:
    """Keep the ``k`` largest entries of each row; ties go to the lower column."""
    return torch.where(topk_mask(A, k), A, torch.zeros((), dtype=A.dtype, device=A.device))


def normalize_adjacency(A_sparse: Tensor) -> Tensor:
    r"""``D^{-1/2}(A + I)D^{-1/2}`` with ``D`` the row sums of ``A + I``."""
    if torch.any(A_sparse < 0):
        raise ValueError("adjacency must be entrywise nonnegative")
    n = A_sparse.shape[-1]
    A_tilde = A_sparse + torch.eye(n, dtype=A_sparse.dtype, device=A_sparse.device)
    d_inv_sqrt = A_tilde.sum(dim=-1).rsqrt()
    return d_inv_sqrt[:, None] * A_tilde * d_inv_sqrt[None, :]


def propagate(A_hat: Tensor, H0: Tensor, alpha: float, K: int) -> list[Tensor]:
    """Return ``[H0, H1, ..., HK]`` for ``H0`` of shape ``[B, d1, w]``.

    Only the channel axis is mixed; time steps never interact.
    """
    if H0.shape[-2] != A_hat.shape[-1]:
        raise ValueError(f"H0 has {H0.shape[-2]} channels, A_hat is {tuple(A_hat.shape)}")
    out = [H0]
    H = H0
    for _ in range(K):
        H = (1.0 - alpha) * (A_hat @ H) + alpha * H0
        out.append(H)
    return out


def readout(W_ho: Tensor, H_list: list[Tensor]) -> Tensor:
    """Concatenate depth outputs per time step and map ``(K+1)*d1 -> d1``."""
    H_cat = torch.cat([H.transpose(-1, -2) for H in H_list], dim=-1)
    if H_cat.shape[-1] != W_ho.shape[0]:
        raise ValueError(
            f"{len(H_list)} blocks give width {H_cat.shape[-1]}, W_ho has {W_ho.shape[0]} rows")
    return H_cat @ W_ho


def feature_interaction_forward(
    W_h: Tensor, b_h: Tensor,
    E1: Tensor, E2: Tensor, Theta1: Tensor, Theta2: Tensor, W_ho: Tensor,
    X: Tensor, alpha: float, K: int, k: int,
) -> tuple[Tensor, Tensor]:
    X_h = hidden_transform(W_h, b_h, X)
    A_hat = normalize_adjacency(topk_sparsify(build_adjacency(E1, E2, Theta1, Theta2), k))
    H_list = propagate(A_hat, X_h.transpose(-1, -2), alpha, K)
    return X_h, readout(W_ho, H_list)


class FeatureInteraction(nn.Module):
    """Trainable graph learner + propagation + readout acting on ``X_h``.

    The hidden projection ``W_h, b_h`` is owned by the enclosing model because
    the ablation that drops this module still needs it.
    """

    def __init__(self, d1: int, d2: int, K: int, k: int, alpha: float):
        super().__init__()
        self.d1, self.d2, self.K, self.k, self.alpha = d1, d2, K, k, alpha
        self.E1 = nn.Parameter(torch.empty(d1, d1))
        self.E2 = nn.Parameter(torch.empty(d1, d1))
        self.Theta1 = nn.Parameter(torch.empty(d1, d2))
        self.Theta2 = nn.Parameter(torch.empty(d1, d2))
        self.W_ho = nn.Parameter(torch.empty((K + 1) * d1, d1))
        self._cache: Optional[tuple[tuple, InteractionGraph]] = None

    def reset_parameters(self, generator: Optional[torch.Generator] = None) -> None:
        with torch.no_grad():
            for E in (self.E1, self.E2):
                E.normal_(0.0, 1.0 / math.sqrt(self.d1), generator=generator)
            for W in (self.Theta1, self.Theta2, self.W_ho):
                bound = 1.0 / math.sqrt(W.shape[0])
                W.uniform_(-bound, bound, generator=generator)
        self._cache = None

    def _param_key(self) -> tuple:
        return tuple((p.data_ptr(), p._version, p.dtype) for p in
                     (self.E1, self.E2, self.Theta1, self.Theta2))

    def graph(self) -> InteractionGraph:
        """Current graph; rebuilt every call in training mode, cached in eval mode."""
        if not self.training and self._cache is not None and self._cache[0] == self._param_key():
            return self._cache[1]
        A = build_adjacency(self.E1, self.E2, self.Theta1, self.Theta2)
        A_sparse = topk_sparsify(A, self.k)
        g = InteractionGraph(A, A_sparse, normalize_adjacency(A_sparse))
        if not self.training and not torch.is_grad_enabled():
            self._cache = (self._param_key(), g)
        return g

    def forward(self, X_h: Tensor) -> Tensor:
        g = self.graph()
        H_list = propagate(g.A_hat, X_h.transpose(-1, -2), self.alpha, self.K)
        return readout(self.W_ho, H_list)
