"""Central finite differences against autograd, plus helpers that keep the
check away from the model's kinks (ReLU, top-k selection, log-variance
clamp)."""
from __future__ import annotations

from typing import Callable, Mapping

import torch
from torch import Tensor

from .graphfi import adjacency_preactivation
from .model import HifiConfig, HifiModel, loss
from .varenc import LOG_VAR_CLAMP

TINY_CONFIG = dict(d=3, w=4, d1=4, d2=4, d3=8, d_k=4, num_heads=1, l=1, K=1, k_topk=2)


def central_difference(f: Callable[[], Tensor], tensors: Mapping[str, Tensor], h: float = 1e-5) -> dict[str, Tensor]:
    """Numerical gradient of the scalar ``f()`` w.r.t. each tensor, perturbing in place."""
    out = {}
    with torch.no_grad():
        for name, t in tensors.items():
            g = torch.zeros_like(t)
            flat, gflat = t.view(-1), g.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + h
                up = f().item()
                flat[i] = orig - h
                down = f().item()
                flat[i] = orig
                gflat[i] = (up - down) / (2 * h)
            out[name] = g
    return out


def relative_error(analytic: Tensor, numeric: Tensor, floor: float = 1e-6) -> float:
    """Max elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    denom = torch.maximum(torch.maximum(analytic.abs(), numeric.abs()), torch.full_like(analytic, floor))
    return float(((analytic - numeric).abs() / denom).max())


def autograd_gradients(f: Callable[[], Tensor], tensors: Mapping[str, Tensor]) -> dict[str, Tensor]:
    for t in tensors.values():
        t.grad = None
    f().backward()
    return {n: (t.grad.clone() if t.grad is not None else torch.zeros_like(t)) for n, t in tensors.items()}


def compare_gradients(f: Callable[[], Tensor], tensors: Mapping[str, Tensor], h: float = 1e-5,
                      floor: float = 1e-6) -> dict[str, float]:
    analytic = autograd_gradients(f, tensors)
    numeric = central_difference(f, tensors, h)
    return {n: relative_error(analytic[n], numeric[n], floor) for n in tensors}


def adjacency_margin(E1: Tensor, E2: Tensor, Theta1: Tensor, Theta2: Tensor, k: int) -> float:
    """Distance of the adjacency from its ReLU kinks and top-k switching points."""
    with torch.no_grad():
        pre = torch.tanh(adjacency_preactivation(E1, E2, Theta1, Theta2))
        d1 = pre.shape[0]
        off = ~torch.eye(d1, dtype=torch.bool)
        margins = [pre[off].abs().min().item()]
        if k < d1:
            vals = torch.sort(torch.relu(pre), dim=-1, descending=True).values
            kth, nxt = vals[:, k - 1], vals[:, k]
            # a gap only matters when the kept entry is positive
            gap = torch.where(kth > 0, kth - nxt, torch.full_like(kth, float("inf")))
            margins.append(gap.min().item())
    return min(margins)


def kink_margin(model: HifiModel, X: Tensor, eps: Tensor) -> float:
    """Smallest distance of any nonsmooth point from its switching value.

    Covers off-diagonal adjacency preactivations, the gap between the k-th and
    (k+1)-th adjacency entries of each row, every feed-forward ReLU input and
    the log-variance clamp.
    """
    margins = []
    cfg = model.config
    with torch.no_grad():
        if model.graphfi is not None:
            gfi = model.graphfi
            margins.append(adjacency_margin(gfi.E1, gfi.E2, gfi.Theta1, gfi.Theta2, cfg.k_topk))
        captured = []
        hooks = [mod.register_forward_hook(lambda m, i, o: captured.append(o))
                 for name, mod in model.named_modules() if name.endswith("nonlinear.W1")]
        trace = model(X, eps=eps)
        for hk in hooks:
            hk.remove()
        margins += [c.abs().min().item() for c in captured]
        if trace.log_var is not None:
            raw = model.varenc.W_sigma(trace.X_eo)
            margins.append((LOG_VAR_CLAMP - raw.abs()).min().item())
    return min(margins)


def tiny_instance(seed: int, variant: str = "full", batch: int = 2, min_margin: float = 1e-3, **overrides):
    """Double-precision tiny model, input and frozen latent noise, redrawn until
    every kink is at least ``min_margin`` away."""
    cfg = HifiConfig(**{**TINY_CONFIG, "variant": variant, **overrides})
    for attempt in range(1000):
        s = seed + attempt
        model = HifiModel(cfg, seed=s).double()
        g = torch.Generator().manual_seed(10_000 + s)
        X = torch.rand(batch, cfg.w, cfg.d, generator=g, dtype=torch.float64)
        eps = torch.randn(batch, cfg.w, cfg.d1, generator=g, dtype=torch.float64)
        if kink_margin(model, X, eps) >= min_margin:
            return model, X, eps
    raise RuntimeError("could not draw a kink-free tiny instance")


def model_gradient_check(seed: int = 0, variant: str = "full", h: float = 1e-5) -> dict[str, float]:
    """Relative error of every parameter's loss gradient, autograd vs finite differences."""
    model, X, eps = tiny_instance(seed, variant)
    model.train()

    def f():
        return loss(model(X, eps=eps), beta=model.config.beta).total

    return compare_gradients(f, dict(model.named_parameters()), h)
