"""Embedded invariant checks run by ``hifi selfcheck``."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
import torch

from . import attn, evaluation, graphfi, varenc
from .gradcheck import adjacency_margin, compare_gradients, model_gradient_check


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _model_gradients():
    worst = 0.0
    for variant in ("full", "encoder_only"):
        errs = model_gradient_check(0, variant)
        worst = max(worst, max(errs.values()))
    return worst < 1e-3, f"max relative error {worst:.2e} (< 1e-3)"


def graph_gradient_errors(seed: int = 3) -> dict[str, float]:
    """``||X_ho||^2`` gradients of E1, Theta1 and W_ho on a d=3, d1=4, w=2 instance."""
    d, d1, w, k = 3, 4, 2, 2
    shapes = dict(W_h=(d1, d), b_h=(d1,), E1=(d1, d1), E2=(d1, d1), Theta1=(d1, d1), Theta2=(d1, d1),
                  W_ho=(2 * d1, d1))
    for s in range(seed, seed + 1000):
        g = torch.Generator().manual_seed(s)
        t = {n: torch.randn(*shape, generator=g, dtype=torch.float64) for n, shape in shapes.items()}
        if adjacency_margin(t["E1"], t["E2"], t["Theta1"], t["Theta2"], k) >= 1e-3:
            break
    X = torch.randn(2, w, d, generator=g, dtype=torch.float64)
    for v in t.values():
        v.requires_grad_(True)

    def f():
        _, X_ho = graphfi.feature_interaction_forward(
            t["W_h"], t["b_h"], t["E1"], t["E2"], t["Theta1"], t["Theta2"], t["W_ho"], X,
            alpha=0.2, K=1, k=k)
        return (X_ho ** 2).sum()

    return compare_gradients(f, {n: t[n] for n in ("E1", "Theta1", "W_ho")})


def _graph_gradients():
    worst = max(graph_gradient_errors().values())
    return worst < 1e-4, f"max relative error {worst:.2e} (< 1e-4)"


def _softmax_rows():
    g = torch.Generator().manual_seed(0)
    worst = 0.0
    for _ in range(1000):
        Q = torch.randn(2, 5, 8, generator=g) * 3
        K = torch.randn(2, 7, 8, generator=g) * 3
        V = torch.randn(2, 7, 8, generator=g)
        _, weights = attn.scaled_dot_attention(Q, K, V, num_heads=2, return_weights=True)
        worst = max(worst, float((weights.sum(-1) - 1).abs().max()))
    return worst < 1e-6, f"max |row sum - 1| = {worst:.1e}"


def _kl_closed_form():
    kl = float(varenc.kl_to_standard_normal(torch.tensor([[1.0]], dtype=torch.float64),
                                            torch.tensor([[0.0]], dtype=torch.float64)))
    return abs(kl - 0.5) < 1e-12, f"KL(N(1,1)||N(0,1)) = {kl!r}"


def _kl_monte_carlo():
    g = torch.Generator().manual_seed(11)
    mu = torch.randn(1, 3, 4, generator=g, dtype=torch.float64)
    log_var = torch.randn(1, 3, 4, generator=g, dtype=torch.float64) * 0.5
    n = 100_000
    eps = torch.randn(n, *mu.shape[1:], generator=g, dtype=torch.float64)
    z = mu + torch.exp(0.5 * log_var) * eps
    log_q = -0.5 * (eps ** 2 + log_var + math.log(2 * math.pi))
    log_p = -0.5 * (z ** 2 + math.log(2 * math.pi))
    mc = float((log_q - log_p).reshape(n, -1).sum(-1).mean())
    closed = float(varenc.kl_to_standard_normal(mu, log_var))
    rel = abs(mc - closed) / closed
    return rel < 0.02, f"closed {closed:.4f} vs Monte Carlo {mc:.4f} (rel {rel:.2%})"


def _point_adjust_oracle():
    rng = np.random.default_rng(5)
    for _ in range(2000):
        n = int(rng.integers(1, 60))
        labels = (rng.random(n) < 0.3).astype(np.int8)
        pred = (rng.random(n) < 0.2).astype(np.int8)
        expected = pred.copy()
        i = 0
        while i < n:
            if labels[i]:
                j = i
                while j < n and labels[j]:
                    j += 1
                if pred[i:j].any():
                    expected[i:j] = 1
                i = j
            else:
                i += 1
        if not np.array_equal(evaluation.point_adjust(pred, labels), expected):
            return False, f"mismatch on labels={labels.tolist()} pred={pred.tolist()}"
    return True, "2000 random cases match segment scan"


def _adjacency_properties():
    g = torch.Generator().manual_seed(9)
    d1 = 8
    for _ in range(200):
        E1, E2, T1, T2 = (torch.randn(d1, d1, generator=g, dtype=torch.float64) / math.sqrt(d1) for _ in range(4))
        A = graphfi.build_adjacency(E1, E2, T1, T2)
        if torch.any(torch.diagonal(A) != 0) or torch.any(A < 0) or torch.any(A >= 1):
            return False, "adjacency outside [0, 1) or nonzero diagonal"
        S = graphfi.topk_sparsify(A, 3)
        if int((S != 0).sum(-1).max()) > 3:
            return False, "top-k kept too many entries"
    I = graphfi.normalize_adjacency(torch.zeros(d1, d1, dtype=torch.float64))
    if not torch.equal(I, torch.eye(d1, dtype=torch.float64)):
        return False, "normalized zero graph is not the identity"
    return True, "200 draws: zero diagonal, entries in [0,1), top-k bound"


CHECKS: list[tuple[str, Callable[[], tuple[bool, str]]]] = [
    ("model gradients vs finite differences", _model_gradients),
    ("graph gradients vs finite differences", _graph_gradients),
    ("softmax rows sum to one", _softmax_rows),
    ("KL closed form", _kl_closed_form),
    ("KL vs Monte Carlo", _kl_monte_carlo),
    ("point-adjust vs segment scan", _point_adjust_oracle),
    ("adjacency properties", _adjacency_properties),
]


def run_selfcheck() -> list[CheckResult]:
    results = []
    for name, fn in CHECKS:
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(ok), detail, time.perf_counter() - t0))
    return results


def format_results(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  status  time    detail"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  {r.seconds:5.1f}s  {r.detail}")
    return "\n".join(lines)
