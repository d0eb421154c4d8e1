"""
Building the feature interaction graph by hand
===============================================

Walks through adjacency construction, row top-k, normalization and
propagation on a small random instance, printing each intermediate.
"""
import math

import torch

from hifi import graphfi

torch.set_printoptions(precision=3, sci_mode=False)
g = torch.Generator().manual_seed(0)
d1, k = 6, 2

#
# Four learned matrices define two channel embeddings M1 and M2.
#
E1, E2, Theta1, Theta2 = (torch.randn(d1, d1, generator=g) / math.sqrt(d1) for _ in range(4))

#
# S = M1 M2^T. Subtracting its transpose makes the score antisymmetric, so
# after ReLU(tanh(.)) at most one direction of each pair survives.
#
A = graphfi.build_adjacency(E1, E2, Theta1, Theta2)
print("dense adjacency\n", A)
print("pairs with both directions nonzero:", int(((A > 0) & (A.T > 0)).sum()) // 2)

#
# Keep the k strongest outgoing edges per channel.
#
A_sparse = graphfi.topk_sparsify(A, k)
print("\nsparse adjacency (k=%d)\n" % k, A_sparse)

#
# Symmetric degree normalization with self loops.
#
A_hat = graphfi.normalize_adjacency(A_sparse)
print("\nnormalized, spectral radius %.4f" % torch.linalg.eigvals(A_hat).abs().max())

#
# Propagation with restart: alpha pulls each hop back toward H0.
#
H0 = torch.randn(1, d1, 4, generator=g)
for alpha in (1.0, 0.2, 0.0):
    H = graphfi.propagate(A_hat, H0, alpha, K=3)
    drift = [(h - H0).norm().item() for h in H]
    print(f"alpha={alpha}: distance from H0 per hop", [round(x, 3) for x in drift])
