"""Item-item kNN graph and linear (LightGCN-style) propagation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .. import kernels
from ..encoding import EmbeddingTable, normalize_rows
from ..errors import ConfigError, TooFewItems

DEFAULT_K = 10
DEFAULT_LAYERS = 2


@dataclass(frozen=True)
class KnnGraph:
    k: int
    ids: tuple[str, ...]
    neighbors: np.ndarray  # (n, k) row indices, best first
    adjacency: sp.csr_matrix  # symmetrized 0/1 adjacency
    weights: sp.csr_matrix  # D^-1/2 A D^-1/2


def build_knn_graph(table: EmbeddingTable, k: int = DEFAULT_K) -> KnnGraph:
    """Cosine kNN (self excluded, ties by ascending id), symmetrized with max(A, A^T)."""
    n = len(table)
    if k < 1:
        raise ConfigError("k must be >= 1")
    if n <= k:
        raise TooFewItems(f"need more than k={k} items, have {n}")
    nbrs = kernels.knn(table.norm_matrix, k, table.tie_rank)
    rows = np.repeat(np.arange(n), k)
    A = sp.csr_matrix((np.ones(n * k), (rows, nbrs.ravel())), shape=(n, n))
    A = A.maximum(A.T).tocsr()
    A.sum_duplicates()
    A.data[:] = 1.0
    deg = np.asarray(A.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(deg)
    W = sp.diags(inv_sqrt) @ A @ sp.diags(inv_sqrt)
    return KnnGraph(k, table.ids, nbrs, A, W.tocsr())


def propagate(table: EmbeddingTable, graph: KnnGraph, layers: int = DEFAULT_LAYERS) -> EmbeddingTable:
    """``E(l+1) = W E(l)`` from the normalized rows; output is the re-normalized layer mean."""
    if layers < 1:
        raise ConfigError("layers must be >= 1")
    if graph.ids != table.ids:
        raise ConfigError("graph and table cover different items")
    E = table.norm_matrix
    acc = np.zeros_like(E)
    for _ in range(layers):
        E = graph.weights @ E
        acc += E
    out, _ = normalize_rows(acc / layers)
    return EmbeddingTable(table.ids, out)


def spectral_radius(W, iters: int = 500, seed: int = 0) -> float:
    """Power-iteration estimate of the largest |eigenvalue| of a symmetric matrix.

    Iterates on ``W @ W`` so that eigenvalues of equal magnitude and opposite
    sign (bipartite components) do not stall convergence.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(W.shape[0])
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(iters):
        y = W @ (W @ x)
        lam = np.linalg.norm(y)
        if lam == 0.0:
            return 0.0
        x = y / lam
    return float(np.sqrt(lam))
