"""Clustered synthetic catalogs with known preference structure.

Items sit around ``n_clusters`` unit-sphere centers. Within a cluster the
noise lives in a random ``latent_dim``-dimensional subspace (a taste axis);
``latent_dim == dim`` gives isotropic noise. Each user picks a home cluster
and an anchor item there; the items nearest the anchor form the user's pool,
which is split at random into train history and held-out validation truth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..corpus import InteractionLog
from ..encoding import EmbeddingTable
from ..errors import ConfigError


@dataclass(frozen=True)
class SyntheticSpec:
    n_users: int = 100
    n_items: int = 300
    n_clusters: int = 3
    dim: int = 32
    sigma: float = 0.05
    interactions_per_user: int = 10
    holdout_per_user: int = 5
    latent_dim: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.n_clusters <= self.n_items:
            raise ConfigError("need 1 <= n_clusters <= n_items")
        if self.sigma < 0:
            raise ConfigError("sigma must be >= 0")
        if not 1 <= self.latent_dim <= self.dim:
            raise ConfigError("latent_dim must lie in [1, dim]")
        if self.interactions_per_user < 1 or self.holdout_per_user < 1:
            raise ConfigError("users need at least one train and one held-out item")
        if self.interactions_per_user + self.holdout_per_user > self.n_items // self.n_clusters:
            raise ConfigError("per-user pool exceeds the smallest cluster")


@dataclass
class SyntheticData:
    spec: SyntheticSpec
    log: InteractionLog
    table: EmbeddingTable
    truth: dict[str, set[str]]
    item_cluster: dict[str, int]
    user_cluster: dict[str, int]


def item_id(i: int) -> str:
    return f"i{i:05d}"


def user_id(u: int) -> str:
    return f"u{u:05d}"


def generate_synthetic(spec: SyntheticSpec) -> SyntheticData:
    rng = np.random.default_rng(spec.seed)
    C, d = spec.n_clusters, spec.dim
    centers = rng.standard_normal((C, d))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    bases = np.stack([np.linalg.qr(rng.standard_normal((d, spec.latent_dim)))[0] for _ in range(C)])
    labels = rng.permutation(np.arange(spec.n_items) % C)
    Z = rng.standard_normal((spec.n_items, spec.latent_dim))
    X = centers[labels] + spec.sigma * np.einsum("nij,nj->ni", bases[labels], Z)
    X /= np.linalg.norm(X, axis=1, keepdims=True)

    ids = [item_id(i) for i in range(spec.n_items)]
    members = [np.flatnonzero(labels == c) for c in range(C)]
    pool_size = spec.interactions_per_user + spec.holdout_per_user
    records, truth, user_cluster = [], {}, {}
    for u in range(spec.n_users):
        uid = user_id(u)
        home = int(rng.integers(C))
        mem = members[home]
        anchor = X[mem[rng.integers(mem.size)]]
        # rounding makes exact ties (sigma = 0) resolve by ascending id
        sim = np.round(X[mem] @ anchor, 12)
        pool = mem[np.lexsort((mem, -sim))[:pool_size]]
        pool = rng.permutation(pool)
        hist, held = pool[: spec.interactions_per_user], pool[spec.interactions_per_user:]
        for t, i in enumerate(hist):
            records.append((uid, ids[i], t, "train"))
        for t, i in enumerate(held):
            records.append((uid, ids[i], spec.interactions_per_user + t, "validation"))
        truth[uid] = {ids[i] for i in held}
        user_cluster[uid] = home
    return SyntheticData(
        spec,
        InteractionLog.from_records(records),
        EmbeddingTable(ids, X),
        truth,
        {ids[i]: int(labels[i]) for i in range(spec.n_items)},
        user_cluster,
    )


def synthetic_view(table: EmbeddingTable, dim: int, noise: float, seed: int = 0) -> EmbeddingTable:
    """A second modality: a random linear map of the item vectors plus Gaussian noise."""
    rng = np.random.default_rng([seed, 0xB1])
    W = rng.standard_normal((dim, table.dim)) / np.sqrt(table.dim)
    M = table.norm_matrix @ W.T + noise * rng.standard_normal((len(table), dim))
    return EmbeddingTable(table.ids, M)
