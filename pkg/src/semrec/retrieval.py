"""Mean-pool user profiles, cosine scoring and masked deterministic top-K."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from . import kernels
from .corpus import InteractionLog, UserHistory, user_history
from .encoding import NORM_EPS, EmbeddingTable
from .errors import ColdProfile, ConfigError, DimMismatch, EmptyCandidateSet, UnknownUser

logger = logging.getLogger(__name__)

MASK_POLICIES = ("history", "train")


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    vector: np.ndarray
    source_items: tuple[str, ...]
    missing_items: tuple[str, ...] = ()


@dataclass(frozen=True)
class Recommendation:
    user_id: str
    ranked: tuple[tuple[str, float], ...]
    K: int

    @property
    def items(self) -> list[str]:
        return [i for i, _ in self.ranked]

    @property
    def scores(self) -> list[float]:
        return [s for _, s in self.ranked]

    def to_json(self, variant: str | None = None) -> str:
        obj = {"user_id": self.user_id, "items": self.items,
               "scores": [round(s, 10) for s in self.scores], "k": self.K}
        if variant is not None:
            obj["variant"] = variant
        return json.dumps(obj, separators=(",", ":"))


def build_profile(history: UserHistory, table: EmbeddingTable) -> UserProfile:
    """Normalized mean of the normalized rows of the user's usable history items.

    Items absent from the table are reported in ``missing_items``; degenerate
    rows are skipped. No usable row raises ``ColdProfile``.
    """
    rows, used, missing = [], [], []
    for item in history.items:
        row = table.index.get(item)
        if row is None:
            missing.append(item)
        elif not table.degenerate_mask[row]:
            rows.append(row)
            used.append(item)
    if not rows:
        raise ColdProfile(f"user {history.user_id} has no usable history rows")
    mean = table.norm_matrix[rows].mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm <= NORM_EPS:
        raise ColdProfile(f"user {history.user_id}: history rows cancel out")
    if missing:
        logger.debug("user %s: %d history items missing from table", history.user_id, len(missing))
    return UserProfile(history.user_id, mean / norm, tuple(used), tuple(missing))


def score_all(profile: UserProfile, table: EmbeddingTable) -> np.ndarray:
    """Cosine score of every catalog row (degenerate rows score 0)."""
    if profile.vector.shape != (table.dim,):
        raise DimMismatch(f"profile dim {profile.vector.shape[0]} != table dim {table.dim}")
    return kernels.row_dots(table.norm_matrix, profile.vector)


def _excluded(table: EmbeddingTable, mask: Iterable[str]) -> np.ndarray:
    ex = np.zeros(len(table), dtype=np.bool_)
    for item in mask:
        row = table.index.get(item)
        if row is not None:
            ex[row] = True
    return ex


def recommend_topk(profile: UserProfile, table: EmbeddingTable, mask: Iterable[str] = (),
                   K: int = 10) -> Recommendation:
    """Top-K unmasked items by cosine score; equal scores go to the smaller item id."""
    if K < 1:
        raise ConfigError("K must be >= 1")
    excluded = _excluded(table, mask)
    if excluded.all():
        raise EmptyCandidateSet(f"mask covers the whole catalog for user {profile.user_id}")
    scores = score_all(profile, table)
    top = kernels.topk_masked(scores, excluded, table.tie_rank, K)
    return Recommendation(profile.user_id,
                          tuple((table.ids[j], float(scores[j])) for j in top), K)


def mask_for(log: InteractionLog, history: UserHistory, policy: str = "history") -> set[str]:
    """Items hidden from a user's candidates: the profile history, or every train item."""
    if policy == "history":
        return set(history.items)
    if policy == "train":
        return log.items_of(history.user_id, "train")
    raise ConfigError(f"unknown mask policy {policy!r}")


@dataclass
class RetrievalRun:
    recommendations: dict[str, Recommendation]
    cold_users: list[str] = field(default_factory=list)
    unknown_users: list[str] = field(default_factory=list)
    no_candidates: list[str] = field(default_factory=list)
    missing_history_items: int = 0


def recommend_users(log: InteractionLog, table: EmbeddingTable, users: Iterable[str], K: int,
                    L_max: int = 10, mask_policy: str = "history",
                    recency: str = "timestamp", chunk: int = 1024) -> RetrievalRun:
    """Batched retrieval for many users through the kernel path."""
    if K < 1:
        raise ConfigError("K must be >= 1")
    profiles: list[UserProfile] = []
    masks: list[np.ndarray] = []
    run = RetrievalRun({})
    for user in users:
        try:
            hist = user_history(log, user, L_max, recency)
        except UnknownUser:
            run.unknown_users.append(user)
            continue
        try:
            prof = build_profile(hist, table)
        except ColdProfile:
            run.cold_users.append(user)
            continue
        run.missing_history_items += len(prof.missing_items)
        profiles.append(prof)
        masks.append(np.flatnonzero(_excluded(table, mask_for(log, hist, mask_policy))))
    for start in range(0, len(profiles), chunk):
        part = profiles[start:start + chunk]
        part_masks = masks[start:start + chunk]
        scores = kernels.batch_row_dots(table.norm_matrix, np.stack([p.vector for p in part]))
        indptr = np.concatenate([[0], np.cumsum([m.size for m in part_masks])])
        indices = np.concatenate(part_masks) if indptr[-1] else np.zeros(0, dtype=np.int64)
        top = kernels.batch_topk(scores, indptr, indices, table.tie_rank, K)
        for u, prof in enumerate(part):
            row = top[u][top[u] >= 0]
            if row.size == 0:
                run.no_candidates.append(prof.user_id)
                continue
            run.recommendations[prof.user_id] = Recommendation(
                prof.user_id, tuple((table.ids[j], float(scores[u, j])) for j in row), K)
    return run


def write_recommendations(recs: Mapping[str, Recommendation], path, variant: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for user in sorted(recs):
            fh.write(recs[user].to_json(variant) + "\n")


def read_recommendations(path) -> dict[str, Recommendation]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            out[obj["user_id"]] = Recommendation(
                obj["user_id"], tuple(zip(obj["items"], obj["scores"])), obj["k"])
    return out
