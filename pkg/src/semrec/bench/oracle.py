"""Brute-force retrieval used to cross-check the kernel path.

Deliberately naive: explicit per-pair cosine on the raw rows, then a full
sort with the same (score desc, id asc) rule. Shares no code with
``semrec.retrieval`` beyond the data containers.
"""

from __future__ import annotations

import math
from typing import Mapping

from ..encoding import EmbeddingTable
from ..retrieval import Recommendation


def _cosine(a, b) -> float:
    dot = na = nb = 0.0
    for x, y in zip(a, b):
        dot += x * y
        na += x * x
        nb += y * y
    if na <= 1e-24 or nb <= 1e-24:  # norm <= 1e-12
        return 0.0
    return dot / (math.sqrt(na) * math.sqrt(nb))


def brute_force_oracle(profiles: Mapping, table: EmbeddingTable, masks: Mapping, K: int
                       ) -> dict[str, Recommendation]:
    """``profiles`` maps user to a profile vector (or anything with ``.vector``)."""
    rows = [[float(x) for x in row] for row in table.matrix]
    out = {}
    for user, prof in profiles.items():
        vec = [float(x) for x in getattr(prof, "vector", prof)]
        masked = set(masks.get(user, ()))
        scored = [(_cosine(vec, row), item) for item, row in zip(table.ids, rows)
                  if item not in masked]
        scored.sort(key=lambda p: (-p[0], p[1]))
        out[user] = Recommendation(user, tuple((i, s) for s, i in scored[:K]), K)
    return out
