"""Recall@K, NDCG@K (binary relevance) and Hit@K, per user and averaged."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, EmptyTruth

DEFAULT_KS = (5, 10, 20)
METRICS = ("recall", "ndcg", "hit")
# column layout of the main results table
TABLE_COLUMNS = (("recall", 5), ("recall", 10), ("recall", 20), ("ndcg", 10), ("ndcg", 20),
                 ("hit", 10))


def _check(truth, K):
    if K < 1:
        raise ConfigError("K must be >= 1")
    if not truth:
        raise EmptyTruth("ground-truth set is empty")


def recall_at_k(ranked: Sequence[str], truth: Iterable[str], K: int) -> float:
    truth = set(truth)
    _check(truth, K)
    return len(truth.intersection(ranked[:K])) / len(truth)


def hit_at_k(ranked: Sequence[str], truth: Iterable[str], K: int) -> float:
    truth = set(truth)
    _check(truth, K)
    return 1.0 if truth.intersection(ranked[:K]) else 0.0


def ndcg_at_k(ranked: Sequence[str], truth: Iterable[str], K: int) -> float:
    truth = set(truth)
    _check(truth, K)
    dcg = sum(1.0 / math.log2(r + 2) for r, item in enumerate(ranked[:K]) if item in truth)
    idcg = sum(1.0 / math.log2(r + 2) for r in range(min(K, len(truth))))
    return dcg / idcg


_FNS = {"recall": recall_at_k, "ndcg": ndcg_at_k, "hit": hit_at_k}


def metric_key(metric: str, K: int) -> str:
    name = {"recall": "Recall", "ndcg": "NDCG", "hit": "Hit"}[metric]
    return f"{name}@{K}"


@dataclass
class MetricReport:
    variant: str
    Ks: tuple[int, ...]
    per_user: dict[str, dict[str, float]]
    means: dict[str, float]
    stds: dict[str, float]
    n_evaluated: int
    excluded: dict[str, list[str]] = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    @property
    def n_excluded(self) -> int:
        return sum(len(v) for v in self.excluded.values())

    def mean(self, metric: str, K: int) -> float:
        return self.means[metric_key(metric, K)]

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "Ks": list(self.Ks),
            "n_evaluated": self.n_evaluated,
            "n_excluded": self.n_excluded,
            "excluded": {k: sorted(v) for k, v in sorted(self.excluded.items())},
            "means": {k: _r(v) for k, v in self.means.items()},
            "stds": {k: _r(v) for k, v in self.stds.items()},
            "per_user": {u: {k: _r(v) for k, v in row.items()}
                         for u, row in sorted(self.per_user.items())},
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, obj: dict) -> "MetricReport":
        return cls(obj["variant"], tuple(obj["Ks"]), obj["per_user"], obj["means"], obj["stds"],
                   obj["n_evaluated"], obj.get("excluded", {}), obj.get("notes", {}))


def _r(x: float) -> float:
    # fixed precision keeps serialized reports byte-stable across platforms
    return round(float(x), 12)


def evaluate_run(recs: Mapping, truth: Mapping[str, Iterable[str]], Ks: Sequence[int] = DEFAULT_KS,
                 variant: str = "run", excluded: Mapping[str, Iterable[str]] | None = None
                 ) -> MetricReport:
    """Score every user that has both a recommendation and a non-empty truth set.

    ``recs`` maps user id to a ranked item list or a ``Recommendation``.
    Standard deviations are population (ddof=0).
    """
    Ks = tuple(sorted(set(Ks)))
    if not Ks or Ks[0] < 1:
        raise ConfigError("Ks must be positive")
    out_excl: dict[str, list[str]] = {k: list(v) for k, v in (excluded or {}).items()}
    per_user: dict[str, dict[str, float]] = {}
    for user in sorted(set(recs) | set(truth)):
        t = set(truth.get(user, ()))
        if user not in recs:
            out_excl.setdefault("no_recommendation", []).append(user)
            continue
        if not t:
            out_excl.setdefault("no_truth", []).append(user)
            continue
        ranked = recs[user]
        ranked = list(getattr(ranked, "items", ranked))
        per_user[user] = {metric_key(m, K): _FNS[m](ranked, t, K) for K in Ks for m in METRICS}
    keys = [metric_key(m, K) for K in Ks for m in METRICS]
    means, stds = {}, {}
    for key in keys:
        vals = np.array([row[key] for row in per_user.values()])
        means[key] = float(vals.mean()) if vals.size else 0.0
        stds[key] = float(vals.std()) if vals.size else 0.0
    return MetricReport(variant, Ks, per_user, means, stds, len(per_user), out_excl)


def improvement_pct(value: float, baseline: float) -> float:
    return 100.0 * (value - baseline) / baseline


def table_csv(reports: Sequence[MetricReport], baseline: str | None = None) -> str:
    """Main-results layout: Recall@5/10/20, NDCG@10/20, Hit@10, improvement over baseline."""
    base = next((r for r in reports if r.variant == baseline), None)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    label = f"Improv. over {baseline}" if baseline else "Improv."
    w.writerow(["Model"] + [metric_key(m, K) for m, K in TABLE_COLUMNS] + [label])
    for r in reports:
        row = [r.variant]
        for m, K in TABLE_COLUMNS:
            key = metric_key(m, K)
            row.append(f"{r.means[key]:.3f}" if key in r.means else "")
        if base is None or "Recall@10" not in r.means:
            row.append("")
        elif r is base:
            row.append("baseline")
        elif base.means["Recall@10"] == 0:
            row.append("")
        else:
            pct = improvement_pct(r.means["Recall@10"], base.means["Recall@10"])
            row.append(f"{0.0 if abs(pct) < 0.05 else pct:+.1f}%")
        w.writerow(row)
    return buf.getvalue()
