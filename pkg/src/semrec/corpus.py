"""Interaction logs, truncated user histories and coverage-filtered user sets."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, NamedTuple

from .errors import ConfigError, EmptyLog, ParseError, SplitConflict, UnknownUser

SPLITS = ("train", "validation", "test")
_SPLIT_ALIASES = {
    "train": "train",
    "training": "train",
    "validation": "validation",
    "valid": "validation",
    "val": "validation",
    "dev": "validation",
    "test": "test",
}
RECENCY_MODES = ("timestamp", "file_order")


class Interaction(NamedTuple):
    user_id: str
    item_id: str
    timestamp: int | None
    split: str
    order: int  # position in the source file, used when timestamps are absent


@dataclass(frozen=True)
class InteractionLog:
    """Immutable set of implicit-feedback events with train/validation/test labels."""

    interactions: tuple[Interaction, ...]

    def __post_init__(self):
        for rec in self.interactions:
            if not rec.user_id or not rec.item_id:
                raise ParseError(rec.order + 1, "empty user or item id")
            if rec.split not in SPLITS:
                raise ParseError(rec.order + 1, f"unknown split {rec.split!r}")
        seen: dict[tuple, str] = {}
        for rec in self.interactions:
            key = (rec.user_id, rec.item_id, rec.timestamp)
            other = seen.setdefault(key, rec.split)
            if other != rec.split:
                raise SplitConflict(
                    f"({rec.user_id}, {rec.item_id}, {rec.timestamp}) appears in both "
                    f"{other} and {rec.split}"
                )

    @classmethod
    def from_records(cls, records: Iterable[tuple]) -> "InteractionLog":
        """Build a log from ``(user, item, timestamp, split)`` tuples, deduplicating."""
        return cls(_dedupe(
            Interaction(str(u), str(i), None if t is None else int(t), _split(s, n + 1), n)
            for n, (u, i, t, s) in enumerate(records)
        ))

    def __len__(self) -> int:
        return len(self.interactions)

    @cached_property
    def counts(self) -> dict[str, int]:
        c = {s: 0 for s in SPLITS}
        for rec in self.interactions:
            c[rec.split] += 1
        return c

    @cached_property
    def users(self) -> frozenset[str]:
        return frozenset(r.user_id for r in self.interactions)

    @cached_property
    def items(self) -> frozenset[str]:
        return frozenset(r.item_id for r in self.interactions)

    @cached_property
    def has_timestamps(self) -> bool:
        return all(r.timestamp is not None for r in self.interactions)

    @cached_property
    def _by_split_user(self) -> dict[str, dict[str, tuple[Interaction, ...]]]:
        out: dict[str, dict[str, list]] = {s: defaultdict(list) for s in SPLITS}
        for rec in self.interactions:
            out[rec.split][rec.user_id].append(rec)
        return {s: {u: tuple(v) for u, v in d.items()} for s, d in out.items()}

    def user_interactions(self, user_id: str, split: str = "train") -> tuple[Interaction, ...]:
        return self._by_split_user[split].get(user_id, ())

    def users_in(self, split: str) -> list[str]:
        return sorted(self._by_split_user[split])

    def items_of(self, user_id: str, split: str = "train") -> set[str]:
        return {r.item_id for r in self.user_interactions(user_id, split)}


@dataclass(frozen=True)
class UserHistory:
    user_id: str
    items: tuple[str, ...]  # most recent last
    L_max: int

    def __post_init__(self):
        if len(self.items) > self.L_max:
            raise ValueError("history longer than L_max")


@dataclass(frozen=True)
class CoverageSet:
    covered_items: frozenset[str] = field(default_factory=frozenset)

    def __contains__(self, item_id: str) -> bool:
        return item_id in self.covered_items

    def __len__(self) -> int:
        return len(self.covered_items)

    def validate(self, catalog: Iterable[str]) -> None:
        extra = self.covered_items - set(catalog)
        if extra:
            raise ConfigError(f"{len(extra)} covered items are not in the catalog")


def _split(raw: str, line: int) -> str:
    try:
        return _SPLIT_ALIASES[str(raw).strip().lower()]
    except KeyError:
        raise ParseError(line, f"unknown split {raw!r}") from None


def _dedupe(records: Iterable[Interaction]) -> tuple[Interaction, ...]:
    # keep the earliest timestamp per (user, item, split); file order breaks ties
    best: dict[tuple[str, str, str], Interaction] = {}
    for rec in records:
        key = (rec.user_id, rec.item_id, rec.split)
        cur = best.get(key)
        if cur is None or _earlier(rec, cur):
            best[key] = rec
    return tuple(sorted(best.values(), key=lambda r: r.order))


def _earlier(a: Interaction, b: Interaction) -> bool:
    if a.timestamp is not None and b.timestamp is not None and a.timestamp != b.timestamp:
        return a.timestamp < b.timestamp
    return a.order < b.order


def _parse_ts(raw, line: int) -> int | None:
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except (TypeError, ValueError):
        try:
            f = float(raw)
        except (TypeError, ValueError):
            raise ParseError(line, f"bad timestamp {raw!r}") from None
        if f != int(f):
            raise ParseError(line, f"non-integer timestamp {raw!r}")
        return int(f)


def _read_tsv(path: Path) -> list[Interaction]:
    out = []
    header_seen = False
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            cols = line.split("\t")
            if not header_seen and cols[:2] == ["user_id", "item_id"]:
                header_seen = True
                continue
            if len(cols) == 3:
                user, item, split = cols
                ts = None
            elif len(cols) == 4:
                user, item, ts, split = cols
            else:
                raise ParseError(lineno, f"expected 3 or 4 tab-separated columns, got {len(cols)}")
            user, item = user.strip(), item.strip()
            if not user or not item:
                raise ParseError(lineno, "empty user or item id")
            out.append(Interaction(user, item, _parse_ts(ts, lineno), _split(split, lineno), len(out)))
    return out


def _read_jsonl(path: Path) -> list[Interaction]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(lineno, f"invalid JSON: {exc.msg}") from None
            if not isinstance(obj, dict):
                raise ParseError(lineno, "expected a JSON object")
            try:
                user, item, split = obj["user_id"], obj["item_id"], obj["split"]
            except KeyError as exc:
                raise ParseError(lineno, f"missing key {exc.args[0]!r}") from None
            user, item = str(user).strip(), str(item).strip()
            if not user or not item:
                raise ParseError(lineno, "empty user or item id")
            ts = _parse_ts(obj.get("timestamp"), lineno)
            out.append(Interaction(user, item, ts, _split(split, lineno), len(out)))
    return out


def load_interactions(path, format: str | None = None) -> InteractionLog:
    """Load a TSV or JSONL interaction file.

    TSV columns are ``user_id, item_id, [timestamp,] split``; ``#`` lines and an
    optional header row are skipped. Duplicate ``(user, item, split)`` rows keep
    the earliest timestamp.
    """
    path = Path(path)
    if format is None:
        format = "jsonl" if path.suffix in (".jsonl", ".json") else "tsv"
    if format == "tsv":
        records = _read_tsv(path)
    elif format == "jsonl":
        records = _read_jsonl(path)
    else:
        raise ConfigError(f"unknown interaction format {format!r}")
    if not records:
        raise EmptyLog(f"{path}: no interaction records")
    return InteractionLog(_dedupe(records))


def write_interactions(log: InteractionLog, path) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        if path.suffix == ".jsonl":
            for r in log.interactions:
                obj = {"user_id": r.user_id, "item_id": r.item_id, "split": r.split}
                if r.timestamp is not None:
                    obj["timestamp"] = r.timestamp
                fh.write(json.dumps(obj) + "\n")
        else:
            fh.write("user_id\titem_id\ttimestamp\tsplit\n")
            for r in log.interactions:
                ts = "" if r.timestamp is None else str(r.timestamp)
                fh.write(f"{r.user_id}\t{r.item_id}\t{ts}\t{r.split}\n")


def user_history(log: InteractionLog, user_id: str, L_max: int = 10,
                 recency: str = "timestamp") -> UserHistory:
    """Return the user's last ``L_max`` train items, most recent last.

    Equal timestamps are ordered so that the smaller item id counts as more
    recent, which keeps it when the cut falls inside a tie.
    """
    if L_max < 1:
        raise ConfigError("L_max must be >= 1")
    if recency not in RECENCY_MODES:
        raise ConfigError(f"unknown recency mode {recency!r}")
    recs = log.user_interactions(user_id, "train")
    if not recs:
        raise UnknownUser(user_id)
    if recency == "timestamp" and all(r.timestamp is not None for r in recs):
        newest_first = sorted(recs, key=lambda r: (-r.timestamp, r.item_id))
    else:
        newest_first = sorted(recs, key=lambda r: -r.order)
    kept = newest_first[:L_max]
    return UserHistory(user_id, tuple(r.item_id for r in reversed(kept)), L_max)


def coverage_filter(log: InteractionLog, cov, eval_split: str = "validation") -> set[str]:
    """Users with at least one covered item in train and one in ``eval_split``."""
    covered = cov.covered_items if isinstance(cov, CoverageSet) else frozenset(cov)
    train = {r.user_id for r in log.interactions if r.split == "train" and r.item_id in covered}
    held = {r.user_id for r in log.interactions if r.split == eval_split and r.item_id in covered}
    return train & held
