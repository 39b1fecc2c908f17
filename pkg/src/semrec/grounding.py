"""Visual grounding client and the offline semantic cache.

Each item image is sent once to a vision-language text-generation service;
the returned description is stored in an append-only JSONL cache keyed by
``(item_id, prompt_hash)`` so that later runs never call the service again.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable

from .errors import (
    ConfigError,
    EmptyGeneration,
    GroundingUnavailable,
    InvalidImage,
    ParseError,
    SemrecError,
    ServiceError,
)

log = logging.getLogger(__name__)

CACHE_FILENAME = "semantic_cache.jsonl"
FAILURES_FILENAME = "grounding_failures.jsonl"
GROUNDING_URL_ENV = "SEMREC_GROUNDING_URL"
GROUNDING_TOKEN_ENV = "SEMREC_GROUNDING_TOKEN"

IMAGE_SLOT = "<image>"
DEFAULT_MODEL_ID = "llava-next-7b"
DEFAULT_MODEL_NOTE = "4-bit quantization"
DEFAULT_ATTRIBUTES = ("color", "material", "style", "category", "occasion")
# paraphrase of the generation instruction; the original prompt text is unpublished
DEFAULT_TEMPLATE = (
    IMAGE_SLOT
    + "\nWrite a detailed product description of the item in this image. "
    "Emphasize its visual attributes, including {attributes}, and the occasions it suits."
)

RETRIES = 3
BACKOFF_BASE = 1.0
BACKOFF_FACTOR = 2.0


@dataclass(frozen=True)
class GroundingPrompt:
    template: str = DEFAULT_TEMPLATE
    attribute_focus: tuple[str, ...] = DEFAULT_ATTRIBUTES

    def __post_init__(self):
        if not self.template.strip():
            raise ConfigError("prompt template must be non-empty")
        object.__setattr__(self, "attribute_focus", tuple(self.attribute_focus))

    def render(self) -> str:
        return self.template.replace("{attributes}", ", ".join(self.attribute_focus))

    def hash(self, model_id: str) -> str:
        payload = json.dumps([self.template, list(self.attribute_focus), model_id],
                             separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class DescriptionRecord:
    item_id: str
    description: str
    model_id: str
    prompt_hash: str
    created_at: str
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.description.strip():
            raise EmptyGeneration(f"empty description for item {self.item_id}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_dict(cls, obj: dict) -> "DescriptionRecord":
        return cls(
            item_id=str(obj["item_id"]),
            description=obj["description"],
            model_id=obj["model_id"],
            prompt_hash=obj["prompt_hash"],
            created_at=obj["created_at"],
            metadata=obj.get("metadata", {}),
        )


class SemanticCache:
    """Item-keyed store of grounded descriptions.

    When ``path`` is given, every ``put`` appends one JSON line; loading replays
    the file with last-write-wins per ``(item_id, prompt_hash)``. Writes are
    serialized by a lock; reads see a consistent snapshot.
    """

    def __init__(self, path=None):
        self.path = None if path is None else Path(path)
        self._records: dict[tuple[str, str], DescriptionRecord] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._replay()

    def _replay(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = DescriptionRecord.from_dict(json.loads(line))
                except (ValueError, KeyError, SemrecError) as exc:
                    # a torn final line from an interrupted run is expected
                    log.warning("%s:%d skipped unreadable cache line (%s)", self.path, lineno, exc)
                    continue
                self._records[(rec.item_id, rec.prompt_hash)] = rec

    @classmethod
    def open(cls, directory) -> "SemanticCache":
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        return cls(directory / CACHE_FILENAME)

    def get(self, item_id: str, prompt_hash: str) -> DescriptionRecord | None:
        return self._records.get((item_id, prompt_hash))

    def put(self, record: DescriptionRecord) -> None:
        with self._lock:
            self._records[(record.item_id, record.prompt_hash)] = record
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(record.to_json() + "\n")

    def compact(self) -> None:
        """Rewrite the backing file with exactly one line per key."""
        if self.path is None:
            return
        with self._lock:
            tmp = self.path.with_suffix(".tmp")
            with open(tmp, "w", encoding="utf-8") as fh:
                for key in sorted(self._records):
                    fh.write(self._records[key].to_json() + "\n")
            os.replace(tmp, self.path)

    def records(self) -> list[DescriptionRecord]:
        with self._lock:
            snapshot = dict(self._records)
        return [snapshot[k] for k in sorted(snapshot)]

    def latest_by_item(self, prompt_hash: str | None = None) -> dict[str, DescriptionRecord]:
        out: dict[str, DescriptionRecord] = {}
        for rec in self.records():
            if prompt_hash is not None and rec.prompt_hash != prompt_hash:
                continue
            cur = out.get(rec.item_id)
            if cur is None or rec.created_at >= cur.created_at:
                out[rec.item_id] = rec
        return out

    def coverage(self, prompt_hash: str | None = None) -> frozenset[str]:
        return frozenset(self.latest_by_item(prompt_hash))

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, key) -> bool:
        return key in self._records


# -- services ----------------------------------------------------------------

@dataclass
class ServiceConfig:
    url: str | None = None
    token: str | None = None
    model_id: str = DEFAULT_MODEL_ID
    max_tokens: int = 256
    timeout: float = 120.0

    @classmethod
    def from_env(cls, **overrides) -> "ServiceConfig":
        cfg = cls(url=os.environ.get(GROUNDING_URL_ENV), token=os.environ.get(GROUNDING_TOKEN_ENV))
        for k, v in overrides.items():
            if v is not None:
                setattr(cfg, k, v)
        return cfg


def image_payload(image_ref: str) -> dict:
    """JSON image field for the wire protocol: a URL, or a local file as base64."""
    if image_ref.startswith(("http://", "https://")):
        return {"image_url": image_ref}
    path = Path(image_ref)
    if not path.is_file():
        raise InvalidImage(f"image not found: {image_ref}")
    return {"image_base64": base64.b64encode(path.read_bytes()).decode("ascii")}


class HttpGroundingService:
    """POSTs ``{model, prompt, image_url | image_base64, max_tokens}``, reads ``{text}``."""

    def __init__(self, config: ServiceConfig, session=None):
        import requests

        if not config.url:
            raise ConfigError(f"grounding service URL missing (set {GROUNDING_URL_ENV})")
        self.config = config
        self.model_id = config.model_id
        self.session = session or requests.Session()

    def generate(self, prompt: str, image_ref: str) -> str:
        import requests

        body = {"model": self.model_id, "prompt": prompt, "max_tokens": self.config.max_tokens}
        body.update(image_payload(image_ref))
        headers = {"Authorization": f"Bearer {self.config.token}"} if self.config.token else {}
        try:
            resp = self.session.post(self.config.url, json=body, headers=headers,
                                     timeout=self.config.timeout)
        except requests.RequestException as exc:
            raise ServiceError(str(exc)) from exc
        if resp.status_code >= 400:
            raise ServiceError(f"grounding service returned HTTP {resp.status_code}",
                               resp.status_code)
        try:
            return resp.json()["text"]
        except (ValueError, KeyError, TypeError) as exc:
            raise ServiceError(f"malformed grounding response: {exc}") from exc


_COLORS = ("black", "white", "navy", "red", "olive", "beige", "grey", "burgundy", "tan", "teal")
_MATERIALS = ("leather", "cotton", "denim", "wool", "silk", "canvas", "suede", "linen", "knit")
_STYLES = ("classic", "casual", "minimalist", "bohemian", "sporty", "vintage", "formal", "preppy")
_CATEGORIES = ("sneaker", "boot", "dress", "jacket", "handbag", "watch", "sandal", "scarf", "ring")
_OCCASIONS = ("the office", "weekend outings", "evening events", "travel", "the gym",
              "summer days", "weddings", "everyday wear")


class StubGroundingService:
    """Offline stand-in for the vision-language service.

    Descriptions are template sentences whose slots are picked from a hash of
    the image reference, so the same image always yields the same text.
    ``failures`` maps item image references to an HTTP status that every
    request for that image fails with. ``calls`` counts requests.
    """

    def __init__(self, model_id: str = "stub-v1", canned: str | None = None,
                 failures: dict[str, int] | None = None):
        self.model_id = model_id
        self.canned = canned
        self.failures = dict(failures or {})
        self.calls = 0
        self._lock = threading.Lock()

    def generate(self, prompt: str, image_ref: str) -> str:
        with self._lock:
            self.calls += 1
        status = self.failures.get(image_ref)
        if status is not None:
            raise ServiceError(f"stub failure for {image_ref}", status)
        if self.canned is not None:
            return self.canned
        h = hashlib.sha256(image_ref.encode("utf-8")).digest()
        pick = lambda seq, b: seq[h[b] % len(seq)]  # noqa: E731
        return (
            f"A {pick(_COLORS, 0)} {pick(_MATERIALS, 1)} {pick(_CATEGORIES, 2)} with a "
            f"{pick(_STYLES, 3)} look, suited for {pick(_OCCASIONS, 4)}."
        )


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def ground_item(item_id: str, image_ref: str, prompt: GroundingPrompt, service,
                cache: SemanticCache | None = None, *, sleep: Callable = time.sleep,
                clock: Callable[[], str] = _utc_now) -> DescriptionRecord:
    """Ground one item image into a description record.

    A cache hit returns the stored record without touching the service.
    Transient failures (5xx, 429, transport errors) are retried with
    exponential backoff, three attempts in total; 4xx responses raise
    ``InvalidImage`` immediately.
    """
    prompt_hash = prompt.hash(service.model_id)
    if cache is not None:
        hit = cache.get(item_id, prompt_hash)
        if hit is not None:
            return hit
    text = None
    for attempt in range(RETRIES):
        try:
            text = service.generate(prompt.render(), image_ref)
            break
        except ServiceError as exc:
            if not exc.transient:
                raise InvalidImage(f"{item_id}: {exc}") from exc
            if attempt == RETRIES - 1:
                raise GroundingUnavailable(
                    f"{item_id}: {RETRIES} attempts failed, last error: {exc}") from exc
            sleep(BACKOFF_BASE * BACKOFF_FACTOR ** attempt)
    if text is None or not str(text).strip():
        raise EmptyGeneration(f"{item_id}: service returned blank text")
    meta = {"image_ref": image_ref}
    if service.model_id == DEFAULT_MODEL_ID:
        meta["note"] = DEFAULT_MODEL_NOTE
    return DescriptionRecord(item_id, str(text).strip(), service.model_id, prompt_hash,
                             clock(), meta)


@dataclass
class CacheBuildResult:
    cache: SemanticCache
    grounded: list[str]
    skipped: list[str]
    failures: list[dict]


def build_semantic_cache(items: Iterable[tuple[str, str]], prompt: GroundingPrompt, service,
                         cache: SemanticCache | None = None, parallelism: int = 1,
                         failures_path=None, *, sleep: Callable = time.sleep,
                         clock: Callable[[], str] = _utc_now) -> CacheBuildResult:
    """Ground every ``(item_id, image_ref)`` not already cached.

    Requests run on up to ``parallelism`` threads; only this thread writes to
    the cache. Per-item failures are collected (and appended to
    ``failures_path`` when given) rather than raised.
    """
    if parallelism < 1:
        raise ConfigError("parallelism must be >= 1")
    cache = SemanticCache() if cache is None else cache
    if failures_path is None and cache.path is not None:
        failures_path = cache.path.with_name(FAILURES_FILENAME)
    prompt_hash = prompt.hash(service.model_id)
    todo, skipped = [], []
    for item_id, image_ref in items:
        if cache.get(item_id, prompt_hash) is not None:
            skipped.append(item_id)
        else:
            todo.append((item_id, image_ref))

    grounded, failures = [], []

    def work(item_id, image_ref):
        return ground_item(item_id, image_ref, prompt, service, None, sleep=sleep, clock=clock)

    results: dict[str, DescriptionRecord | Exception] = {}
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        futures = {pool.submit(work, i, ref): i for i, ref in todo}
        for fut in as_completed(futures):
            try:
                results[futures[fut]] = fut.result()
            except SemrecError as exc:
                results[futures[fut]] = exc

    # commit in input order so the cache file does not depend on thread timing
    for item_id, image_ref in todo:
        res = results[item_id]
        if isinstance(res, Exception):
            failures.append({"item_id": item_id, "image_ref": image_ref,
                             "error": type(res).__name__, "message": str(res)})
        else:
            cache.put(res)
            grounded.append(item_id)
    if failures and failures_path is not None:
        with open(failures_path, "a", encoding="utf-8") as fh:
            for f in failures:
                fh.write(json.dumps(f, sort_keys=True) + "\n")
    return CacheBuildResult(cache, grounded, skipped, failures)


def read_item_images(path) -> list[tuple[str, str]]:
    """Read a TSV of ``item_id<TAB>image_ref`` lines (``#`` comments allowed)."""
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 2:
            raise ParseError(lineno, "expected item_id<TAB>image_ref")
        if cols == ["item_id", "image_ref"]:
            continue
        out.append((cols[0].strip(), cols[1].strip()))
    return out
