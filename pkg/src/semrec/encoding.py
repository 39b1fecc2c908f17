"""Embedding tables, the SEMV binary vector format and the text-encoder client."""

from __future__ import annotations

import hashlib
import os
import re
import struct
import time
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BadMagic,
    ConfigError,
    DimMismatch,
    EncodingUnavailable,
    IndexMismatch,
    ServiceError,
    TruncatedFile,
)

NORM_EPS = 1e-12
MAGIC = b"SEMV"
VERSION = 1
_HEADER = struct.Struct("<4sIQI")  # magic, version, count, dim

EMBEDDING_URL_ENV = "SEMREC_EMBEDDING_URL"
EMBEDDING_TOKEN_ENV = "SEMREC_EMBEDDING_TOKEN"


def normalize(v):
    """L2-normalize ``v``; vectors with norm <= 1e-12 come back unchanged (zero)."""
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n > NORM_EPS:
        return v / n
    return v.copy()


def normalize_rows(M) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalize ``M``; returns the normalized copy and a mask of degenerate rows."""
    M = np.asarray(M, dtype=np.float64)
    norms = np.linalg.norm(M, axis=1)
    degenerate = ~(norms > NORM_EPS)
    out = np.zeros_like(M)
    ok = ~degenerate
    out[ok] = M[ok] / norms[ok, None]
    return out, degenerate


class EmbeddingTable:
    """Immutable id-indexed matrix of item vectors.

    ``matrix`` keeps the raw rows; ``norm_matrix`` is the row-normalized float64
    copy used for scoring. Rows whose raw vector is zero stay zero and are
    listed in ``degenerate``.
    """

    def __init__(self, ids: Sequence[str], matrix):
        ids = tuple(str(i) for i in ids)
        matrix = np.array(matrix, copy=True)
        if matrix.ndim != 2:
            raise DimMismatch(f"expected a 2-D matrix, got shape {matrix.shape}")
        if not np.issubdtype(matrix.dtype, np.floating):
            matrix = matrix.astype(np.float64)
        if len(ids) != matrix.shape[0]:
            raise IndexMismatch(f"{len(ids)} ids for {matrix.shape[0]} rows")
        if len(set(ids)) != len(ids):
            raise IndexMismatch("duplicate item ids")
        norm, degenerate = normalize_rows(matrix)
        matrix.setflags(write=False)
        norm.setflags(write=False)
        self.ids = ids
        self.matrix = matrix
        self.norm_matrix = norm
        self.degenerate_mask = degenerate
        self.degenerate_mask.setflags(write=False)
        self.degenerate = frozenset(i for i, bad in zip(ids, degenerate) if bad)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, item_id) -> bool:
        return item_id in self.index

    def __repr__(self) -> str:
        return f"EmbeddingTable(n={len(self)}, dim={self.dim}, degenerate={len(self.degenerate)})"

    @cached_property
    def index(self) -> dict[str, int]:
        return {item: row for row, item in enumerate(self.ids)}

    @cached_property
    def tie_rank(self) -> np.ndarray:
        """Position of each row's id in ascending id order (tie-break key)."""
        order = sorted(range(len(self.ids)), key=self.ids.__getitem__)
        rank = np.empty(len(self.ids), dtype=np.int64)
        rank[order] = np.arange(len(self.ids))
        rank.setflags(write=False)
        return rank

    def rows_of(self, ids: Iterable[str]) -> np.ndarray:
        return np.array([self.index[i] for i in ids], dtype=np.int64)

    def vector(self, item_id: str, normalized: bool = True) -> np.ndarray:
        row = self.index[item_id]
        return (self.norm_matrix if normalized else self.matrix)[row]

    def subset(self, ids: Iterable[str]) -> "EmbeddingTable":
        ids = list(ids)
        return EmbeddingTable(ids, self.matrix[self.rows_of(ids)])

    def with_matrix(self, matrix) -> "EmbeddingTable":
        return EmbeddingTable(self.ids, matrix)

    def equals(self, other: "EmbeddingTable") -> bool:
        return (
            self.ids == other.ids
            and self.matrix.dtype == other.matrix.dtype
            and np.array_equal(self.matrix, other.matrix)
        )


@dataclass(frozen=True)
class ModalityBundle:
    """Text and vision tables for the same catalog; coverage may differ."""

    text_table: EmbeddingTable
    vision_table: EmbeddingTable

    @cached_property
    def shared_ids(self) -> list[str]:
        vis = self.vision_table.index
        return [i for i in self.text_table.ids if i in vis]

    @cached_property
    def all_ids(self) -> list[str]:
        seen = dict.fromkeys(self.text_table.ids)
        seen.update(dict.fromkeys(self.vision_table.ids))
        return list(seen)


# -- binary format ----------------------------------------------------------

def index_path_for(vector_path) -> Path:
    return Path(vector_path).with_suffix(".ids")


def write_vectors(path, matrix) -> None:
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    if matrix.ndim != 2:
        raise DimMismatch("write_vectors expects a 2-D matrix")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, matrix.shape[0], matrix.shape[1]))
        fh.write(matrix.tobytes(order="C"))


def read_vectors(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise BadMagic(f"{path}: bad magic {data[:4]!r}")
    if len(data) < _HEADER.size:
        raise TruncatedFile(f"{path}: header truncated")
    _, version, count, dim = _HEADER.unpack_from(data)
    if version != VERSION:
        raise BadMagic(f"{path}: unsupported version {version}")
    need = _HEADER.size + count * dim * 4
    if len(data) < need:
        raise TruncatedFile(f"{path}: expected {need} bytes, found {len(data)}")
    body = np.frombuffer(data, dtype="<f4", count=count * dim, offset=_HEADER.size)
    return body.reshape(count, dim).astype(np.float32)


def save_embedding_table(table: EmbeddingTable, vector_path, index_path=None) -> None:
    index_path = index_path_for(vector_path) if index_path is None else index_path
    write_vectors(vector_path, table.matrix)
    Path(index_path).write_text("".join(f"{i}\n" for i in table.ids), encoding="utf-8")


def load_embedding_table(vector_path, index_path=None) -> EmbeddingTable:
    """Read a SEMV vector file and its id sidecar (one id per line, line k = row k)."""
    index_path = index_path_for(vector_path) if index_path is None else index_path
    matrix = read_vectors(vector_path)
    ids = [line for line in Path(index_path).read_text(encoding="utf-8").splitlines() if line]
    if len(ids) != matrix.shape[0]:
        raise IndexMismatch(f"{index_path}: {len(ids)} ids for {matrix.shape[0]} rows")
    return EmbeddingTable(ids, matrix)


# -- encoder services -------------------------------------------------------

class StubEncoder:
    """Deterministic offline text encoder.

    Each lower-cased token is mapped to a Gaussian vector seeded from its
    SHA-256 digest; a text embeds as the normalized sum of its token vectors,
    so texts that share words land close together.
    """

    model_id = "stub-encoder-v1"

    def __init__(self, dim: int = 384):
        self.dim = dim
        self.calls = 0
        self._cache: dict[str, np.ndarray] = {}

    def _token(self, tok: str) -> np.ndarray:
        vec = self._cache.get(tok)
        if vec is None:
            seed = int.from_bytes(hashlib.sha256(tok.encode("utf-8")).digest()[:8], "little")
            vec = np.random.default_rng(seed).standard_normal(self.dim)
            self._cache[tok] = vec
        return vec

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        self.calls += 1
        out = []
        for text in texts:
            acc = np.zeros(self.dim)
            for tok in re.findall(r"[a-z0-9]+", text.lower()):
                acc += self._token(tok)
            out.append(normalize(acc).astype(np.float32).tolist())
        return out


class HttpEncoder:
    """Client for ``POST {texts: [...]} -> {vectors: [[...]]}``."""

    def __init__(self, url: str, token: str | None = None, timeout: float = 60.0, session=None):
        import requests

        self.url = url
        self.token = token
        self.timeout = timeout
        self.session = session or requests.Session()

    @classmethod
    def from_env(cls) -> "HttpEncoder":
        url = os.environ.get(EMBEDDING_URL_ENV)
        if not url:
            raise ConfigError(f"{EMBEDDING_URL_ENV} is not set")
        return cls(url, os.environ.get(EMBEDDING_TOKEN_ENV))

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        import requests

        headers = {"Authorization": f"Bearer {self.token}"} if self.token else {}
        try:
            resp = self.session.post(self.url, json={"texts": list(texts)},
                                     headers=headers, timeout=self.timeout)
        except requests.RequestException as exc:
            raise ServiceError(str(exc)) from exc
        if resp.status_code >= 400:
            raise ServiceError(f"encoder returned HTTP {resp.status_code}", resp.status_code)
        try:
            vectors = resp.json()["vectors"]
        except (ValueError, KeyError, TypeError) as exc:
            raise ServiceError(f"malformed encoder response: {exc}") from exc
        return vectors


def encode_descriptions(cache, service, batch_size: int = 64, retries: int = 3,
                        backoff: float = 1.0, sleep=None) -> EmbeddingTable:
    """Embed every description in a semantic cache into one table row per item.

    Items are encoded in ascending id order. Records sharing an item id under
    different prompts resolve to the most recent one.
    """
    sleep = time.sleep if sleep is None else sleep
    records = cache.latest_by_item()
    if not records:
        raise ConfigError("semantic cache is empty")
    ids = sorted(records)
    texts = [records[i].description for i in ids]
    rows: list[list[float]] = []
    for start in range(0, len(texts), batch_size):
        chunk = texts[start:start + batch_size]
        for attempt in range(retries):
            try:
                vectors = service.embed(chunk)
                break
            except ServiceError as exc:
                if not exc.transient or attempt == retries - 1:
                    raise EncodingUnavailable(str(exc)) from exc
                sleep(backoff * 2 ** attempt)
        if len(vectors) != len(chunk):
            raise DimMismatch(f"encoder returned {len(vectors)} vectors for {len(chunk)} texts")
        rows.extend(vectors)
    dims = {len(r) for r in rows}
    if len(dims) != 1:
        raise DimMismatch(f"encoder rows disagree in length: {sorted(dims)}")
    return EmbeddingTable(ids, np.asarray(rows, dtype=np.float32))
