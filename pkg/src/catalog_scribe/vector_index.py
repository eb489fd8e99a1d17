"""Embedding providers and a flat, exhaustively-scanned vector index.

The index stores L2-normalized vectors, so nearest-by-L2 equals
nearest-by-cosine; search is a brute-force scan, which at catalog scale
(~100K names) is fast and exactly reproducible.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Protocol, Sequence

import numpy as np

from .catalog import ColumnAsset, ColumnKey
from .errors import InputError, ProtocolError, ProviderError, SnapshotError
from .httputil import post_json
from .text_prep import name_to_text

INDEX_VERSION = 1
UNIT_NORM_TOL = 1e-6
DEFAULT_TOP_K = 100

EmbedTextMode = Literal["tokens", "raw"]


class EmbeddingProvider(Protocol):
    provider_id: str
    dimension: int
    kind: str

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


def _normalize_rows(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    if np.any(norms == 0.0) or not np.all(np.isfinite(vectors)):
        raise ValueError("cannot normalize zero or non-finite vectors")
    return vectors / norms


class LocalHashEmbedder:
    """Deterministic, model-free embedder for tests and offline runs.

    Each word token is hashed (with a fixed seed) into a pseudo-random unit
    vector; a text embeds as the normalized mean of its token vectors. The
    geometry is stable across runs and sensitive to shared tokens, which is
    all the retrieval contracts need.
    """

    kind = "local_deterministic"

    def __init__(self, dimension: int = 64, seed: int = 0):
        if dimension <= 0:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self.seed = seed
        self.provider_id = f"local-hash-d{dimension}-s{seed}"
        self._token_cache: dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        cached = self._token_cache.get(token)
        if cached is None:
            digest = hashlib.sha256(f"{self.seed}:{token}".encode("utf-8")).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
            vector = rng.standard_normal(self.dimension)
            cached = vector / np.linalg.norm(vector)
            self._token_cache[token] = cached
        return cached

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.empty((len(texts), self.dimension), dtype=np.float64)
        for i, text in enumerate(texts):
            tokens = text.lower().split()
            if not tokens:
                raise ValueError("cannot embed an empty text")
            mean = np.mean([self._token_vector(t) for t in tokens], axis=0)
            norm = np.linalg.norm(mean)
            if norm < 1e-12:
                # Token vectors cancelled out; fall back to hashing the whole text.
                mean, norm = self._token_vector("\x00" + text), 1.0
            out[i] = mean / norm
        return out


class RemoteHttpEmbedder:
    """Embedding client for an OpenAI-compatible embeddings endpoint.

    Request: {"model": ..., "input": [...]}; response: {"data": [{"embedding": [...]}]}.
    Vectors are re-normalized locally after receipt.
    """

    kind = "remote_http"

    def __init__(
        self,
        dimension: int,
        base_url: str | None = None,
        api_key: str | None = None,
        model: str | None = None,
        timeout: float = 30.0,
        max_attempts: int = 3,
    ):
        self.base_url = (base_url or os.getenv("EMBED_API_BASE", "")).rstrip("/")
        self.api_key = api_key if api_key is not None else os.getenv("EMBED_API_KEY", "")
        self.model = model or os.getenv("EMBED_MODEL", "")
        if not self.base_url or not self.model:
            raise InputError(
                "remote embedder needs EMBED_API_BASE and EMBED_MODEL "
                "(or explicit base_url/model arguments)"
            )
        self.dimension = dimension
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.provider_id = f"remote-{self.model}-d{dimension}"

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        for text in texts:
            if not text.strip():
                raise ValueError("cannot embed an empty text")
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = post_json(
            f"{self.base_url}/embeddings",
            {"model": self.model, "input": list(texts)},
            headers=headers,
            timeout=self.timeout,
            max_attempts=self.max_attempts,
        )
        data = body.get("data")
        if not isinstance(data, list) or len(data) != len(texts):
            raise ProtocolError("embedding response missing data for every input")
        vectors = np.asarray([row.get("embedding") for row in data], dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[1] != self.dimension:
            raise ProtocolError(
                f"embedding dimension {vectors.shape[-1] if vectors.ndim == 2 else '?'} "
                f"does not match provider declaration {self.dimension}"
            )
        return _normalize_rows(vectors)


@dataclass(frozen=True)
class SearchHit:
    ref: ColumnKey
    distance: float
    rank: int


@dataclass
class FlatIndex:
    dimension: int
    provider_id: str
    vectors: np.ndarray  # (n, dimension), unit rows
    refs: list[ColumnKey]

    def __post_init__(self) -> None:
        if self.vectors.size and self.vectors.shape != (len(self.refs), self.dimension):
            raise ValueError("vector block shape disagrees with refs/dimension")
        if self.vectors.size:
            norms = np.linalg.norm(self.vectors, axis=1)
            if np.max(np.abs(norms - 1.0)) > UNIT_NORM_TOL:
                raise ValueError("index vectors must be unit-norm")

    def __len__(self) -> int:
        return len(self.refs)


def embedding_text(column: ColumnAsset, mode: EmbedTextMode = "tokens") -> str:
    """Text actually fed to the embedder for one column."""
    if mode == "raw":
        return column.column_name
    return name_to_text(column.column_name)


def is_indexable(column: ColumnAsset) -> bool:
    """Only columns that can serve as few-shot answers are indexed."""
    return bool((column.description or "").strip() or (column.comment or "").strip())


def build_index(
    columns: Sequence[ColumnAsset],
    provider: EmbeddingProvider,
    text_mode: EmbedTextMode = "tokens",
    batch_size: int = 256,
) -> FlatIndex:
    eligible = [c for c in columns if is_indexable(c)]
    vectors = np.empty((len(eligible), provider.dimension), dtype=np.float64)
    done = 0
    try:
        for start in range(0, len(eligible), batch_size):
            batch = eligible[start : start + batch_size]
            vectors[start : start + len(batch)] = provider.embed(
                [embedding_text(c, text_mode) for c in batch]
            )
            done += len(batch)
    except ProviderError as exc:
        raise ProviderError(
            f"index build aborted after {done}/{len(eligible)} columns: {exc}",
            attempts=exc.attempts,
        ) from exc
    return FlatIndex(
        dimension=provider.dimension,
        provider_id=provider.provider_id,
        vectors=vectors,
        refs=[c.key for c in eligible],
    )


def search(index: FlatIndex, query_vector: np.ndarray, k: int = DEFAULT_TOP_K) -> list[SearchHit]:
    """Exhaustive scan: the k smallest L2 distances, ties by insertion order."""
    if k < 1:
        raise ValueError("k must be >= 1")
    query = np.asarray(query_vector, dtype=np.float64).reshape(-1)
    if query.shape[0] != index.dimension:
        raise InputError(f"query dimension {query.shape[0]} != index dimension {index.dimension}")
    if not len(index):
        return []
    diff = index.vectors - query
    distances = np.sqrt(np.sum(diff * diff, axis=1))
    order = np.argsort(distances, kind="stable")[:k]
    return [
        SearchHit(ref=index.refs[i], distance=float(distances[i]), rank=rank)
        for rank, i in enumerate(order, start=1)
    ]


def save_index(index: FlatIndex, path: str | Path) -> None:
    path = Path(path)
    header = {
        "kind": "flat_index",
        "format_version": INDEX_VERSION,
        "dimension": index.dimension,
        "provider_id": index.provider_id,
        "count": len(index),
    }
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for ref, vector in zip(index.refs, index.vectors):
            record = {"ref": ref.as_str(), "vector": vector.tolist()}
            fh.write(json.dumps(record) + "\n")


def load_index(path: str | Path, provider: EmbeddingProvider | None = None) -> FlatIndex:
    """Load an index snapshot, refusing provider/dimension mismatches."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"index file not found: {path}")
    with path.open(encoding="utf-8") as fh:
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise SnapshotError(f"{path}: index header is not valid JSON") from exc
        if header.get("kind") != "flat_index":
            raise SnapshotError(f"{path}: not an index snapshot")
        if header.get("format_version") != INDEX_VERSION:
            raise SnapshotError(
                f"{path}: index version {header.get('format_version')} "
                f"unsupported (expected {INDEX_VERSION})"
            )
        dimension = int(header["dimension"])
        refs: list[ColumnKey] = []
        rows: list[list[float]] = []
        for line_num, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                refs.append(ColumnKey.from_str(record["ref"]))
                rows.append(record["vector"])
            except (json.JSONDecodeError, KeyError, InputError) as exc:
                raise SnapshotError(f"{path}:{line_num}: corrupt index record") from exc
    if len(refs) != header.get("count"):
        raise SnapshotError(f"{path}: entry count {len(refs)} disagrees with header (truncated file?)")
    vectors = (
        np.asarray(rows, dtype=np.float64)
        if rows
        else np.empty((0, dimension), dtype=np.float64)
    )
    index = FlatIndex(
        dimension=dimension,
        provider_id=str(header["provider_id"]),
        vectors=vectors,
        refs=refs,
    )
    if provider is not None:
        if provider.dimension != index.dimension:
            raise InputError(
                f"index dimension {index.dimension} conflicts with provider dimension {provider.dimension}"
            )
        if provider.provider_id != index.provider_id:
            raise InputError(
                f"index built with provider {index.provider_id!r}, "
                f"but {provider.provider_id!r} was requested"
            )
    return index
