"""Minimal retrieval layer: chunking, embedding, exact top-k cosine search.

Tokens are whitespace-delimited words. The index is an exact cosine
scan, never an approximate structure; corpora here are small and
determinism matters more than speed. Two embedder backends exist: a
deterministic hashing embedder for tests and offline runs, and a client
for a remote JSON embedding endpoint.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np
import requests

__all__ = [
    "DocumentChunk",
    "EmbeddingVector",
    "RetrievalResult",
    "Embedder",
    "HashingEmbedder",
    "RemoteEmbedder",
    "RemoteEmbedderError",
    "VectorIndex",
    "chunk_document",
    "index_corpus",
    "retrieve",
    "load_corpus_dir",
]

DEFAULT_CHUNK_SIZE = 512
DEFAULT_OVERLAP = 64
DEFAULT_DIM = 768
PAGE_TOKEN_ESTIMATE = 350  # used when a document has no form-feed page breaks


@dataclass(frozen=True)
class DocumentChunk:
    doc_id: str
    page_hint: int
    text: str
    ordinal: int

    @property
    def content_hash(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class RetrievalResult:
    chunks: tuple[tuple[DocumentChunk, float], ...]
    query_text: str
    k: int

    def __post_init__(self):
        scores = [s for _, s in self.chunks]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ValueError("retrieval scores must be nonincreasing")
        if len(self.chunks) > self.k:
            raise ValueError("more chunks than k")

    @property
    def page_hints(self) -> list[int]:
        return [c.page_hint for c, _ in self.chunks]

    def to_json(self) -> dict:
        return {
            "query": self.query_text,
            "k": self.k,
            "pages": self.page_hints,
            "chunks": [
                {"doc_id": c.doc_id, "ordinal": c.ordinal, "score": s}
                for c, s in self.chunks
            ],
        }


def chunk_document(
    text: str,
    doc_id: str = "doc",
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    overlap: int = DEFAULT_OVERLAP,
) -> list[DocumentChunk]:
    """Sliding-window chunks of whitespace tokens with the given overlap.

    Stride is chunk_size - overlap; the final partial chunk is kept.
    Page hints come from form-feed breaks when present, otherwise from a
    fixed tokens-per-page estimate.
    """
    if not chunk_size > overlap >= 0:
        raise ValueError("require chunk_size > overlap >= 0")
    tokens = text.split()
    if not tokens:
        return []

    # Map token index -> page, from form feeds if the document has them.
    # Form feeds are whitespace, so splitting on them first and then on
    # general whitespace yields the same token sequence as text.split().
    if "\f" in text:
        page_of_token = []
        for page, section in enumerate(text.split("\f")):
            page_of_token.extend([page] * len(section.split()))
    else:
        page_of_token = [i // PAGE_TOKEN_ESTIMATE for i in range(len(tokens))]

    stride = chunk_size - overlap
    chunks = []
    start = 0
    ordinal = 0
    while start < len(tokens):
        window = tokens[start : start + chunk_size]
        chunks.append(
            DocumentChunk(
                doc_id=doc_id,
                page_hint=page_of_token[start],
                text=" ".join(window),
                ordinal=ordinal,
            )
        )
        if start + chunk_size >= len(tokens):
            break
        start += stride
        ordinal += 1
    return chunks


class Embedder(Protocol):
    dim: int

    def embed(self, text: str) -> EmbeddingVector: ...


def _stable_bucket(token: str, dim: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % dim


class HashingEmbedder:
    """Deterministic test embedder: token unigrams and bigrams hashed into
    a fixed-dimension count vector, L2-normalized."""

    def __init__(self, dim: int = DEFAULT_DIM):
        self.dim = dim
        self.calls = 0

    def embed(self, text: str) -> EmbeddingVector:
        self.calls += 1
        vec = [0.0] * self.dim
        tokens = text.lower().split()
        for tok in tokens:
            vec[_stable_bucket(tok, self.dim)] += 1.0
        for a, b in zip(tokens, tokens[1:]):
            vec[_stable_bucket(a + " " + b, self.dim)] += 1.0
        norm = math.sqrt(sum(v * v for v in vec))
        if norm > 0:
            vec = [v / norm for v in vec]
        return EmbeddingVector(tuple(vec))


class RemoteEmbedderError(RuntimeError):
    pass


class RemoteEmbedder:
    """Client for a JSON embedding endpoint (model name configurable).

    POSTs {"model": ..., "input": [text]} and reads
    response["data"][0]["embedding"]. Retries transport errors and 5xx
    responses up to the retry budget.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        dim: int = DEFAULT_DIM,
        timeout: float = 30.0,
        retries: int = 2,
        backoff: float = 0.5,
    ):
        self.endpoint = endpoint
        self.model = model
        self.dim = dim
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._session = requests.Session()

    def embed(self, text: str) -> EmbeddingVector:
        payload = {"model": self.model, "input": [text]}
        last_error = None
        for attempt in range(self.retries + 1):
            try:
                resp = self._session.post(self.endpoint, json=payload, timeout=self.timeout)
                if resp.status_code >= 500:
                    last_error = RemoteEmbedderError(f"server error {resp.status_code}")
                elif resp.status_code != 200:
                    raise RemoteEmbedderError(f"embedding request failed: {resp.status_code}")
                else:
                    values = resp.json()["data"][0]["embedding"]
                    if len(values) != self.dim:
                        raise RemoteEmbedderError(
                            f"embedding dim {len(values)} != configured {self.dim}"
                        )
                    return EmbeddingVector(tuple(float(v) for v in values))
            except (requests.RequestException, KeyError, ValueError) as exc:
                last_error = RemoteEmbedderError(f"embedding transport failure: {exc}")
            if attempt < self.retries and self.backoff:
                time.sleep(self.backoff * (attempt + 1))
        raise last_error  # type: ignore[misc]


@dataclass
class VectorIndex:
    """Immutable-after-build mapping of chunks to embeddings."""

    dim: int
    chunks: list[DocumentChunk] = field(default_factory=list)
    embeddings: list[EmbeddingVector] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.chunks)

    @property
    def content_hashes(self) -> set[str]:
        return {c.content_hash for c in self.chunks}

    def matrix(self) -> np.ndarray:
        return np.array([e.values for e in self.embeddings], dtype=float)

    def save(self, path: str | Path) -> None:
        obj = {
            "kind": "vector_index",
            "schema_version": 1,
            "dim": self.dim,
            "chunks": [
                {
                    "doc_id": c.doc_id,
                    "page_hint": c.page_hint,
                    "text": c.text,
                    "ordinal": c.ordinal,
                    "content_hash": c.content_hash,
                }
                for c in self.chunks
            ],
            "embeddings": [list(e.values) for e in self.embeddings],
        }
        Path(path).write_text(json.dumps(obj), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "VectorIndex":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        index = cls(dim=obj["dim"])
        for c, e in zip(obj["chunks"], obj["embeddings"]):
            chunk = DocumentChunk(
                doc_id=c["doc_id"],
                page_hint=c["page_hint"],
                text=c["text"],
                ordinal=c["ordinal"],
            )
            if chunk.content_hash != c["content_hash"]:
                raise ValueError(f"content hash mismatch for {c['doc_id']}#{c['ordinal']}")
            index.chunks.append(chunk)
            index.embeddings.append(EmbeddingVector(tuple(e)))
        return index


def index_corpus(
    chunks: list[DocumentChunk],
    embedder: Embedder,
    existing: VectorIndex | None = None,
) -> VectorIndex:
    """Embed chunks into a cosine index; re-indexing is idempotent.

    Chunks whose content hash is already present in `existing` are reused
    without new embedding calls. Embedder failures are collected and
    reported per chunk with their doc ids.
    """
    index = VectorIndex(dim=embedder.dim)
    known: dict[str, tuple[DocumentChunk, EmbeddingVector]] = {}
    if existing is not None:
        if existing.dim != embedder.dim:
            raise ValueError("existing index dim does not match the embedder")
        for c, e in zip(existing.chunks, existing.embeddings):
            known[c.content_hash] = (c, e)
    failures = []
    for chunk in chunks:
        cached = known.get(chunk.content_hash)
        if cached is not None:
            index.chunks.append(chunk)
            index.embeddings.append(cached[1])
            continue
        try:
            vec = embedder.embed(chunk.text)
        except Exception as exc:
            failures.append(f"{chunk.doc_id}#{chunk.ordinal}: {exc}")
            continue
        if vec.dim != index.dim:
            failures.append(f"{chunk.doc_id}#{chunk.ordinal}: dim {vec.dim} != {index.dim}")
            continue
        index.chunks.append(chunk)
        index.embeddings.append(vec)
    if failures:
        raise RuntimeError("embedding failures: " + "; ".join(failures))
    return index


SCORE_DECIMALS = 12


def retrieve(index: VectorIndex, query: str, embedder: Embedder, k: int = 5) -> RetrievalResult:
    """Exact top-k cosine retrieval with a deterministic tie-break.

    Scores every chunk (no approximate shortcuts). Scores are quantized
    to SCORE_DECIMALS places so that mathematically tied chunks stay
    tied regardless of float summation order, then ties are broken by
    (doc_id, ordinal).
    """
    if len(index) == 0:
        raise ValueError("cannot retrieve from an empty index")
    if k < 1:
        raise ValueError("k must be at least 1")
    qvec = np.asarray(embedder.embed(query).values, dtype=float)
    matrix = index.matrix()
    qnorm = float(np.linalg.norm(qvec))
    norms = np.linalg.norm(matrix, axis=1)
    dots = matrix @ qvec
    denom = norms * qnorm
    scores = np.where(denom > 0, dots / np.where(denom > 0, denom, 1.0), 0.0)
    scores = np.round(scores, SCORE_DECIMALS)
    order = sorted(
        range(len(index)),
        key=lambda i: (-scores[i], index.chunks[i].doc_id, index.chunks[i].ordinal),
    )
    top = order[:k]
    return RetrievalResult(
        chunks=tuple((index.chunks[i], float(scores[i])) for i in top),
        query_text=query,
        k=k,
    )


def load_corpus_dir(
    path: str | Path,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    overlap: int = DEFAULT_OVERLAP,
) -> list[DocumentChunk]:
    """Chunk every .txt file in a directory, sorted by filename."""
    chunks = []
    for file in sorted(Path(path).glob("*.txt")):
        text = file.read_text(encoding="utf-8")
        chunks.extend(chunk_document(text, doc_id=file.stem, chunk_size=chunk_size, overlap=overlap))
    return chunks
