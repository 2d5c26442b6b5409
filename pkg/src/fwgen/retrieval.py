"""Chunking, lexical and dense indexing, and hybrid retrieval.

The index corpus is split into chunks of at most ``chunk_size`` word
tokens. Lexical scoring is Okapi BM25 computed from scratch; dense scoring
is exact cosine over unit-normalized embeddings. Hybrid retrieval min-max
normalizes each score list and fuses with fixed weights; ties break on
ascending chunk id so rankings are reproducible.
"""

from __future__ import annotations

import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .gateway import LlmGateway
from .textutil import tokenize

logger = logging.getLogger(__name__)

INDEX_FORMAT = "fwgen-index"
INDEX_VERSION = 1


@dataclass(frozen=True)
class Chunk:
    chunk_id: int
    paper_id: str
    text: str
    token_count: int


@dataclass(frozen=True)
class RetrievedChunk:
    chunk: Chunk
    lexical_score: float
    dense_score: float
    fused_score: float
    rank: int


def chunk_text(text: str, chunk_size: int, paper_id: str = "", start_id: int = 0) -> list[Chunk]:
    """Split text into chunks of at most ``chunk_size`` word tokens.

    Chunks are substrings of the original text cut at token boundaries, so
    punctuation and spacing inside a chunk survive verbatim.
    """
    if chunk_size < 1:
        raise ValueError("chunk_size must be at least 1")
    spans = [(m.start(), m.end()) for m in _token_spans(text)]
    chunks = []
    for i in range(0, len(spans), chunk_size):
        group = spans[i : i + chunk_size]
        piece = text[group[0][0] : group[-1][1]]
        chunks.append(
            Chunk(
                chunk_id=start_id + len(chunks),
                paper_id=paper_id,
                text=piece,
                token_count=len(group),
            )
        )
    return chunks


def _token_spans(text: str):
    return re.finditer(r"\w+", text, re.UNICODE)


@dataclass(frozen=True)
class Bm25Index:
    """Okapi BM25 postings over a chunk collection.

    ``postings`` maps each term to ``((chunk_id, term_frequency), ...)``.
    """

    postings: dict[str, tuple[tuple[int, int], ...]]
    doc_lengths: dict[int, int]
    avg_doc_length: float
    doc_count: int
    k1: float = 1.2
    b: float = 0.75


def build_bm25(chunks: Sequence[Chunk], k1: float = 1.2, b: float = 0.75) -> Bm25Index:
    if not chunks:
        raise ValueError("cannot build a BM25 index over zero chunks")
    postings: dict[str, list[tuple[int, int]]] = {}
    doc_lengths = {}
    for chunk in chunks:
        tokens = tokenize(chunk.text)
        doc_lengths[chunk.chunk_id] = len(tokens)
        for term, tf in Counter(tokens).items():
            postings.setdefault(term, []).append((chunk.chunk_id, tf))
    avg = sum(doc_lengths.values()) / len(doc_lengths)
    frozen = {term: tuple(rows) for term, rows in postings.items()}
    return Bm25Index(
        postings=frozen,
        doc_lengths=doc_lengths,
        avg_doc_length=avg,
        doc_count=len(chunks),
        k1=k1,
        b=b,
    )


def bm25_idf(index: Bm25Index, term: str) -> float:
    df = len(index.postings.get(term, ()))
    return math.log(1.0 + (index.doc_count - df + 0.5) / (df + 0.5))


def bm25_score(index: Bm25Index, query_tokens: Sequence[str], chunk_id: int) -> float:
    """Okapi BM25 score of one chunk for a tokenized query.

    Repeated query terms contribute once per occurrence. A chunk sharing no
    terms with the query scores zero.
    """
    if chunk_id not in index.doc_lengths:
        raise KeyError(f"unknown chunk id {chunk_id}")
    dl = index.doc_lengths[chunk_id]
    if index.avg_doc_length == 0:
        return 0.0
    norm = index.k1 * (1.0 - index.b + index.b * dl / index.avg_doc_length)
    score = 0.0
    for term in query_tokens:
        rows = index.postings.get(term)
        if not rows:
            continue
        tf = 0
        for cid, freq in rows:
            if cid == chunk_id:
                tf = freq
                break
        if tf == 0:
            continue
        score += bm25_idf(index, term) * tf * (index.k1 + 1.0) / (tf + norm)
    return score


def bm25_scores(index: Bm25Index, query: str, chunk_ids: Sequence[int]) -> list[float]:
    tokens = tokenize(query)
    return [bm25_score(index, tokens, cid) for cid in chunk_ids]


@dataclass(frozen=True)
class DenseIndex:
    """Unit-normalized embedding per chunk; cosine is a plain dot product."""

    vectors: dict[int, tuple[float, ...]]
    dimension: int


def build_dense(chunks: Sequence[Chunk], gateway: LlmGateway) -> DenseIndex:
    if not chunks:
        raise ValueError("cannot build a dense index over zero chunks")
    raw = gateway.embed([chunk.text for chunk in chunks])
    vectors = {}
    for chunk, vec in zip(chunks, raw):
        vectors[chunk.chunk_id] = _unit(vec)
    dims = {len(v) for v in vectors.values()}
    if len(dims) != 1:
        raise ValueError(f"inconsistent embedding dimensions: {sorted(dims)}")
    return DenseIndex(vectors=vectors, dimension=dims.pop())


def _unit(vec: Sequence[float]) -> tuple[float, ...]:
    arr = np.asarray(vec, dtype=np.float64)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise ValueError("zero-norm embedding cannot be unit-normalized")
    return tuple((arr / norm).tolist())


def dense_scores(index: DenseIndex, query_vector: Sequence[float], chunk_ids: Sequence[int]) -> list[float]:
    query = np.asarray(_unit(query_vector), dtype=np.float64)
    out = []
    for cid in chunk_ids:
        if cid not in index.vectors:
            raise KeyError(f"unknown chunk id {cid}")
        out.append(float(np.dot(query, np.asarray(index.vectors[cid], dtype=np.float64))))
    return out


def min_max_normalize(scores: Sequence[float]) -> list[float]:
    """Rescale scores to [0, 1]; a degenerate range maps everything to 0."""
    if not scores:
        return []
    lo, hi = min(scores), max(scores)
    if hi == lo:
        return [0.0] * len(scores)
    return [(s - lo) / (hi - lo) for s in scores]


def hybrid_retrieve(
    query: str,
    chunks: Sequence[Chunk],
    bm25: Bm25Index,
    dense: DenseIndex,
    gateway: LlmGateway,
    k: int = 3,
    weight_lexical: float = 0.5,
    weight_dense: float = 0.5,
) -> list[RetrievedChunk]:
    """Top-k chunks under weighted min-max score fusion.

    Both score lists are min-max normalized over the full collection, then
    fused as ``w_lex * lexical + w_dense * dense``. Weights must sum to 1.
    Ties in the fused score break on ascending chunk id. Stored scores are
    the raw (pre-normalization) values.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if abs(weight_lexical + weight_dense - 1.0) > 1e-9:
        raise ValueError("retrieval weights must sum to 1")
    if weight_lexical < 0 or weight_dense < 0:
        raise ValueError("retrieval weights must be non-negative")
    ids = [chunk.chunk_id for chunk in chunks]
    if set(ids) != set(bm25.doc_lengths) or set(ids) != set(dense.vectors):
        raise ValueError("chunks and indexes cover different chunk ids")

    lexical = bm25_scores(bm25, query, ids)
    query_vec = gateway.embed([query])[0]
    cosine = dense_scores(dense, query_vec, ids)

    lex_norm = min_max_normalize(lexical)
    dense_norm = min_max_normalize(cosine)
    fused = [weight_lexical * l + weight_dense * d for l, d in zip(lex_norm, dense_norm)]

    order = sorted(range(len(chunks)), key=lambda i: (-fused[i], ids[i]))
    results = []
    for rank, i in enumerate(order[:k], start=1):
        results.append(
            RetrievedChunk(
                chunk=chunks[i],
                lexical_score=lexical[i],
                dense_score=cosine[i],
                fused_score=fused[i],
                rank=rank,
            )
        )
    return results


def save_index(
    path: str | Path,
    chunks: Sequence[Chunk],
    bm25: Bm25Index,
    dense: DenseIndex,
) -> None:
    """Persist chunks and both indexes as one JSON document."""
    payload = {
        "format": INDEX_FORMAT,
        "version": INDEX_VERSION,
        "chunks": [
            {
                "chunk_id": c.chunk_id,
                "paper_id": c.paper_id,
                "text": c.text,
                "token_count": c.token_count,
            }
            for c in chunks
        ],
        "bm25": {
            "postings": {term: [list(row) for row in rows] for term, rows in bm25.postings.items()},
            "doc_lengths": {str(cid): dl for cid, dl in bm25.doc_lengths.items()},
            "avg_doc_length": bm25.avg_doc_length,
            "doc_count": bm25.doc_count,
            "k1": bm25.k1,
            "b": bm25.b,
        },
        "dense": {
            "vectors": {str(cid): list(vec) for cid, vec in dense.vectors.items()},
            "dimension": dense.dimension,
        },
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, ensure_ascii=True, sort_keys=True), encoding="utf-8")


def load_index(path: str | Path) -> tuple[list[Chunk], Bm25Index, DenseIndex]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if raw.get("format") != INDEX_FORMAT:
        raise ValueError(f"not a retrieval index file: {path}")
    if raw.get("version") != INDEX_VERSION:
        raise ValueError(f"unsupported index version {raw.get('version')!r}")
    chunks = [
        Chunk(
            chunk_id=c["chunk_id"],
            paper_id=c["paper_id"],
            text=c["text"],
            token_count=c["token_count"],
        )
        for c in raw["chunks"]
    ]
    b = raw["bm25"]
    bm25 = Bm25Index(
        postings={term: tuple((cid, tf) for cid, tf in rows) for term, rows in b["postings"].items()},
        doc_lengths={int(cid): dl for cid, dl in b["doc_lengths"].items()},
        avg_doc_length=b["avg_doc_length"],
        doc_count=b["doc_count"],
        k1=b["k1"],
        b=b["b"],
    )
    d = raw["dense"]
    dense = DenseIndex(
        vectors={int(cid): tuple(vec) for cid, vec in d["vectors"].items()},
        dimension=d["dimension"],
    )
    return chunks, bm25, dense
