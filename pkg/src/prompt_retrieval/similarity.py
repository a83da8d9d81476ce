"""Pair scoring and exact top-k retrieval.

All metrics are oriented so that a larger score is always better: distances
enter negated. Rankings are strictly ordered by (score desc, id asc), which
makes reports reproducible byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .embedding_store import EmbeddingSet
from .errors import (
    DimensionMismatchError,
    NoCandidatesError,
    UnknownQueryError,
    ZeroVectorError,
)
from .projection import ProjectionHead


class Metric(str, Enum):
    COSINE = "cosine"
    EUCLIDEAN = "euclidean"
    MANHATTAN = "manhattan"


@dataclass(frozen=True)
class Ranking:
    query_id: str
    entries: tuple[tuple[str, float], ...]
    truncated: bool = False

    def ids(self) -> list[str]:
        return [source_id for source_id, _ in self.entries]

    def top(self, k: int) -> list[str]:
        return [source_id for source_id, _ in self.entries[:k]]


def score(a: np.ndarray, b: np.ndarray, metric: Metric) -> float:
    """Score one candidate pair; larger means more similar."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"vector shapes differ: {a.shape} vs {b.shape}")
    metric = Metric(metric)
    if metric is Metric.COSINE:
        norm_a = float(np.linalg.norm(a))
        norm_b = float(np.linalg.norm(b))
        if norm_a == 0.0 or norm_b == 0.0:
            raise ZeroVectorError("cosine is undefined for zero vectors")
        return float(np.clip(np.dot(a, b) / (norm_a * norm_b), -1.0, 1.0))
    if metric is Metric.EUCLIDEAN:
        return -float(np.linalg.norm(a - b))
    return -float(np.sum(np.abs(a - b)))


def apply_head(head: ProjectionHead, v: np.ndarray) -> np.ndarray:
    return head.apply(v)


def _score_rows(query_vec: np.ndarray, candidates: np.ndarray, metric: Metric,
                candidate_ids: list[str] | None = None) -> np.ndarray:
    """Vectorized scores of one query against rows of ``candidates``."""
    if metric is Metric.COSINE:
        q_norm = np.linalg.norm(query_vec)
        c_norms = np.linalg.norm(candidates, axis=1)
        if q_norm == 0.0:
            raise ZeroVectorError("cosine is undefined for a zero query vector")
        if np.any(c_norms == 0.0):
            bad = int(np.argmax(c_norms == 0.0))
            name = candidate_ids[bad] if candidate_ids else f"index {bad}"
            raise ZeroVectorError(f"cosine is undefined for zero vector {name!r}")
        return np.clip((candidates @ query_vec) / (c_norms * q_norm), -1.0, 1.0)
    if metric is Metric.EUCLIDEAN:
        return -np.linalg.norm(candidates - query_vec, axis=1)
    return -np.sum(np.abs(candidates - query_vec), axis=1)


def retrieve_topk(
    emb_set: EmbeddingSet,
    query_id: str,
    k: int,
    metric: Metric = Metric.COSINE,
    head: ProjectionHead | None = None,
) -> Ranking:
    """Rank every source-role record (except the query itself) against the query.

    The head, when given, is applied to both sides. Ties break by ascending
    id. If k exceeds the candidate count the ranking is truncated and flagged.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if query_id not in emb_set:
        raise UnknownQueryError(f"unknown query id {query_id!r}")
    metric = Metric(metric)
    candidate_ids = [i for i in emb_set.ids_with_role("source") if i != query_id]
    if not candidate_ids:
        raise NoCandidatesError(f"no source candidates for query {query_id!r}")

    query_vec = emb_set.get(query_id).vector
    cand = emb_set.matrix(candidate_ids)
    if head is not None:
        query_vec = head.apply(query_vec)
        cand = head.apply(cand)
    scores = _score_rows(query_vec, cand, metric, candidate_ids)

    order = sorted(range(len(candidate_ids)), key=lambda i: (-scores[i], candidate_ids[i]))
    top = order[: min(k, len(order))]
    entries = tuple((candidate_ids[i], float(scores[i])) for i in top)
    return Ranking(query_id=query_id, entries=entries, truncated=k > len(candidate_ids))


def pairwise_scores(
    emb_set: EmbeddingSet,
    metric: Metric = Metric.COSINE,
    head: ProjectionHead | None = None,
) -> np.ndarray:
    """Dense score matrix, rows = query-role records, columns = source-role."""
    metric = Metric(metric)
    query_ids = emb_set.ids_with_role("query")
    source_ids = emb_set.ids_with_role("source")
    if not query_ids or not source_ids:
        raise NoCandidatesError("pairwise scoring needs at least one query and one source")
    queries = emb_set.matrix(query_ids)
    sources = emb_set.matrix(source_ids)
    if head is not None:
        queries = head.apply(queries)
        sources = head.apply(sources)
    out = np.empty((len(query_ids), len(source_ids)), dtype=np.float64)
    for row, qv in enumerate(queries):
        out[row] = _score_rows(qv, sources, metric, source_ids)
    return out
