"""Scalar in-context performance oracle.

The synthetic oracle scores a prompt against a query from latent factors
alone. Per-example quality blends semantic and style agreement plus a small
deterministic noise term; a prompt succeeds if any of its examples "lands",
so prompt performance aggregates as a noisy-OR over position-discounted
example qualities:

    quality_k = clamp(beta_sem * cos_sem + beta_style * cos_sty + noise, 0, 1)
    efficacy_k = eta * (1 - order_delta * position_k / K)
    performance = 1 - prod_k (1 - efficacy_k * quality_k)

Appending an example can therefore never hurt, and at order_delta = 0 the
result is exactly order-invariant (factors multiply in sorted order so all
permutations of a prompt give the bit-identical product).

Noise is keyed by (seed, query id, example id), never drawn from a shared
stream, so matrices are reproducible cell by cell in any evaluation order.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embedding_store import EmbeddingSet
from .errors import (
    BadMagicError,
    InvalidParamsError,
    NoCandidatesError,
    ShapeMismatchError,
    SidecarMismatchError,
    UnknownIdError,
)
from .seeding import stable_digest, stable_rng
from .synthetic_bench import LatentStore

MATRIX_MAGIC = b"ICLPERF1"

_TWO_64 = 2.0 ** 64
_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Prompt:
    """An ordered pick of in-context examples for one query."""

    example_ids: tuple[str, ...]
    query_id: str

    def __post_init__(self):
        object.__setattr__(self, "example_ids", tuple(self.example_ids))
        if len(self.example_ids) < 1:
            raise ValueError("a prompt needs at least one example")
        if len(set(self.example_ids)) != len(self.example_ids):
            raise ValueError("prompt examples must be distinct")
        if self.query_id in self.example_ids:
            raise ValueError(f"query {self.query_id!r} cannot appear among its own examples")


@dataclass(frozen=True)
class SyntheticOracleParams:
    beta_sem: float = 0.5
    beta_style: float = 0.5
    eta: float = 0.8
    order_delta: float = 0.02
    noise_sigma: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.beta_sem < 0.0 or self.beta_style < 0.0:
            raise InvalidParamsError("beta weights must be >= 0")
        if abs(self.beta_sem + self.beta_style - 1.0) > 1e-9:
            raise InvalidParamsError(
                f"beta_sem + beta_style must equal 1, got {self.beta_sem + self.beta_style}"
            )
        if not 0.0 < self.eta <= 1.0:
            raise InvalidParamsError(f"eta must be in (0, 1], got {self.eta}")
        if not 0.0 <= self.order_delta < 1.0:
            raise InvalidParamsError(f"order_delta must be in [0, 1), got {self.order_delta}")
        if self.noise_sigma < 0.0:
            raise InvalidParamsError(f"noise_sigma must be >= 0, got {self.noise_sigma}")


def pair_noise(seed: int, query_id: str, example_id: str, sigma: float) -> float:
    """Gaussian noise derived from a hash of the pair identity (Box-Muller)."""
    if sigma == 0.0:
        return 0.0
    digest = stable_digest(seed, "noise", query_id, example_id)
    a, b = struct.unpack("<QQ", digest[:16])
    u1 = (a + 1) / _TWO_64  # in (0, 1]
    u2 = b / _TWO_64
    return sigma * math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWO_PI * u2)


def example_quality(latents: LatentStore, params: SyntheticOracleParams,
                    query_id: str, example_id: str) -> float:
    """Position-independent quality of one example for one query, in [0, 1]."""
    query = latents.get(query_id)
    example = latents.get(example_id)
    # Latent factors are unit vectors, so the dot product is the cosine.
    raw = (
        params.beta_sem * float(np.dot(query.sem, example.sem))
        + params.beta_style * float(np.dot(query.sty, example.sty))
        + pair_noise(params.seed, query_id, example_id, params.noise_sigma)
    )
    return float(np.clip(raw, 0.0, 1.0))


def _position_efficacies(params: SyntheticOracleParams, k: int) -> np.ndarray:
    positions = np.arange(k, dtype=np.float64)
    return params.eta * (1.0 - params.order_delta * positions / k)


def synthetic_perf(prompt: Prompt, latents: LatentStore,
                   params: SyntheticOracleParams) -> float:
    """Noisy-OR prompt performance in [0, 1]."""
    qualities = np.array(
        [example_quality(latents, params, prompt.query_id, e) for e in prompt.example_ids]
    )
    efficacies = _position_efficacies(params, len(prompt.example_ids))
    factors = 1.0 - efficacies * qualities
    # Sorted multiplication makes the product a function of the factor
    # multiset, so zero order_delta is exactly permutation-invariant.
    return float(1.0 - np.multiply.reduce(np.sort(factors)))


def order_spread_bound(prompt: Prompt, latents: LatentStore,
                       params: SyntheticOracleParams) -> float:
    """Upper bound on the performance range across all orderings of a prompt.

    Every position discount lies between eta*(1 - order_delta*(K-1)/K) and
    eta, so the noisy-OR product is bracketed regardless of assignment.
    """
    k = len(prompt.example_ids)
    qualities = np.array(
        [example_quality(latents, params, prompt.query_id, e) for e in prompt.example_ids]
    )
    eta_hi = params.eta
    eta_lo = params.eta * (1.0 - params.order_delta * (k - 1) / k)
    low = 1.0 - float(np.prod(1.0 - eta_lo * qualities))
    high = 1.0 - float(np.prod(1.0 - eta_hi * qualities))
    return high - low


@dataclass
class PerformanceMatrix:
    """Cached single-example performance for every (query, source) pair.

    With a subsample cap, unsampled cells are NaN and carry no meaning;
    otherwise all values are finite.
    """

    query_ids: tuple[str, ...]
    source_ids: tuple[str, ...]
    values: np.ndarray
    metric_name: str
    higher_is_better: bool
    subsample_cap: int | None = None

    def __post_init__(self):
        self.query_ids = tuple(self.query_ids)
        self.source_ids = tuple(self.source_ids)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.query_ids), len(self.source_ids)):
            raise ShapeMismatchError(
                f"values shape {self.values.shape} does not match "
                f"{len(self.query_ids)} queries x {len(self.source_ids)} sources"
            )
        if self.subsample_cap is None and not np.all(np.isfinite(self.values)):
            raise InvalidParamsError("matrix values must be finite")


def build_performance_matrix(
    emb_set: EmbeddingSet,
    latents: LatentStore,
    params: SyntheticOracleParams,
    *,
    rows: str = "query",
    subsample_cap: int | None = None,
) -> PerformanceMatrix:
    """Evaluate every single-example prompt.

    ``rows`` picks which records form the matrix rows: "query" uses
    query-role records, "source" uses the source pool itself (the layout
    mining consumes, where each training example is treated as a query).
    Self-pair cells exist but are skipped downstream.

    With ``subsample_cap``, each row only evaluates a seeded sample of
    candidates; the remaining cells are NaN and the cap is recorded so
    reports stay honest about coverage.
    """
    if rows not in ("query", "source"):
        raise InvalidParamsError(f"rows must be 'query' or 'source', got {rows!r}")
    if subsample_cap is not None and subsample_cap < 1:
        raise InvalidParamsError(f"subsample_cap must be >= 1, got {subsample_cap}")
    row_ids = emb_set.ids_with_role(rows)
    col_ids = emb_set.ids_with_role("source")
    if not row_ids:
        raise NoCandidatesError(f"no {rows}-role records to form matrix rows")
    if not col_ids:
        raise NoCandidatesError("no source-role records to form matrix columns")
    for i in row_ids + col_ids:
        if i not in latents:
            raise UnknownIdError(f"no latent entry for id {i!r}")

    sem_cos = latents.sem_matrix(row_ids) @ latents.sem_matrix(col_ids).T
    sty_cos = latents.sty_matrix(row_ids) @ latents.sty_matrix(col_ids).T
    raw = params.beta_sem * sem_cos + params.beta_style * sty_cos
    if params.noise_sigma > 0.0:
        noise = np.empty_like(raw)
        for r, qid in enumerate(row_ids):
            for c, sid in enumerate(col_ids):
                noise[r, c] = pair_noise(params.seed, qid, sid, params.noise_sigma)
        raw += noise
    quality = np.clip(raw, 0.0, 1.0)
    values = 1.0 - (1.0 - params.eta * quality)

    if subsample_cap is not None:
        col_index = {c: j for j, c in enumerate(col_ids)}
        masked = np.full_like(values, np.nan)
        for r, qid in enumerate(row_ids):
            candidates = [c for c in col_ids if c != qid]
            if subsample_cap < len(candidates):
                rng = stable_rng(params.seed, "subsample", qid)
                chosen = rng.choice(len(candidates), size=subsample_cap, replace=False)
                candidates = [candidates[int(i)] for i in np.sort(chosen)]
            for c in candidates:
                j = col_index[c]
                masked[r, j] = values[r, j]
        values = masked

    return PerformanceMatrix(
        query_ids=tuple(row_ids),
        source_ids=tuple(col_ids),
        values=values,
        metric_name="synthetic",
        higher_is_better=True,
        subsample_cap=subsample_cap,
    )


def save_performance_matrix(matrix: PerformanceMatrix, path: str | Path) -> None:
    """Write the binary payload plus the JSON sidecar at <path>.json."""
    path = Path(path)
    header = MATRIX_MAGIC + struct.pack("<II", len(matrix.query_ids), len(matrix.source_ids))
    payload = np.ascontiguousarray(matrix.values, dtype="<f4").tobytes()
    path.write_bytes(header + payload)
    sidecar = {
        "queries": list(matrix.query_ids),
        "sources": list(matrix.source_ids),
        "metric": matrix.metric_name,
        "higher_is_better": matrix.higher_is_better,
        "subsample_cap": matrix.subsample_cap,
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar) + "\n", encoding="utf-8")


def load_performance_matrix(path: str | Path) -> PerformanceMatrix:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < len(MATRIX_MAGIC) + 8 or blob[: len(MATRIX_MAGIC)] != MATRIX_MAGIC:
        raise BadMagicError(f"{path} is not a performance-matrix file")
    n_queries, n_sources = struct.unpack("<II", blob[8:16])
    payload = blob[16:]
    expected = n_queries * n_sources * 4
    if len(payload) != expected:
        raise ShapeMismatchError(
            f"payload holds {len(payload)} bytes, header implies {expected}"
        )
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(n_queries, n_sources)

    sidecar_path = Path(str(path) + ".json")
    sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
    queries = sidecar["queries"]
    sources = sidecar["sources"]
    if len(queries) != n_queries or len(sources) != n_sources:
        raise SidecarMismatchError(
            f"sidecar lists {len(queries)} queries x {len(sources)} sources, "
            f"header says {n_queries} x {n_sources}"
        )
    return PerformanceMatrix(
        query_ids=tuple(queries),
        source_ids=tuple(sources),
        values=values,
        metric_name=sidecar["metric"],
        higher_is_better=bool(sidecar["higher_is_better"]),
        subsample_cap=sidecar.get("subsample_cap"),
    )
