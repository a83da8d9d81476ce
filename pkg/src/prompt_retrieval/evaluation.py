"""Selection methods, metrics and the experiment protocols behind the reports.

Three ways to pick in-context examples are compared throughout: seeded
random sampling (within the query's category by default), nearest-neighbor
retrieval on raw features, and retrieval through a trained projection head.
Reports aggregate oracle performance per method and per sweep point into
CSV rows that are byte-stable given the same seeds.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embedding_store import EmbeddingSet
from .errors import InvalidParamsError, NoCandidatesError, ShapeMismatchError, ParseError
from .mining import mine_sets
from .oracle import (
    Prompt,
    SyntheticOracleParams,
    build_performance_matrix,
    synthetic_perf,
)
from .projection import ProjectionHead
from .seeding import stable_rng, stable_u64
from .similarity import Metric, retrieve_topk
from .synthetic_bench import LatentStore
from .trainer import TrainConfig, train

REPORT_HEADER = ("method", "sweep_axis", "sweep_value", "domain", "split",
                 "mean_perf", "std_perf", "n_queries", "seed")


# ---------------------------------------------------------------------------
# metrics


def _as_grid(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    return arr


def miou(pred, gt) -> float:
    """Intersection over union of two binary masks; both empty counts as 1.0."""
    pred = _as_grid(pred)
    gt = _as_grid(gt)
    if pred.shape != gt.shape:
        raise ShapeMismatchError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    for name, arr in (("pred", pred), ("gt", gt)):
        if not np.all((arr == 0.0) | (arr == 1.0)):
            raise InvalidParamsError(f"{name} mask must be binary (0/1 values)")
    inter = np.count_nonzero((pred == 1.0) & (gt == 1.0))
    union = np.count_nonzero((pred == 1.0) | (gt == 1.0))
    if union == 0:
        return 1.0
    return inter / union


def mse(pred, gt) -> float:
    pred = _as_grid(pred)
    gt = _as_grid(gt)
    if pred.shape != gt.shape:
        raise ShapeMismatchError(f"grid shapes differ: {pred.shape} vs {gt.shape}")
    diff = pred - gt
    return float(np.mean(diff * diff))


def load_grid(path: str | Path) -> np.ndarray:
    """Read a JSON grid file: {"shape": [h, w], "data": [row-major numbers]}."""
    import json

    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    for key in ("shape", "data"):
        if key not in obj:
            raise ParseError(f"grid file missing field {key!r}")
    shape = obj["shape"]
    if len(shape) != 2:
        raise ParseError("grid shape must be [height, width]")
    h, w = int(shape[0]), int(shape[1])
    data = np.asarray(obj["data"], dtype=np.float64)
    if data.size != h * w:
        raise ShapeMismatchError(f"grid data has {data.size} cells, shape implies {h * w}")
    return data.reshape(h, w)


# ---------------------------------------------------------------------------
# selection methods


@dataclass(frozen=True)
class SelectionMethod:
    kind: str  # "random" | "unsup" | "sup"
    within_class: bool = True
    metric: Metric = Metric.COSINE
    head: ProjectionHead | None = None

    def __post_init__(self):
        if self.kind not in ("random", "unsup", "sup"):
            raise InvalidParamsError(f"unknown selection method {self.kind!r}")
        if self.kind == "sup" and self.head is None:
            raise InvalidParamsError("supervised selection requires a trained head")

    @property
    def label(self) -> str:
        return {"random": "Random", "unsup": "UnsupPR", "sup": "SupPR"}[self.kind]

    @classmethod
    def random(cls, within_class: bool = True) -> "SelectionMethod":
        return cls(kind="random", within_class=within_class)

    @classmethod
    def unsup(cls, metric: Metric = Metric.COSINE) -> "SelectionMethod":
        return cls(kind="unsup", metric=Metric(metric))

    @classmethod
    def sup(cls, head: ProjectionHead, metric: Metric = Metric.COSINE) -> "SelectionMethod":
        return cls(kind="sup", metric=Metric(metric), head=head)


def select_prompt(method: SelectionMethod, emb_set: EmbeddingSet, query_id: str,
                  k: int, seed: int = 0) -> Prompt:
    """Build a prompt of up to ``k`` examples for the query.

    Random sampling is keyed by (seed, query id) so prompts do not depend
    on evaluation order; retrieval methods take the top of the ranking.
    """
    if method.kind == "random":
        query = emb_set.get(query_id)
        pool = sorted(
            i for i in emb_set.ids_with_role("source")
            if i != query_id
            and (not method.within_class or emb_set.get(i).category == query.category)
        )
        if not pool:
            scope = "same-category " if method.within_class else ""
            raise NoCandidatesError(f"no {scope}source candidates for query {query_id!r}")
        rng = stable_rng(seed, "random-prompt", query_id)
        picked = rng.choice(len(pool), size=min(k, len(pool)), replace=False)
        return Prompt(example_ids=tuple(pool[int(i)] for i in picked), query_id=query_id)

    head = method.head if method.kind == "sup" else None
    ranking = retrieve_topk(emb_set, query_id, k, method.metric, head)
    return Prompt(example_ids=tuple(ranking.top(k)), query_id=query_id)


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class ReportRow:
    method: str
    sweep_axis: str
    sweep_value: str
    domain: str
    split: str
    mean_perf: float
    std_perf: float | None
    n_queries: int
    seed: int


@dataclass
class ExperimentReport:
    rows: list[ReportRow] = field(default_factory=list)

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        for row in self.rows:
            writer.writerow([
                row.method, row.sweep_axis, row.sweep_value, row.domain, row.split,
                repr(row.mean_perf),
                "" if row.std_perf is None else repr(row.std_perf),
                row.n_queries, row.seed,
            ])
        return buf.getvalue()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv_string(), encoding="utf-8")

    def mean_of(self, method_label: str, sweep_value: str | None = None) -> float:
        for row in self.rows:
            if row.method == method_label and (sweep_value is None or row.sweep_value == sweep_value):
                return row.mean_perf
        raise KeyError(f"no report row for {method_label!r} / {sweep_value!r}")


def _domain_label(emb_set: EmbeddingSet) -> str:
    domains = {r.domain for r in emb_set.records}
    if len(domains) == 1:
        value = next(iter(domains))
        return value if value is not None else ""
    return "mixed"


def _split_label(emb_set: EmbeddingSet) -> str:
    splits = {r.split for r in emb_set.records}
    if len(splits) == 1:
        value = next(iter(splits))
        return "" if value is None else str(value)
    return "mixed"


def _map_queries(fn, query_ids: list[str], threads: int) -> list:
    """Apply fn to each query id; results keep the input order regardless of
    how many worker threads computed them."""
    if threads <= 1:
        return [fn(q) for q in query_ids]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, query_ids))


def _method_values(method: SelectionMethod, emb_set: EmbeddingSet, latents: LatentStore,
                   params: SyntheticOracleParams, k: int, trials: int, seed: int,
                   threads: int) -> np.ndarray:
    """Oracle performance per (trial,) query, flattened in evaluation order."""
    query_ids = sorted(emb_set.ids_with_role("query"))
    if not query_ids:
        raise NoCandidatesError("no query-role records to evaluate")
    effective_trials = trials if method.kind == "random" else 1
    values = []
    for t in range(effective_trials):
        trial_seed = stable_u64(seed, "trial", t) if method.kind == "random" else seed

        def one(query_id: str) -> float:
            prompt = select_prompt(method, emb_set, query_id, k, trial_seed)
            return synthetic_perf(prompt, latents, params)

        values.extend(_map_queries(one, query_ids, threads))
    return np.array(values)


def run_experiment(methods: list[SelectionMethod], emb_set: EmbeddingSet,
                   latents: LatentStore, params: SyntheticOracleParams,
                   k: int = 1, trials: int = 1, seed: int = 0, *,
                   sweep_axis: str = "main", sweep_value: str | None = None,
                   threads: int = 1) -> ExperimentReport:
    """Evaluate each method over all queries and aggregate to one row each.

    Random methods are repeated ``trials`` times; their std is the spread
    over every (trial, query) evaluation. Deterministic methods are run
    once and report no std.
    """
    if trials < 1:
        raise InvalidParamsError(f"trials must be >= 1, got {trials}")
    report = ExperimentReport()
    domain = _domain_label(emb_set)
    split = _split_label(emb_set)
    n_queries = len(emb_set.ids_with_role("query"))
    for method in methods:
        values = _method_values(method, emb_set, latents, params, k, trials, seed, threads)
        multiple = method.kind == "random" and trials > 1
        report.rows.append(ReportRow(
            method=method.label,
            sweep_axis=sweep_axis,
            sweep_value=str(k) if sweep_value is None else sweep_value,
            domain=domain,
            split=split,
            mean_perf=float(np.mean(values)),
            std_perf=float(np.std(values)) if multiple else None,
            n_queries=n_queries,
            seed=seed,
        ))
    return report


# ---------------------------------------------------------------------------
# pipeline helpers and sweeps


def train_supervised_head(emb_set: EmbeddingSet, latents: LatentStore,
                          params: SyntheticOracleParams, config: TrainConfig,
                          mine_top: int = 5) -> ProjectionHead:
    """Mining plus training over the set's source pool."""
    matrix = build_performance_matrix(emb_set, latents, params, rows="source")
    sets = mine_sets(matrix, mine_top)
    head, _ = train(emb_set, sets, config)
    return head


def default_methods(metric: Metric, head: ProjectionHead) -> list[SelectionMethod]:
    return [
        SelectionMethod.random(),
        SelectionMethod.unsup(metric),
        SelectionMethod.sup(head, metric),
    ]


def _restrict_sources(emb_set: EmbeddingSet, keep: set[str]) -> EmbeddingSet:
    records = tuple(
        r for r in emb_set.records if r.role != "source" or r.id in keep
    )
    return EmbeddingSet(records=records, dimension=emb_set.dimension,
                        normalized=emb_set.normalized)


def sweep_size(emb_set: EmbeddingSet, latents: LatentStore,
               params: SyntheticOracleParams, train_config: TrainConfig,
               fractions: list[float], k: int = 1, trials: int = 8, seed: int = 0,
               metric: Metric = Metric.COSINE, mine_top: int = 5,
               threads: int = 1) -> ExperimentReport:
    """Shrink the retrieval pool to each fraction and re-run all methods.

    The supervised head is retrained per fraction, since its training data
    is the restricted pool itself.
    """
    source_ids = sorted(emb_set.ids_with_role("source"))
    report = ExperimentReport()
    for fraction in fractions:
        if not 0.0 < fraction <= 1.0:
            raise InvalidParamsError(f"fractions must be in (0, 1], got {fraction}")
        n_keep = math.ceil(fraction * len(source_ids))
        rng = stable_rng(seed, "size-subset", repr(float(fraction)))
        picked = rng.choice(len(source_ids), size=n_keep, replace=False)
        keep = {source_ids[int(i)] for i in picked}
        subset = _restrict_sources(emb_set, keep)

        head = train_supervised_head(subset, latents, params, train_config, mine_top)
        sub_report = run_experiment(
            default_methods(metric, head), subset, latents, params,
            k=k, trials=trials, seed=seed,
            sweep_axis="size", sweep_value=repr(float(fraction)), threads=threads,
        )
        report.rows.extend(sub_report.rows)
    return report


def sweep_k(emb_set: EmbeddingSet, latents: LatentStore,
            params: SyntheticOracleParams, train_config: TrainConfig,
            k_values: list[int], trials: int = 8, seed: int = 0,
            metric: Metric = Metric.COSINE, mine_top: int = 5,
            threads: int = 1, head: ProjectionHead | None = None) -> ExperimentReport:
    """Vary the number of in-context examples.

    Prompts are nested: each method picks its max-k prompt once per query
    and smaller k values evaluate prefixes, so with an order-insensitive
    oracle per-query performance is nondecreasing in k by construction.
    """
    if not k_values or any(k < 1 for k in k_values):
        raise InvalidParamsError("k_values must be positive")
    k_max = max(k_values)
    if head is None:
        head = train_supervised_head(emb_set, latents, params, train_config, mine_top)
    query_ids = sorted(emb_set.ids_with_role("query"))
    domain = _domain_label(emb_set)
    split = _split_label(emb_set)

    report = ExperimentReport()
    for method in default_methods(metric, head):
        effective_trials = trials if method.kind == "random" else 1
        per_k_values: dict[int, list[float]] = {kv: [] for kv in k_values}
        for t in range(effective_trials):
            trial_seed = stable_u64(seed, "trial", t) if method.kind == "random" else seed

            def one(query_id: str) -> list[float]:
                base = select_prompt(method, emb_set, query_id, k_max, trial_seed)
                out = []
                for kv in k_values:
                    prefix = Prompt(example_ids=base.example_ids[:kv], query_id=query_id)
                    out.append(synthetic_perf(prefix, latents, params))
                return out

            for row in _map_queries(one, query_ids, threads):
                for kv, value in zip(k_values, row):
                    per_k_values[kv].append(value)
        for kv in k_values:
            values = np.array(per_k_values[kv])
            multiple = method.kind == "random" and trials > 1
            report.rows.append(ReportRow(
                method=method.label, sweep_axis="k", sweep_value=str(kv),
                domain=domain, split=split,
                mean_perf=float(np.mean(values)),
                std_perf=float(np.std(values)) if multiple else None,
                n_queries=len(query_ids), seed=seed,
            ))
    return report


def sweep_order(emb_set: EmbeddingSet, latents: LatentStore,
                params: SyntheticOracleParams, train_config: TrainConfig,
                k: int = 3, seed: int = 0, metric: Metric = Metric.COSINE,
                mine_top: int = 5, threads: int = 1,
                head: ProjectionHead | None = None) -> ExperimentReport:
    """Evaluate every ordering of a fixed prompt per query.

    Each query keeps one set of examples per method; all k! position
    assignments are scored. The reported std is taken across the per-
    ordering means, so it isolates pure order sensitivity.
    """
    if head is None:
        head = train_supervised_head(emb_set, latents, params, train_config, mine_top)
    query_ids = sorted(emb_set.ids_with_role("query"))
    domain = _domain_label(emb_set)
    split = _split_label(emb_set)

    report = ExperimentReport()
    for method in default_methods(metric, head):
        def one(query_id: str) -> list[float]:
            base = select_prompt(method, emb_set, query_id, k, seed)
            perms = list(itertools.permutations(range(len(base.example_ids))))
            return [
                synthetic_perf(
                    Prompt(example_ids=tuple(base.example_ids[i] for i in perm),
                           query_id=query_id),
                    latents, params,
                )
                for perm in perms
            ]

        per_query = _map_queries(one, query_ids, threads)
        pattern_means = np.mean(np.array(per_query), axis=0)
        # np.std of identical values can return ~1e-16 (the mean need not
        # round back exactly); an order-insensitive oracle must report 0.
        if np.all(pattern_means == pattern_means[0]):
            order_std = 0.0
        else:
            order_std = float(np.std(pattern_means))
        report.rows.append(ReportRow(
            method=method.label, sweep_axis="order", sweep_value=str(k),
            domain=domain, split=split,
            mean_perf=float(np.mean(pattern_means)),
            std_perf=order_std,
            n_queries=len(query_ids), seed=seed,
        ))
    return report


def eval_shift(source_set: EmbeddingSet, source_latents: LatentStore,
               target_set: EmbeddingSet, target_latents: LatentStore,
               params: SyntheticOracleParams, train_config: TrainConfig,
               k: int = 1, trials: int = 1, seed: int = 0,
               metric: Metric = Metric.COSINE, mine_top: int = 5,
               threads: int = 1) -> ExperimentReport:
    """Train on the source pool, evaluate everything on the shifted target."""
    head = train_supervised_head(source_set, source_latents, params, train_config, mine_top)
    return run_experiment(
        default_methods(metric, head), target_set, target_latents, params,
        k=k, trials=trials, seed=seed,
        sweep_axis="shift", sweep_value="target", threads=threads,
    )
