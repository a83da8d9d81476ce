"""Command-line entry point wiring the modules into reproducible pipelines.

Every subcommand takes --seed (default 0, never wall clock) and writes a
manifest next to its outputs recording the resolved configuration, input
digests and tool version. Re-running with the same manifest reproduces the
outputs byte for byte. Diagnostics go to stderr, data to files or stdout.
Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from . import __version__
from .embedding_store import l2_normalize, load_embeddings, save_embeddings
from .errors import PromptRetrievalError, UsageError
from .evaluation import (
    ExperimentReport,
    SelectionMethod,
    eval_shift,
    load_grid,
    miou,
    mse,
    run_experiment,
    sweep_k,
    sweep_order,
    sweep_size,
    train_supervised_head,
)
from .mining import load_contrastive_sets, mine_sets, save_contrastive_sets
from .oracle import (
    SyntheticOracleParams,
    build_performance_matrix,
    load_performance_matrix,
    save_performance_matrix,
)
from .projection import ProjectionHead
from .similarity import Metric, retrieve_topk
from .synthetic_bench import BenchParams, generate, generate_shifted, load_latents, save_latents
from .trainer import TrainConfig, train


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as exit-code-1 errors."""

    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage()}")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out_path: Path, subcommand: str, config: dict,
                   inputs: list[Path], seed: int) -> None:
    """Record what produced an output, alongside it."""
    manifest = {
        "subcommand": subcommand,
        "config": {k: v for k, v in sorted(config.items())},
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
        "seed": seed,
        "version": __version__,
    }
    out_path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n",
                        encoding="utf-8")


def _oracle_flags(parser: _Parser) -> None:
    parser.add_argument("--beta-sem", type=float, default=0.5)
    parser.add_argument("--beta-style", type=float, default=0.5)
    parser.add_argument("--eta", type=float, default=0.8)
    parser.add_argument("--order-delta", type=float, default=0.02)
    parser.add_argument("--noise-sigma", type=float, default=0.05)


def _oracle_params(args) -> SyntheticOracleParams:
    return SyntheticOracleParams(
        beta_sem=args.beta_sem, beta_style=args.beta_style, eta=args.eta,
        order_delta=args.order_delta, noise_sigma=args.noise_sigma, seed=args.seed,
    )


def _train_flags(parser: _Parser) -> None:
    parser.add_argument("--epochs", type=int, default=200)
    parser.add_argument("--lr0", type=float, default=0.005)
    parser.add_argument("--lr-min", type=float, default=0.0)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--momentum", type=float, default=0.0)
    parser.add_argument("--temperature", type=float, default=0.03)
    parser.add_argument("--init-noise", type=float, default=1e-3)
    parser.add_argument("--inbatch-negatives", choices=("anchors", "positives", "negatives"),
                        default="anchors")


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs, lr0=args.lr0, lr_min=args.lr_min,
        batch_size=args.batch_size, momentum=args.momentum, seed=args.seed,
        temperature=args.temperature, init_noise=args.init_noise,
        inbatch_negatives=args.inbatch_negatives,
    )


def _load_normalized(path: str):
    return l2_normalize(load_embeddings(path))


def build_parser() -> _Parser:
    parser = _Parser(prog="prompt-retrieval",
                     description="Prompt retrieval engine and experiment harness")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("gen-synthetic", help="generate a seeded synthetic benchmark")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-categories", type=int, default=5)
    p.add_argument("--n-source-per-cat", type=int, default=100)
    p.add_argument("--n-query-per-cat", type=int, default=40)
    p.add_argument("--d-sem", type=int, default=32)
    p.add_argument("--d-sty", type=int, default=32)
    p.add_argument("--alpha", type=float, default=0.3)
    p.add_argument("--cluster-spread", type=float, default=0.4)
    p.add_argument("--target-out", help="also generate a style-shifted companion set here")
    p.add_argument("--shift-scale", type=float, default=7.0)

    p = sub.add_parser("ingest", help="validate an embedding file")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("perf-matrix", help="evaluate all single-example prompts")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--latents", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rows", choices=("source", "query"), default="source")
    p.add_argument("--subsample-cap", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    _oracle_flags(p)

    p = sub.add_parser("mine", help="mine contrastive sets from a performance matrix")
    p.add_argument("--matrix", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--top", type=int, default=5)
    p.add_argument("--within-category", action="store_true")
    p.add_argument("--embeddings", help="needed with --within-category for category labels")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train the projection head")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--sets", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="write per-epoch loss/lr CSV here")
    p.add_argument("--seed", type=int, default=0)
    _train_flags(p)

    p = sub.add_parser("retrieve", help="rank sources for one query")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--query-id", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--metric", choices=[m.value for m in Metric], default="cosine")
    p.add_argument("--head")
    p.add_argument("--out", help="write the ranking CSV here instead of stdout only")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("eval", help="compare selection methods")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--latents", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--methods", default="random,unsup,sup")
    p.add_argument("--head")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--metric", choices=[m.value for m in Metric], default="cosine")
    p.add_argument("--within-class", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--format", choices=("csv",), default="csv")
    p.add_argument("--seed", type=int, default=0)
    _oracle_flags(p)

    p = sub.add_parser("sweep", help="run an ablation sweep")
    p.add_argument("--axis", choices=("size", "k", "order", "shift"), required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--latents", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fractions", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")
    p.add_argument("--k-values", default="1,2,3,4,5,6,7")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--target-embeddings")
    p.add_argument("--target-latents")
    p.add_argument("--trials", type=int, default=8)
    p.add_argument("--metric", choices=[m.value for m in Metric], default="cosine")
    p.add_argument("--mine-top", type=int, default=5)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--format", choices=("csv",), default="csv")
    p.add_argument("--seed", type=int, default=0)
    _oracle_flags(p)
    _train_flags(p)

    p = sub.add_parser("metrics", help="score a prediction grid against ground truth")
    p.add_argument("--op", choices=("miou", "mse"), required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--seed", type=int, default=0)

    return parser


def _cmd_gen_synthetic(args) -> int:
    params = BenchParams(
        n_categories=args.n_categories, n_source_per_cat=args.n_source_per_cat,
        n_query_per_cat=args.n_query_per_cat, d_sem=args.d_sem, d_sty=args.d_sty,
        alpha=args.alpha, cluster_spread=args.cluster_spread, seed=args.seed,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    emb_set, latents = generate(params)
    save_embeddings(emb_set, out / "embeddings.jsonl")
    save_latents(latents, out / "latents.jsonl")
    config = {k: v for k, v in vars(args).items() if k != "subcommand"}
    write_manifest(out / "manifest.json", "gen-synthetic", config, [], args.seed)
    if args.target_out:
        target_dir = Path(args.target_out)
        target_dir.mkdir(parents=True, exist_ok=True)
        target_set, target_latents = generate_shifted(params, latents, args.shift_scale)
        save_embeddings(target_set, target_dir / "embeddings.jsonl")
        save_latents(target_latents, target_dir / "latents.jsonl")
        write_manifest(target_dir / "manifest.json", "gen-synthetic", config, [], args.seed)
    print(f"wrote {len(emb_set)} records to {out}", file=sys.stderr)
    return 0


def _cmd_ingest(args) -> int:
    emb_set = load_embeddings(args.embeddings)
    summary = {
        "records": len(emb_set),
        "dimension": emb_set.dimension,
        "sources": len(emb_set.ids_with_role("source")),
        "queries": len(emb_set.ids_with_role("query")),
        "categories": sorted({r.category for r in emb_set.records}),
    }
    print(json.dumps(summary, sort_keys=True))
    return 0


def _cmd_perf_matrix(args) -> int:
    emb_set = _load_normalized(args.embeddings)
    latents = load_latents(args.latents)
    matrix = build_performance_matrix(
        emb_set, latents, _oracle_params(args),
        rows=args.rows, subsample_cap=args.subsample_cap,
    )
    out = Path(args.out)
    save_performance_matrix(matrix, out)
    config = {k: v for k, v in vars(args).items() if k != "subcommand"}
    write_manifest(Path(str(out) + ".manifest.json"), "perf-matrix", config,
                   [Path(args.embeddings), Path(args.latents)], args.seed)
    print(f"wrote {len(matrix.query_ids)}x{len(matrix.source_ids)} matrix to {out}",
          file=sys.stderr)
    return 0


def _cmd_mine(args) -> int:
    matrix = load_performance_matrix(args.matrix)
    category_of = None
    if args.within_category:
        if not args.embeddings:
            raise UsageError("--within-category requires --embeddings")
        emb_set = load_embeddings(args.embeddings)
        category_of = {r.id: r.category for r in emb_set.records}
    sets = mine_sets(matrix, args.top, category_of=category_of,
                     within_category=args.within_category)
    out = Path(args.out)
    save_contrastive_sets(sets, out)
    inputs = [Path(args.matrix), Path(str(args.matrix) + ".json")]
    if args.embeddings:
        inputs.append(Path(args.embeddings))
    config = {k: v for k, v in vars(args).items() if k != "subcommand"}
    write_manifest(Path(str(out) + ".manifest.json"), "mine", config, inputs, args.seed)
    print(f"mined sets for {len(sets)} examples to {out}", file=sys.stderr)
    return 0


def _cmd_train(args) -> int:
    emb_set = _load_normalized(args.embeddings)
    sets = load_contrastive_sets(args.sets)
    head, log = train(emb_set, sets, _train_config(args))
    out = Path(args.out)
    head.save(out)
    if args.log:
        log.save(args.log)
    config = {k: v for k, v in vars(args).items() if k != "subcommand"}
    write_manifest(Path(str(out) + ".manifest.json"), "train", config,
                   [Path(args.embeddings), Path(args.sets)], args.seed)
    print(f"trained head for {log.rows[-1][0]} epochs, final loss {log.rows[-1][1]:.6f}",
          file=sys.stderr)
    return 0


def _cmd_retrieve(args) -> int:
    emb_set = _load_normalized(args.embeddings)
    head = ProjectionHead.load(args.head) if args.head else None
    ranking = retrieve_topk(emb_set, args.query_id, args.k, Metric(args.metric), head)
    lines = ["rank,source_id,score"]
    for rank, (source_id, score_value) in enumerate(ranking.entries, start=1):
        lines.append(f"{rank},{source_id},{score_value!r}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if ranking.truncated:
        print(f"note: only {len(ranking.entries)} candidates available", file=sys.stderr)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        inputs = [Path(args.embeddings)] + ([Path(args.head)] if args.head else [])
        config = {k: v for k, v in vars(args).items() if k != "subcommand"}
        write_manifest(Path(str(args.out) + ".manifest.json"), "retrieve", config,
                       inputs, args.seed)
    return 0


def _parse_methods(args) -> list[SelectionMethod]:
    head = ProjectionHead.load(args.head) if args.head else None
    methods = []
    for name in args.methods.split(","):
        name = name.strip()
        if name == "random":
            methods.append(SelectionMethod.random(within_class=args.within_class))
        elif name == "unsup":
            methods.append(SelectionMethod.unsup(Metric(args.metric)))
        elif name == "sup":
            if head is None:
                raise UsageError("method 'sup' requires --head")
            methods.append(SelectionMethod.sup(head, Metric(args.metric)))
        elif name:
            raise UsageError(f"unknown method {name!r} (expected random, unsup, sup)")
    return methods


def _cmd_eval(args) -> int:
    emb_set = _load_normalized(args.embeddings)
    latents = load_latents(args.latents)
    report = run_experiment(
        _parse_methods(args), emb_set, latents, _oracle_params(args),
        k=args.k, trials=args.trials, seed=args.seed, threads=args.threads,
    )
    report.save(args.out)
    inputs = [Path(args.embeddings), Path(args.latents)]
    if args.head:
        inputs.append(Path(args.head))
    config = {k: v for k, v in vars(args).items() if k != "subcommand"}
    write_manifest(Path(str(args.out) + ".manifest.json"), "eval", config, inputs, args.seed)
    print(f"wrote report with {len(report.rows)} rows to {args.out}", file=sys.stderr)
    return 0


def _cmd_sweep(args) -> int:
    emb_set = _load_normalized(args.embeddings)
    latents = load_latents(args.latents)
    params = _oracle_params(args)
    train_config = _train_config(args)
    metric = Metric(args.metric)
    inputs = [Path(args.embeddings), Path(args.latents)]

    if args.axis == "size":
        fractions = [float(x) for x in args.fractions.split(",") if x.strip()]
        report = sweep_size(emb_set, latents, params, train_config, fractions,
                            trials=args.trials, seed=args.seed, metric=metric,
                            mine_top=args.mine_top, threads=args.threads)
    elif args.axis == "k":
        k_values = [int(x) for x in args.k_values.split(",") if x.strip()]
        report = sweep_k(emb_set, latents, params, train_config, k_values,
                         trials=args.trials, seed=args.seed, metric=metric,
                         mine_top=args.mine_top, threads=args.threads)
    elif args.axis == "order":
        report = sweep_order(emb_set, latents, params, train_config, k=args.k,
                             seed=args.seed, metric=metric,
                             mine_top=args.mine_top, threads=args.threads)
    else:
        if not args.target_embeddings or not args.target_latents:
            raise UsageError("--axis shift requires --target-embeddings and --target-latents")
        target_set = _load_normalized(args.target_embeddings)
        target_latents = load_latents(args.target_latents)
        report = eval_shift(emb_set, latents, target_set, target_latents, params,
                            train_config, trials=args.trials, seed=args.seed,
                            metric=metric, mine_top=args.mine_top, threads=args.threads)
        inputs += [Path(args.target_embeddings), Path(args.target_latents)]

    report.save(args.out)
    config = {k: v for k, v in vars(args).items() if k != "subcommand"}
    write_manifest(Path(str(args.out) + ".manifest.json"), "sweep", config, inputs, args.seed)
    print(f"wrote {args.axis} sweep with {len(report.rows)} rows to {args.out}",
          file=sys.stderr)
    return 0


def _cmd_metrics(args) -> int:
    pred = load_grid(args.pred)
    gt = load_grid(args.gt)
    value = miou(pred, gt) if args.op == "miou" else mse(pred, gt)
    print(repr(value))
    return 0


_COMMANDS = {
    "gen-synthetic": _cmd_gen_synthetic,
    "ingest": _cmd_ingest,
    "perf-matrix": _cmd_perf_matrix,
    "mine": _cmd_mine,
    "train": _cmd_train,
    "retrieve": _cmd_retrieve,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "metrics": _cmd_metrics,
}


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.subcommand](args)
    except (PromptRetrievalError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
