"""Prompt retrieval for in-context learning, at desk scale.

Selects in-context examples for a query either by similarity search over
fixed embeddings or through a projection head trained contrastively against
cached in-context performance, and reproduces the comparison and ablation
protocols on seeded synthetic benchmarks.
"""

__version__ = "0.1.0"

from .embedding_store import EmbeddingRecord, EmbeddingSet, l2_normalize, load_embeddings, save_embeddings
from .evaluation import SelectionMethod, miou, mse, run_experiment, select_prompt
from .mining import ContrastiveSets, mine_sets
from .oracle import PerformanceMatrix, Prompt, SyntheticOracleParams, build_performance_matrix, synthetic_perf
from .projection import ProjectionHead
from .similarity import Metric, Ranking, pairwise_scores, retrieve_topk, score
from .synthetic_bench import BenchParams, LatentStore, generate, generate_shifted
from .trainer import TrainConfig, contrastive_loss, cosine_annealing_lr, loss_gradient, train

__all__ = [
    "BenchParams", "ContrastiveSets", "EmbeddingRecord", "EmbeddingSet", "LatentStore",
    "Metric", "PerformanceMatrix", "ProjectionHead", "Prompt", "Ranking",
    "SelectionMethod", "SyntheticOracleParams", "TrainConfig",
    "build_performance_matrix", "contrastive_loss", "cosine_annealing_lr",
    "generate", "generate_shifted", "l2_normalize", "load_embeddings", "loss_gradient",
    "mine_sets", "miou", "mse", "pairwise_scores", "retrieve_topk", "run_experiment",
    "save_embeddings", "score", "select_prompt", "synthetic_perf", "train",
]
