"""Contrastive training of the projection head.

Each anchor is scored against one sampled positive and a negative pool made
of its own sampled hard negative plus the other batch members. With
temperature 1 the per-anchor loss is

    -log( e^{cos(z, z_pos)} / (e^{cos(z, z_pos)} + sum_neg e^{cos(z, z_neg)}) )

averaged over the batch. Gradients with respect to the head parameters are
computed in closed form (chain rule through the projection and the cosine),
and optimization is plain SGD with a cosine-annealed learning rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embedding_store import EmbeddingSet
from .errors import (
    DimensionMismatchError,
    InvalidParamsError,
    MissingSetsError,
    NonFiniteLossError,
    UnknownIdError,
    ZeroVectorError,
)
from .mining import ContrastiveSets
from .projection import ProjectionHead

INBATCH_MODES = ("anchors", "positives", "negatives")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    lr0: float = 0.005
    lr_min: float = 0.0
    batch_size: int = 32
    momentum: float = 0.0
    seed: int = 0
    # Cosine logits live in [-1, 1]; at temperature 1 the softmax is so flat
    # that 200 epochs of SGD cannot move a linear head materially. 0.03 makes
    # the mined contrasts actually bind. Set 1.0 to recover the literal
    # untempered loss.
    temperature: float = 0.03
    init_noise: float = 1e-3
    inbatch_negatives: str = "anchors"

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidParamsError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr0 < 0.0:
            raise InvalidParamsError(f"lr0 must be >= 0, got {self.lr0}")
        if self.lr_min < 0.0 or self.lr_min > self.lr0:
            raise InvalidParamsError("lr_min must satisfy 0 <= lr_min <= lr0")
        if self.batch_size < 2:
            raise InvalidParamsError(f"batch_size must be >= 2, got {self.batch_size}")
        if not 0.0 <= self.momentum < 1.0:
            raise InvalidParamsError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.temperature <= 0.0:
            raise InvalidParamsError(f"temperature must be > 0, got {self.temperature}")
        if self.init_noise < 0.0:
            raise InvalidParamsError(f"init_noise must be >= 0, got {self.init_noise}")
        if self.inbatch_negatives not in INBATCH_MODES:
            raise InvalidParamsError(
                f"inbatch_negatives must be one of {INBATCH_MODES}, got {self.inbatch_negatives!r}"
            )


@dataclass
class TrainLog:
    rows: list[tuple[int, float, float]] = field(default_factory=list)  # (epoch, loss, lr)

    def to_csv_string(self) -> str:
        lines = ["epoch,loss,lr"]
        for epoch, loss, lr in self.rows:
            lines.append(f"{epoch},{loss!r},{lr!r}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv_string(), encoding="utf-8")


@dataclass
class LossGradient:
    loss: float
    d_weights: np.ndarray
    d_bias: np.ndarray | None


def _unit_rows(z: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms == 0.0):
        raise ZeroVectorError(f"zero {what} vector in batch")
    return z / norms[:, None], norms


def _forward(z_anchor, z_pos, z_neg, temperature, inbatch):
    """Shared forward pass over projected vectors.

    Returns everything the backward pass needs: unit rows, norms, cosines
    and softmax probabilities of each negative-pool member.
    """
    b = z_anchor.shape[0]
    ua, na = _unit_rows(z_anchor, "anchor")
    up, npos = _unit_rows(z_pos, "positive")
    un, nneg = _unit_rows(z_neg, "negative")
    pool_unit, pool_norms = {"anchors": (ua, na), "positives": (up, npos),
                             "negatives": (un, nneg)}[inbatch]

    cos_pos = np.sum(ua * up, axis=1)
    cos_own = np.sum(ua * un, axis=1)
    cos_in = ua @ pool_unit.T  # [i, j]: anchor i vs pool member j

    lp = cos_pos / temperature
    lo = cos_own / temperature
    lin = cos_in / temperature
    off_diag = ~np.eye(b, dtype=bool)

    stacked = np.where(off_diag, lin, -np.inf)
    m = np.maximum(np.maximum(lp, lo), stacked.max(axis=1) if b > 1 else -np.inf)
    exp_pos = np.exp(lp - m)
    exp_own = np.exp(lo - m)
    exp_in = np.where(off_diag, np.exp(lin - m[:, None]), 0.0)
    denom = exp_pos + exp_own + exp_in.sum(axis=1)

    loss = float(np.mean(np.log(denom) + m - lp))
    p_pos = exp_pos / denom
    p_own = exp_own / denom
    p_in = exp_in / denom[:, None]
    return {
        "b": b, "ua": ua, "na": na, "up": up, "npos": npos, "un": un, "nneg": nneg,
        "pool_unit": pool_unit, "pool_norms": pool_norms,
        "cos_pos": cos_pos, "cos_own": cos_own, "cos_in": cos_in,
        "p_pos": p_pos, "p_own": p_own, "p_in": p_in, "loss": loss,
    }


def _as_batch(batch) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if not batch:
        raise InvalidParamsError("batch must contain at least one triple")
    anchors, positives, negatives = (np.stack(rows) for rows in zip(*batch))
    if not (anchors.shape == positives.shape == negatives.shape):
        raise DimensionMismatchError("anchor, positive and negative shapes must agree")
    return (anchors.astype(np.float64), positives.astype(np.float64),
            negatives.astype(np.float64))


def contrastive_loss(batch, temperature: float = 1.0) -> float:
    """Batch loss over (anchor, positive, hard-negative) vector triples.

    In-batch negatives are the other anchors. Always >= 0, since the softmax
    ratio never exceeds one.
    """
    anchors, positives, negatives = _as_batch(batch)
    state = _forward(anchors, positives, negatives, temperature, "anchors")
    return state["loss"]


def loss_gradient(batch, head: ProjectionHead, temperature: float = 1.0,
                  inbatch: str = "anchors") -> LossGradient:
    """Analytic gradient of the batch loss with respect to head parameters.

    The triples carry raw (pre-projection) embeddings; the head is applied
    to anchors, positives and negatives alike before scoring.
    """
    if inbatch not in INBATCH_MODES:
        raise InvalidParamsError(f"inbatch must be one of {INBATCH_MODES}")
    raw_a, raw_p, raw_n = _as_batch(batch)
    z_a, z_p, z_n = head.apply(raw_a), head.apply(raw_p), head.apply(raw_n)
    s = _forward(z_a, z_p, z_n, temperature, inbatch)

    b = s["b"]
    scale = 1.0 / (b * temperature)
    ua, up, un = s["ua"], s["up"], s["un"]
    na, npos, nneg = s["na"], s["npos"], s["nneg"]

    g_a = np.zeros_like(ua)
    g_p = np.zeros_like(up)
    g_n = np.zeros_like(un)

    # Positive pair: coefficient (p_pos - 1) on cos(anchor, positive).
    cp = (s["p_pos"] - 1.0) * scale
    g_a += cp[:, None] * (up - s["cos_pos"][:, None] * ua) / na[:, None]
    g_p += cp[:, None] * (ua - s["cos_pos"][:, None] * up) / npos[:, None]

    # Sampled hard negative: coefficient p_own on cos(anchor, negative).
    co = s["p_own"] * scale
    g_a += co[:, None] * (un - s["cos_own"][:, None] * ua) / na[:, None]
    g_n += co[:, None] * (ua - s["cos_own"][:, None] * un) / nneg[:, None]

    # In-batch pool: coefficient matrix K over (anchor i, pool member j).
    k = s["p_in"] * scale
    pool_unit, pool_norms = s["pool_unit"], s["pool_norms"]
    row_weight = np.sum(k * s["cos_in"], axis=1)
    g_a += (k @ pool_unit - row_weight[:, None] * ua) / na[:, None]
    col_weight = np.sum(k * s["cos_in"], axis=0)
    g_pool = (k.T @ ua - col_weight[:, None] * pool_unit) / pool_norms[:, None]
    if inbatch == "anchors":
        g_a += g_pool
    elif inbatch == "positives":
        g_p += g_pool
    else:
        g_n += g_pool

    d_weights = g_a.T @ raw_a + g_p.T @ raw_p + g_n.T @ raw_n
    d_bias = None
    if head.bias is not None:
        d_bias = g_a.sum(axis=0) + g_p.sum(axis=0) + g_n.sum(axis=0)
    return LossGradient(loss=s["loss"], d_weights=d_weights, d_bias=d_bias)


def cosine_annealing_lr(t: int, total: int, lr0: float, lr_min: float = 0.0) -> float:
    """Learning rate at epoch ``t`` of ``total`` under cosine annealing."""
    if not 0 <= t < total:
        raise InvalidParamsError(f"epoch index {t} out of range for {total} epochs")
    if total == 1 or t == 0:
        return lr0
    if t == total - 1:
        return lr_min
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + math.cos(math.pi * t / (total - 1)))


def train(emb_set: EmbeddingSet, sets: ContrastiveSets,
          config: TrainConfig = TrainConfig()) -> tuple[ProjectionHead, TrainLog]:
    """Fit the projection head on mined positive/negative sets.

    The head starts at identity plus seeded gaussian noise, so before any
    step the projected space scores exactly like the raw one. Per epoch the
    training ids are shuffled and batched; each anchor samples one positive
    and one negative from its mined lists. Bit-deterministic given the seed.
    """
    train_ids = sorted(sets.ids())
    if not train_ids:
        raise MissingSetsError("no mined sets to train on")
    for i in train_ids:
        entry = sets.get(i)
        if not entry.positives or not entry.negatives:
            raise MissingSetsError(f"id {i!r} has an empty positive or negative set")
        for other in entry.positives + entry.negatives:
            if other not in emb_set:
                raise UnknownIdError(f"mined candidate {other!r} missing from embedding set")
        if i not in emb_set:
            raise UnknownIdError(f"training id {i!r} missing from embedding set")

    dim = emb_set.dimension
    rng = np.random.default_rng(config.seed)
    weights = np.eye(dim) + config.init_noise * rng.standard_normal((dim, dim))
    velocity = np.zeros_like(weights)

    all_ids = emb_set.ids()
    row_of = {record_id: i for i, record_id in enumerate(all_ids)}
    vectors = emb_set.matrix(all_ids)

    log = TrainLog()
    n = len(train_ids)
    for epoch in range(config.epochs):
        lr = cosine_annealing_lr(epoch, config.epochs, config.lr0, config.lr_min)
        order = rng.permutation(n)
        total_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch_ids = [train_ids[i] for i in order[start:start + config.batch_size]]
            anchor_rows, pos_rows, neg_rows = [], [], []
            for anchor_id in batch_ids:
                entry = sets.get(anchor_id)
                pos_id = entry.positives[rng.integers(len(entry.positives))]
                neg_id = entry.negatives[rng.integers(len(entry.negatives))]
                anchor_rows.append(row_of[anchor_id])
                pos_rows.append(row_of[pos_id])
                neg_rows.append(row_of[neg_id])
            head = ProjectionHead(d_in=dim, d_out=dim, weights=weights)
            batch = list(zip(vectors[anchor_rows], vectors[pos_rows], vectors[neg_rows]))
            grad = loss_gradient(batch, head, config.temperature, config.inbatch_negatives)
            if not math.isfinite(grad.loss):
                raise NonFiniteLossError("training loss diverged", epoch=epoch + 1)
            if config.momentum > 0.0:
                velocity = config.momentum * velocity - lr * grad.d_weights
                weights = weights + velocity
            else:
                weights = weights - lr * grad.d_weights
            total_loss += grad.loss * len(batch_ids)
        log.rows.append((epoch + 1, total_loss / n, lr))

    return ProjectionHead(d_in=dim, d_out=dim, weights=weights), log
