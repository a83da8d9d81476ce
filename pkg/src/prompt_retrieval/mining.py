"""Turn a performance matrix into per-example contrastive training sets."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyRowError, InvalidParamsError, ParseError
from .oracle import PerformanceMatrix


@dataclass(frozen=True)
class ExampleSets:
    positives: tuple[str, ...]  # best first
    negatives: tuple[str, ...]  # worst first


@dataclass
class ContrastiveSets:
    sets: dict[str, ExampleSets] = field(default_factory=dict)
    top: int = 5

    def __contains__(self, example_id: str) -> bool:
        return example_id in self.sets

    def __len__(self) -> int:
        return len(self.sets)

    def get(self, example_id: str) -> ExampleSets:
        return self.sets[example_id]

    def ids(self) -> list[str]:
        return list(self.sets.keys())


def mine_sets(
    matrix: PerformanceMatrix,
    top: int = 5,
    *,
    category_of: dict[str, str] | None = None,
    within_category: bool = False,
) -> ContrastiveSets:
    """Pick the best and worst ``top`` candidates per matrix row.

    Rows are sorted by performance with the matrix's own polarity, ties
    broken by ascending candidate id, the self column excluded. When fewer
    than 2*top candidates exist the two sets shrink to stay disjoint, the
    positive block ending at floor(available / 2).

    ``within_category`` restricts candidates to the row's own category
    (requires ``category_of``); the default spans the whole source pool.
    """
    if top < 1:
        raise InvalidParamsError(f"top must be >= 1, got {top}")
    if within_category and category_of is None:
        raise InvalidParamsError("within_category mining needs a category mapping")

    out: dict[str, ExampleSets] = {}
    for r, row_id in enumerate(matrix.query_ids):
        row = matrix.values[r]
        candidates = []
        for c, col_id in enumerate(matrix.source_ids):
            if col_id == row_id:
                continue
            if not math.isfinite(row[c]):
                continue  # unsampled cell under a subsample cap
            if within_category and category_of[col_id] != category_of[row_id]:
                continue
            candidates.append((col_id, float(row[c])))
        if not candidates:
            raise EmptyRowError(f"no candidates for row {row_id!r}")

        sign = -1.0 if matrix.higher_is_better else 1.0
        best_first = sorted(candidates, key=lambda item: (sign * item[1], item[0]))

        available = len(candidates)
        if available >= 2 * top:
            n_pos, n_neg = top, top
        else:
            n_pos = available // 2
            n_neg = available - n_pos
        positives = tuple(cid for cid, _ in best_first[:n_pos])
        # Worst-first ordering gets its own id-ascending tie-break and draws
        # only from the non-positive remainder, so ties cannot leak an id
        # into both sets.
        worst_first = sorted(best_first[n_pos:], key=lambda item: (-sign * item[1], item[0]))
        negatives = tuple(cid for cid, _ in worst_first[:n_neg])
        out[row_id] = ExampleSets(positives=positives, negatives=negatives)
    return ContrastiveSets(sets=out, top=top)


def save_contrastive_sets(sets: ContrastiveSets, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for example_id, entry in sets.sets.items():
            obj = {
                "id": example_id,
                "positives": list(entry.positives),
                "negatives": list(entry.negatives),
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def load_contrastive_sets(path: str | Path, top: int = 5) -> ContrastiveSets:
    path = Path(path)
    out: dict[str, ExampleSets] = {}
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", line_no) from exc
            for key in ("id", "positives", "negatives"):
                if key not in obj:
                    raise ParseError(f"missing field {key!r}", line_no)
            out[obj["id"]] = ExampleSets(
                positives=tuple(obj["positives"]),
                negatives=tuple(obj["negatives"]),
            )
    return ContrastiveSets(sets=out, top=top)
