"""Immutable embedding sets backed by a line-oriented JSON file format.

One record per line:

    {"id": str, "category": str, "split": int|null, "role": "source"|"query",
     "domain": str|null, "vector": [number, ...]}

Files are UTF-8 with LF line endings. Vectors are stored as decimal text so
files stay diff-able; they parse to 64-bit floats and round-trip exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatchError,
    DuplicateIdError,
    EmptySetError,
    ParseError,
    ZeroVectorError,
)

ROLES = ("source", "query")

_FIELD_ORDER = ("id", "category", "split", "role", "domain", "vector")


@dataclass(frozen=True)
class EmbeddingRecord:
    id: str
    category: str
    split: int | None
    role: str
    domain: str | None
    vector: np.ndarray

    def __post_init__(self):
        if self.role not in ROLES:
            raise ParseError(f"record {self.id!r}: role must be one of {ROLES}, got {self.role!r}")
        vec = np.asarray(self.vector, dtype=np.float64)
        vec.setflags(write=False)
        object.__setattr__(self, "vector", vec)


@dataclass(frozen=True)
class EmbeddingSet:
    """A read-only collection of records sharing one vector dimension."""

    records: tuple[EmbeddingRecord, ...]
    dimension: int
    normalized: bool = False
    _by_id: dict = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if not self.records:
            raise EmptySetError("embedding set has no records")
        object.__setattr__(self, "_by_id", {r.id: r for r in self.records})

    def __len__(self) -> int:
        return len(self.records)

    def __contains__(self, record_id: str) -> bool:
        return record_id in self._by_id

    def get(self, record_id: str) -> EmbeddingRecord:
        return self._by_id[record_id]

    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def ids_with_role(self, role: str) -> list[str]:
        return [r.id for r in self.records if r.role == role]

    def matrix(self, ids: list[str]) -> np.ndarray:
        """Rows are the vectors of ``ids`` in the given order."""
        return np.stack([self._by_id[i].vector for i in ids])


def _parse_record(obj: dict, line_no: int) -> EmbeddingRecord:
    for key in ("id", "category", "role", "vector"):
        if key not in obj:
            raise ParseError(f"missing field {key!r}", line_no)
    if not isinstance(obj["id"], str) or not isinstance(obj["category"], str):
        raise ParseError("id and category must be strings", line_no)
    split = obj.get("split")
    if split is not None and not isinstance(split, int):
        raise ParseError("split must be an integer or null", line_no)
    domain = obj.get("domain")
    if domain is not None and not isinstance(domain, str):
        raise ParseError("domain must be a string or null", line_no)
    role = obj["role"]
    if role not in ROLES:
        raise ParseError(f"role must be one of {ROLES}, got {role!r}", line_no)
    vector = obj["vector"]
    if not isinstance(vector, list) or not vector:
        raise ParseError("vector must be a non-empty array of numbers", line_no)
    if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in vector):
        raise ParseError("vector entries must be numbers", line_no)
    return EmbeddingRecord(
        id=obj["id"],
        category=obj["category"],
        split=split,
        role=role,
        domain=domain,
        vector=np.array(vector, dtype=np.float64),
    )


def load_embeddings(path: str | Path) -> EmbeddingSet:
    """Parse an embedding file, validating ids and dimensions.

    Raises ParseError (with line number), DuplicateIdError,
    DimensionMismatchError or EmptySetError.
    """
    path = Path(path)
    records: list[EmbeddingRecord] = []
    seen: set[str] = set()
    dimension = None
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", line_no) from exc
            if not isinstance(obj, dict):
                raise ParseError("each line must be a JSON object", line_no)
            record = _parse_record(obj, line_no)
            if record.id in seen:
                raise DuplicateIdError(f"duplicate id {record.id!r} at line {line_no}")
            seen.add(record.id)
            if dimension is None:
                dimension = record.vector.shape[0]
            elif record.vector.shape[0] != dimension:
                raise DimensionMismatchError(
                    f"record {record.id!r} has dimension {record.vector.shape[0]}, "
                    f"expected {dimension} (line {line_no})"
                )
            records.append(record)
    if not records:
        raise EmptySetError(f"no records in {path}")
    return EmbeddingSet(records=tuple(records), dimension=dimension, normalized=False)


def save_embeddings(emb_set: EmbeddingSet, path: str | Path) -> None:
    """Write the set in the JSONL format accepted by load_embeddings.

    Numeric values are emitted with shortest round-trip formatting, so a
    load/save cycle is byte-stable.
    """
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for r in emb_set.records:
            obj = {
                "id": r.id,
                "category": r.category,
                "split": r.split,
                "role": r.role,
                "domain": r.domain,
                "vector": [float(x) for x in r.vector],
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def l2_normalize(emb_set: EmbeddingSet) -> EmbeddingSet:
    """Return a copy of the set with every vector scaled to unit length.

    Ordering and metadata are preserved. Raises ZeroVectorError naming the
    first record whose vector has zero norm.
    """
    new_records = []
    for r in emb_set.records:
        norm = float(np.linalg.norm(r.vector))
        if norm == 0.0:
            raise ZeroVectorError(f"record {r.id!r} has a zero vector")
        new_records.append(
            EmbeddingRecord(
                id=r.id,
                category=r.category,
                split=r.split,
                role=r.role,
                domain=r.domain,
                vector=r.vector / norm,
            )
        )
    return EmbeddingSet(records=tuple(new_records), dimension=emb_set.dimension, normalized=True)
