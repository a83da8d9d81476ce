"""Linear projection head applied to embeddings before scoring."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatchError, ParseError


@dataclass
class ProjectionHead:
    """A learnable map ``v -> W v + bias`` (bias optional).

    Serialized as JSON with row-major weights; float64 values survive the
    round trip losslessly.
    """

    d_in: int
    d_out: int
    weights: np.ndarray
    bias: np.ndarray | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(self.d_out, self.d_in)
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.float64).reshape(self.d_out)
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("head weights must be finite")
        if self.bias is not None and not np.all(np.isfinite(self.bias)):
            raise ValueError("head bias must be finite")

    @classmethod
    def identity(cls, dim: int) -> "ProjectionHead":
        return cls(d_in=dim, d_out=dim, weights=np.eye(dim), bias=None)

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape[-1] != self.d_in:
            raise DimensionMismatchError(
                f"head expects dimension {self.d_in}, got {v.shape[-1]}"
            )
        out = v @ self.weights.T
        if self.bias is not None:
            out = out + self.bias
        return out

    def save(self, path: str | Path) -> None:
        obj = {
            "d_in": self.d_in,
            "d_out": self.d_out,
            "weights": [float(x) for x in self.weights.ravel()],
            "bias": None if self.bias is None else [float(x) for x in self.bias],
        }
        Path(path).write_text(json.dumps(obj) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ProjectionHead":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid head file: {exc.msg}") from exc
        for key in ("d_in", "d_out", "weights"):
            if key not in obj:
                raise ParseError(f"head file missing field {key!r}")
        d_in, d_out = obj["d_in"], obj["d_out"]
        weights = np.array(obj["weights"], dtype=np.float64)
        if weights.size != d_in * d_out:
            raise DimensionMismatchError(
                f"head file has {weights.size} weights, expected {d_in * d_out}"
            )
        bias = obj.get("bias")
        return cls(
            d_in=d_in,
            d_out=d_out,
            weights=weights.reshape(d_out, d_in),
            bias=None if bias is None else np.array(bias, dtype=np.float64),
        )
