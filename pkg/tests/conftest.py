from __future__ import annotations

import json
from pathlib import Path

import pytest

from prompt_retrieval.oracle import SyntheticOracleParams
from prompt_retrieval.synthetic_bench import BenchParams, generate


@pytest.fixture()
def small_bench():
    """2 categories x (10 sources + 4 queries), 8+8 dims. Fast everywhere."""
    params = BenchParams(n_categories=2, n_source_per_cat=10, n_query_per_cat=4,
                         d_sem=8, d_sty=8, seed=7)
    emb_set, latents = generate(params)
    return params, emb_set, latents


@pytest.fixture()
def oracle_params():
    return SyntheticOracleParams()


@pytest.fixture()
def write_jsonl(tmp_path):
    def _write(lines, name="embeddings.jsonl"):
        path = tmp_path / name
        with path.open("w", encoding="utf-8") as fh:
            for line in lines:
                fh.write((json.dumps(line) if isinstance(line, dict) else line) + "\n")
        return path

    return _write


def record(id, vector, category="cat", split=None, role="source", domain=None):
    return {"id": id, "category": category, "split": split, "role": role,
            "domain": domain, "vector": vector}
