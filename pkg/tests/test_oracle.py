from __future__ import annotations

import itertools

import numpy as np
import pytest

from prompt_retrieval.errors import (
    BadMagicError,
    InvalidParamsError,
    ShapeMismatchError,
    SidecarMismatchError,
    UnknownIdError,
)
from prompt_retrieval.oracle import (
    PerformanceMatrix,
    Prompt,
    SyntheticOracleParams,
    build_performance_matrix,
    example_quality,
    load_performance_matrix,
    order_spread_bound,
    pair_noise,
    save_performance_matrix,
    synthetic_perf,
)
from prompt_retrieval.synthetic_bench import LatentEntry, LatentStore


def axis_latents(layout):
    """Hand-built store: layout maps id -> (sem axis index, sty axis index)."""
    entries = {}
    for name, (i, j) in layout.items():
        sem = np.zeros(4)
        sem[i] = 1.0
        sty = np.zeros(4)
        sty[j] = 1.0
        entries[name] = LatentEntry(sem=sem, sty=sty, category="c", domain="source")
    return LatentStore(entries=entries)


def exact_params(**overrides):
    defaults = dict(beta_sem=0.5, beta_style=0.5, eta=0.8, order_delta=0.0,
                    noise_sigma=0.0, seed=0)
    defaults.update(overrides)
    return SyntheticOracleParams(**defaults)


def test_prompt_validation():
    with pytest.raises(ValueError):
        Prompt(example_ids=(), query_id="q")
    with pytest.raises(ValueError):
        Prompt(example_ids=("a", "a"), query_id="q")
    with pytest.raises(ValueError):
        Prompt(example_ids=("a", "q"), query_id="q")


@pytest.mark.parametrize("kwargs", [
    dict(beta_sem=0.7, beta_style=0.7),
    dict(beta_sem=-0.1, beta_style=1.1),
    dict(eta=0.0),
    dict(eta=1.5),
    dict(order_delta=1.0),
    dict(noise_sigma=-0.1),
])
def test_params_validation(kwargs):
    with pytest.raises(InvalidParamsError):
        SyntheticOracleParams(**kwargs)


def test_single_perfect_example_scores_eta():
    latents = axis_latents({"q": (0, 0), "e": (0, 0)})
    perf = synthetic_perf(Prompt(("e",), "q"), latents, exact_params())
    assert perf == pytest.approx(0.8, abs=1e-15)


def test_single_orthogonal_example_scores_zero():
    latents = axis_latents({"q": (0, 0), "e": (1, 1)})
    perf = synthetic_perf(Prompt(("e",), "q"), latents, exact_params())
    assert perf == 0.0


def test_two_perfect_examples_noisy_or():
    latents = axis_latents({"q": (0, 0), "e1": (0, 0), "e2": (0, 0)})
    one = synthetic_perf(Prompt(("e1",), "q"), latents, exact_params())
    two = synthetic_perf(Prompt(("e1", "e2"), "q"), latents, exact_params())
    assert two == pytest.approx(0.96, abs=1e-12)
    assert two > one  # more perfect examples help


def test_unknown_id_rejected():
    latents = axis_latents({"q": (0, 0)})
    with pytest.raises(UnknownIdError):
        synthetic_perf(Prompt(("missing",), "q"), latents, exact_params())


def test_noise_is_keyed_not_streamed():
    a = pair_noise(3, "q1", "e1", 0.1)
    b = pair_noise(3, "q1", "e2", 0.1)
    assert a != b
    assert pair_noise(3, "q1", "e1", 0.1) == a  # call order independent
    assert pair_noise(4, "q1", "e1", 0.1) != a
    assert pair_noise(3, "q1", "e1", 0.0) == 0.0


def test_outputs_in_unit_interval(small_bench, oracle_params):
    _, emb_set, latents = small_bench
    sources = emb_set.ids_with_role("source")
    rng = np.random.default_rng(0)
    for query_id in emb_set.ids_with_role("query"):
        picks = rng.choice(sources, size=4, replace=False)
        perf = synthetic_perf(Prompt(tuple(picks), query_id), latents, oracle_params)
        assert 0.0 <= perf <= 1.0


def test_noisy_or_monotone_in_examples(small_bench):
    _, emb_set, latents = small_bench
    params = SyntheticOracleParams(order_delta=0.0)
    sources = emb_set.ids_with_role("source")
    rng = np.random.default_rng(1)
    for query_id in emb_set.ids_with_role("query"):
        order = list(rng.permutation(sources))[:6]
        previous = 0.0
        for k in range(1, len(order) + 1):
            perf = synthetic_perf(Prompt(tuple(order[:k]), query_id), latents, params)
            assert perf >= previous
            previous = perf


def test_exact_order_invariance_at_zero_delta(small_bench):
    _, emb_set, latents = small_bench
    params = SyntheticOracleParams(order_delta=0.0)
    query_id = emb_set.ids_with_role("query")[0]
    examples = emb_set.ids_with_role("source")[:3]
    values = {
        synthetic_perf(Prompt(tuple(perm), query_id), latents, params)
        for perm in itertools.permutations(examples)
    }
    assert len(values) == 1


def test_order_spread_within_analytic_bound(small_bench):
    _, emb_set, latents = small_bench
    params = SyntheticOracleParams(order_delta=0.15)
    query_id = emb_set.ids_with_role("query")[0]
    examples = tuple(emb_set.ids_with_role("source")[:3])
    prompt = Prompt(examples, query_id)
    values = [
        synthetic_perf(Prompt(tuple(perm), query_id), latents, params)
        for perm in itertools.permutations(examples)
    ]
    assert max(values) - min(values) <= order_spread_bound(prompt, latents, params) + 1e-15


def test_position_decay_orders_examples(small_bench):
    # With order_delta > 0 a good example late in the prompt contributes less.
    latents = axis_latents({"q": (0, 0), "good": (0, 0), "bad": (1, 1)})
    params = exact_params(order_delta=0.5)
    good_first = synthetic_perf(Prompt(("good", "bad"), "q"), latents, params)
    good_last = synthetic_perf(Prompt(("bad", "good"), "q"), latents, params)
    assert good_first > good_last


def test_matrix_matches_direct_calls(small_bench, oracle_params):
    _, emb_set, latents = small_bench
    matrix = build_performance_matrix(emb_set, latents, oracle_params)
    assert matrix.metric_name == "synthetic"
    assert matrix.higher_is_better
    for r, query_id in enumerate(matrix.query_ids[:2]):
        for c, source_id in enumerate(matrix.source_ids[:5]):
            direct = synthetic_perf(Prompt((source_id,), query_id), latents, oracle_params)
            assert matrix.values[r, c] == pytest.approx(direct, abs=1e-12)


def test_matrix_symmetric_without_noise(small_bench):
    _, emb_set, latents = small_bench
    params = SyntheticOracleParams(noise_sigma=0.0)
    matrix = build_performance_matrix(emb_set, latents, params, rows="source")
    assert matrix.query_ids == matrix.source_ids
    np.testing.assert_allclose(matrix.values, matrix.values.T, rtol=0, atol=1e-12)


def test_matrix_deterministic_across_runs(small_bench, oracle_params):
    _, emb_set, latents = small_bench
    a = build_performance_matrix(emb_set, latents, oracle_params, rows="source")
    b = build_performance_matrix(emb_set, latents, oracle_params, rows="source")
    np.testing.assert_array_equal(a.values, b.values)


def test_matrix_round_trip(tmp_path, small_bench, oracle_params):
    _, emb_set, latents = small_bench
    matrix = build_performance_matrix(emb_set, latents, oracle_params)
    path = tmp_path / "perf.bin"
    save_performance_matrix(matrix, path)
    loaded = load_performance_matrix(path)
    assert loaded.query_ids == matrix.query_ids
    assert loaded.source_ids == matrix.source_ids
    np.testing.assert_array_equal(loaded.values,
                                  matrix.values.astype(np.float32).astype(np.float64))
    # a second save of the loaded matrix is byte-identical: f32 is lossless
    # once quantized
    again = tmp_path / "again.bin"
    save_performance_matrix(loaded, again)
    assert path.read_bytes() == again.read_bytes()


def test_truncated_payload_rejected(tmp_path, small_bench, oracle_params):
    _, emb_set, latents = small_bench
    matrix = build_performance_matrix(emb_set, latents, oracle_params)
    path = tmp_path / "perf.bin"
    save_performance_matrix(matrix, path)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ShapeMismatchError):
        load_performance_matrix(path)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "perf.bin"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
    with pytest.raises(BadMagicError):
        load_performance_matrix(path)


def test_sidecar_count_mismatch_rejected(tmp_path, small_bench, oracle_params):
    import json

    _, emb_set, latents = small_bench
    matrix = build_performance_matrix(emb_set, latents, oracle_params)
    path = tmp_path / "perf.bin"
    save_performance_matrix(matrix, path)
    sidecar_path = tmp_path / "perf.bin.json"
    sidecar = json.loads(sidecar_path.read_text())
    sidecar["queries"] = sidecar["queries"][:-1]
    sidecar_path.write_text(json.dumps(sidecar))
    with pytest.raises(SidecarMismatchError):
        load_performance_matrix(path)


def test_subsample_cap_masks_cells(small_bench, oracle_params, tmp_path):
    _, emb_set, latents = small_bench
    matrix = build_performance_matrix(emb_set, latents, oracle_params,
                                      rows="source", subsample_cap=4)
    assert matrix.subsample_cap == 4
    finite_per_row = np.isfinite(matrix.values).sum(axis=1)
    assert np.all(finite_per_row == 4)
    for r, row_id in enumerate(matrix.query_ids):
        c = matrix.source_ids.index(row_id)
        assert not np.isfinite(matrix.values[r, c])
    path = tmp_path / "capped.bin"
    save_performance_matrix(matrix, path)
    loaded = load_performance_matrix(path)
    assert loaded.subsample_cap == 4
    np.testing.assert_array_equal(np.isfinite(loaded.values), np.isfinite(matrix.values))


def test_nonfinite_values_rejected_without_cap():
    with pytest.raises(InvalidParamsError):
        PerformanceMatrix(query_ids=("a",), source_ids=("b",),
                          values=np.array([[np.nan]]), metric_name="m",
                          higher_is_better=True)


def test_quality_matches_matrix_cells(small_bench, oracle_params):
    _, emb_set, latents = small_bench
    matrix = build_performance_matrix(emb_set, latents, oracle_params)
    q = matrix.query_ids[0]
    s = matrix.source_ids[3]
    quality = example_quality(latents, oracle_params, q, s)
    assert matrix.values[0, 3] == pytest.approx(oracle_params.eta * quality, abs=1e-12)
