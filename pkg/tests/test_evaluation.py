from __future__ import annotations

import json

import numpy as np
import pytest

from prompt_retrieval.errors import InvalidParamsError, NoCandidatesError, ShapeMismatchError
from prompt_retrieval.evaluation import (
    SelectionMethod,
    eval_shift,
    load_grid,
    miou,
    mse,
    run_experiment,
    select_prompt,
    sweep_k,
    sweep_order,
    sweep_size,
)
from prompt_retrieval.oracle import SyntheticOracleParams
from prompt_retrieval.projection import ProjectionHead
from prompt_retrieval.similarity import Metric
from prompt_retrieval.synthetic_bench import generate_shifted
from prompt_retrieval.trainer import TrainConfig


# -- metrics ---------------------------------------------------------------


def test_miou_identical_masks():
    mask = np.array([[1, 0], [1, 1]])
    assert miou(mask, mask) == 1.0


def test_miou_disjoint_masks():
    assert miou(np.array([[1, 0]]), np.array([[0, 1]])) == 0.0


def test_miou_one_third():
    pred = np.array([[1, 1, 0]])
    gt = np.array([[0, 1, 1]])
    assert miou(pred, gt) == pytest.approx(1.0 / 3.0)


def test_miou_both_empty_is_one():
    empty = np.zeros((2, 2))
    assert miou(empty, empty) == 1.0


def test_miou_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        miou(np.zeros((2, 2)), np.zeros((2, 3)))


def test_miou_requires_binary():
    with pytest.raises(InvalidParamsError):
        miou(np.array([[0.5]]), np.array([[1.0]]))


def test_miou_symmetric():
    rng = np.random.default_rng(0)
    a = (rng.random((5, 5)) > 0.5).astype(float)
    b = (rng.random((5, 5)) > 0.5).astype(float)
    assert miou(a, b) == miou(b, a)


def test_mse_identical():
    grid = np.array([[0.2, 0.8]])
    assert mse(grid, grid) == 0.0


def test_mse_constant_offset():
    assert mse(np.full((3, 3), 0.75), np.full((3, 3), 0.25)) == pytest.approx(0.25)


def test_mse_two_cells():
    assert mse(np.array([[0.0, 1.0]]), np.array([[1.0, 1.0]])) == pytest.approx(0.5)


def test_mse_symmetric_and_shape_checked():
    a = np.array([[0.1, 0.9]])
    b = np.array([[0.4, 0.2]])
    assert mse(a, b) == mse(b, a)
    with pytest.raises(ShapeMismatchError):
        mse(a, np.array([[0.1]]))


def test_grid_file_round_trip(tmp_path):
    path = tmp_path / "grid.json"
    path.write_text(json.dumps({"shape": [2, 2], "data": [0.0, 1.0, 1.0, 0.0]}))
    grid = load_grid(path)
    np.testing.assert_array_equal(grid, [[0.0, 1.0], [1.0, 0.0]])


def test_grid_file_shape_mismatch(tmp_path):
    path = tmp_path / "grid.json"
    path.write_text(json.dumps({"shape": [2, 2], "data": [0.0, 1.0]}))
    with pytest.raises(ShapeMismatchError):
        load_grid(path)


# -- selection -------------------------------------------------------------


def test_unsup_selects_identical_candidate(small_bench):
    _, emb_set, _ = small_bench
    query_id = emb_set.ids_with_role("query")[0]
    prompt = select_prompt(SelectionMethod.unsup(Metric.COSINE), emb_set, query_id, 1)
    from prompt_retrieval.similarity import retrieve_topk

    assert prompt.example_ids == tuple(retrieve_topk(emb_set, query_id, 1).ids())


def test_random_prompt_deterministic(small_bench):
    _, emb_set, _ = small_bench
    query_id = emb_set.ids_with_role("query")[0]
    method = SelectionMethod.random()
    a = select_prompt(method, emb_set, query_id, 3, seed=9)
    b = select_prompt(method, emb_set, query_id, 3, seed=9)
    assert a == b
    c = select_prompt(method, emb_set, query_id, 3, seed=10)
    assert a != c  # different seed, different draw on this pool


def test_within_class_random_stays_in_category(small_bench):
    _, emb_set, _ = small_bench
    for query_id in emb_set.ids_with_role("query"):
        category = emb_set.get(query_id).category
        prompt = select_prompt(SelectionMethod.random(), emb_set, query_id, 4, seed=1)
        assert all(emb_set.get(e).category == category for e in prompt.example_ids)


def test_unconstrained_random_can_cross_categories(small_bench):
    _, emb_set, _ = small_bench
    method = SelectionMethod.random(within_class=False)
    crossed = False
    for query_id in emb_set.ids_with_role("query"):
        category = emb_set.get(query_id).category
        prompt = select_prompt(method, emb_set, query_id, 8, seed=3)
        crossed |= any(emb_set.get(e).category != category for e in prompt.example_ids)
    assert crossed


def test_within_class_requires_same_category_source(write_jsonl):
    from prompt_retrieval.embedding_store import load_embeddings

    from .conftest import record

    emb_set = load_embeddings(write_jsonl([
        record("q", [1.0, 0.0], category="cats", role="query"),
        record("s", [0.0, 1.0], category="dogs"),
    ]))
    with pytest.raises(NoCandidatesError):
        select_prompt(SelectionMethod.random(), emb_set, "q", 1)


def test_sup_with_identity_head_equals_unsup(small_bench):
    _, emb_set, _ = small_bench
    head = ProjectionHead.identity(emb_set.dimension)
    for query_id in emb_set.ids_with_role("query"):
        sup = select_prompt(SelectionMethod.sup(head), emb_set, query_id, 4)
        unsup = select_prompt(SelectionMethod.unsup(), emb_set, query_id, 4)
        assert sup == unsup


def test_sup_requires_head():
    with pytest.raises(InvalidParamsError):
        SelectionMethod(kind="sup")


# -- reports ---------------------------------------------------------------


def test_empty_method_list_gives_header_only(small_bench, oracle_params):
    _, emb_set, latents = small_bench
    report = run_experiment([], emb_set, latents, oracle_params)
    assert report.to_csv_string() == (
        "method,sweep_axis,sweep_value,domain,split,mean_perf,std_perf,n_queries,seed\n"
    )


def test_report_deterministic_bytes(small_bench, oracle_params):
    _, emb_set, latents = small_bench
    methods = [SelectionMethod.random(), SelectionMethod.unsup()]
    a = run_experiment(methods, emb_set, latents, oracle_params, trials=1, seed=4)
    b = run_experiment(methods, emb_set, latents, oracle_params, trials=1, seed=4)
    assert a.to_csv_string() == b.to_csv_string()


def test_report_row_shape(small_bench, oracle_params):
    _, emb_set, latents = small_bench
    report = run_experiment([SelectionMethod.random(), SelectionMethod.unsup()],
                            emb_set, latents, oracle_params, trials=3, seed=0)
    assert [r.method for r in report.rows] == ["Random", "UnsupPR"]
    for row in report.rows:
        assert row.n_queries == len(emb_set.ids_with_role("query"))
        assert row.domain == "source"
        assert 0.0 <= row.mean_perf <= 1.0
    assert report.rows[0].std_perf is not None  # random with trials > 1
    assert report.rows[1].std_perf is None      # deterministic method


def test_sweep_size_shape_and_retraining(small_bench, oracle_params):
    _, emb_set, latents = small_bench
    config = TrainConfig(epochs=5)
    report = sweep_size(emb_set, latents, oracle_params, config,
                        fractions=[0.5, 1.0], trials=2, seed=0)
    assert len(report.rows) == 6  # 2 fractions x 3 methods
    assert {r.sweep_value for r in report.rows} == {"0.5", "1.0"}
    assert all(r.sweep_axis == "size" for r in report.rows)


def test_sweep_size_validates_fraction(small_bench, oracle_params):
    _, emb_set, latents = small_bench
    with pytest.raises(InvalidParamsError):
        sweep_size(emb_set, latents, oracle_params, TrainConfig(epochs=1),
                   fractions=[0.0])


def test_sweep_k_shape_and_monotone_at_zero_delta(small_bench):
    _, emb_set, latents = small_bench
    params = SyntheticOracleParams(order_delta=0.0)
    config = TrainConfig(epochs=5)
    report = sweep_k(emb_set, latents, params, config, k_values=[1, 2, 3], trials=2)
    assert len(report.rows) == 9
    for method in ("Random", "UnsupPR", "SupPR"):
        means = [r.mean_perf for r in report.rows if r.method == method]
        assert means == sorted(means)


def test_sweep_order_std_zero_without_order_effect(small_bench):
    _, emb_set, latents = small_bench
    params = SyntheticOracleParams(order_delta=0.0)
    report = sweep_order(emb_set, latents, params, TrainConfig(epochs=5), k=3)
    assert len(report.rows) == 3
    assert all(r.std_perf == 0.0 for r in report.rows)


def test_sweep_order_reports_spread_with_order_effect(small_bench):
    _, emb_set, latents = small_bench
    params = SyntheticOracleParams(order_delta=0.3)
    report = sweep_order(emb_set, latents, params, TrainConfig(epochs=5), k=3)
    assert all(r.std_perf is not None and r.std_perf > 0.0 for r in report.rows)


def test_eval_shift_reports_target_domain(small_bench, oracle_params):
    params, emb_set, latents = small_bench
    target_set, target_latents = generate_shifted(params, latents, 4.0)
    report = eval_shift(emb_set, latents, target_set, target_latents,
                        oracle_params, TrainConfig(epochs=5), trials=2)
    assert [r.method for r in report.rows] == ["Random", "UnsupPR", "SupPR"]
    assert all(r.domain == "target" for r in report.rows)
    assert all(r.sweep_axis == "shift" for r in report.rows)


def test_threads_do_not_change_results(small_bench, oracle_params):
    _, emb_set, latents = small_bench
    methods = [SelectionMethod.random(), SelectionMethod.unsup()]
    serial = run_experiment(methods, emb_set, latents, oracle_params, trials=3, seed=2)
    threaded = run_experiment(methods, emb_set, latents, oracle_params, trials=3, seed=2,
                              threads=4)
    assert serial.to_csv_string() == threaded.to_csv_string()
