import json
from importlib import resources

import numpy as np
import pytest
from hypothesis import given, strategies as st

from insider_forest.dataset import generate_synthetic
from insider_forest.errors import BadK, ConfigError, EmptyInput, LengthMismatch, NoPositiveClass, SingleClass
from insider_forest.evaluate import (
    ConfusionMatrix,
    SearchSpace,
    confusion_matrix,
    cross_val_score,
    kfold_split,
    metrics,
    pr_auc,
    random_search,
    roc_auc,
    summarize,
)
from insider_forest.rng import derive_seed

from oracles import auc_pairs, average_precision_sweep

L, U = 0, 1


def test_confusion_hand_case():
    assert confusion_matrix([L, L, U, U], [L, U, U, U]) == ConfusionMatrix(tp=1, fn=1, fp=0, tn=2)


def test_confusion_degenerate_predictors():
    assert confusion_matrix([L, U, U], [L, U, U]) == ConfusionMatrix(1, 0, 0, 2)
    assert confusion_matrix([L, L, L], [U, U, U]) == ConfusionMatrix(0, 3, 0, 0)
    with pytest.raises(LengthMismatch):
        confusion_matrix([L], [L, U])
    with pytest.raises(EmptyInput):
        confusion_matrix([], [])


def test_metrics_hand_case():
    r = metrics(ConfusionMatrix(1, 1, 0, 2))
    assert (r.tpr, r.fpr, r.tnr, r.fnr, r.acc, r.pre) == (0.5, 0.0, 1.0, 0.5, 0.75, 1.0)


def test_precision_undefined_without_lawful_calls():
    assert metrics(ConfusionMatrix(0, 2, 0, 3)).pre is None


def test_published_benchmark_column_is_consistent():
    raw = json.loads(resources.files("insider_forest").joinpath("data/reference_tables.json").read_text())
    rows = raw["benchmarks"]["rows"]
    assert rows["TPR"][-1] == 77.30 and rows["FNR"][-1] == 22.70
    assert rows["TPR"][-1] + rows["FNR"][-1] == pytest.approx(100.0, abs=1e-9)


counts = st.integers(0, 10**6)


@given(counts, counts, counts, counts)
def test_metric_identities(tp, fn, fp, tn):
    if tp + fn + fp + tn == 0:
        return
    r = metrics(ConfusionMatrix(tp, fn, fp, tn))
    if tp + fn:
        assert abs(r.tpr + r.fnr - 1) <= 1e-12
    if fp + tn:
        assert abs(r.fpr + r.tnr - 1) <= 1e-12
    assert r.acc == (tp + tn) / (tp + fn + fp + tn)
    if tp + fp:
        assert abs(r.pre * (tp + fp) - tp) <= 1e-12 * max(1, tp)


def test_auc_and_pr_four_points():
    y, s = [U, U, L, L], [0.9, 0.4, 0.6, 0.1]
    assert roc_auc(y, s) == 0.75
    assert pr_auc(y, s) == pytest.approx(0.5 + 0.5 * 2 / 3, abs=1e-15)


def test_auc_edge_cases():
    assert roc_auc([L, U, L, U], [0.1, 0.9, 0.2, 0.8]) == 1.0
    assert roc_auc([L, U, L, U], [0.3] * 4) == 0.5
    with pytest.raises(SingleClass):
        roc_auc([U, U], [0.1, 0.2])


def test_pr_baselines():
    assert pr_auc([L, U, L, U], [0.1, 0.9, 0.2, 0.8]) == 1.0
    assert pr_auc([L, U, L, L], [0.5] * 4) == 0.25
    with pytest.raises(NoPositiveClass):
        pr_auc([L, L], [0.1, 0.2])


scored = st.lists(st.tuples(st.integers(0, 1), st.integers(0, 10).map(lambda v: v / 10)), min_size=2, max_size=200)


@given(scored)
def test_auc_matches_pair_counting(rows):
    y = [r[0] for r in rows]
    s = [r[1] for r in rows]
    if len(set(y)) < 2:
        return
    assert roc_auc(y, s) == pytest.approx(auc_pairs(y, s), abs=1e-12)


@given(scored)
def test_pr_auc_matches_threshold_sweep(rows):
    y = [r[0] for r in rows]
    s = [r[1] for r in rows]
    if U not in y:
        return
    assert pr_auc(y, s) == pytest.approx(average_precision_sweep(y, s), abs=1e-12)


def test_kfold_sizes():
    assert [f.size for f in kfold_split(10, 5, 0)] == [2] * 5
    assert [f.size for f in kfold_split(11, 5, 0)] == [3, 2, 2, 2, 2]
    with pytest.raises(BadK):
        kfold_split(3, 5, 0)


@given(st.integers(2, 60), st.integers(2, 10), st.integers(0, 2**32 - 1))
def test_kfold_partitions(n, k, seed):
    if k > n:
        return
    folds = kfold_split(n, k, seed)
    assert sorted(np.concatenate(folds).tolist()) == list(range(n))
    assert max(f.size for f in folds) - min(f.size for f in folds) <= 1
    assert all(np.array_equal(a, b) for a, b in zip(folds, kfold_split(n, k, seed)))


def test_search_space_validation():
    with pytest.raises(ConfigError):
        SearchSpace(ntrees=(10, 5))
    with pytest.raises(ConfigError):
        SearchSpace.from_dict({"depth": [1, 2]})
    assert SearchSpace.from_dict(SearchSpace().to_dict()) == SearchSpace()


@given(st.integers(0, 2**32 - 1))
def test_draws_stay_in_range(seed):
    space = SearchSpace()
    p = space.draw(np.random.default_rng(seed), 0)
    assert 100 <= p.ntrees <= 1030
    assert 0.35 <= p.mtry_fraction <= 0.95
    assert 2 <= p.max_depth <= 18
    assert 0.5 < p.sample_rate <= 1.0


def test_collapsed_space_returns_the_point():
    d = generate_synthetic(120, 5, 2, 1.5, seed=1)
    space = SearchSpace(ntrees=(30, 30), mtry_fraction=(0.5, 0.5), max_depth=(4, 4), sample_rate=(0.8, 0.8),
                        n_iterations=1, k_folds=3)
    params, score, trials = random_search(space, d, seed=9)
    assert (params.ntrees, params.mtry_fraction, params.max_depth, params.sample_rate) == (30, 0.5, 4, 0.8)
    folds = kfold_split(d.n_rows, 3, derive_seed(9, 0))
    assert score == cross_val_score(d, params, folds)
    assert len(trials) == 1


def test_default_space_on_separable_data():
    d = generate_synthetic(400, 25, 5, 6.0, seed=2)
    _, score, trials = random_search(SearchSpace(), d, seed=3)
    assert score >= 0.95
    assert len(trials) == 5


def test_search_keeps_earlier_draw_on_tie():
    d = generate_synthetic(200, 10, 5, 6.0, seed=4)
    space = SearchSpace(ntrees=(20, 40), n_iterations=3, k_folds=3)
    params, score, trials = random_search(space, d, seed=5)
    first_best = next(t for t in trials if t.score == score)
    assert params == first_best.params


def test_auc_criterion():
    d = generate_synthetic(200, 6, 2, 1.0, seed=6)
    space = SearchSpace(ntrees=(20, 30), n_iterations=2, k_folds=3)
    _, score, _ = random_search(space, d, seed=1, criterion="auc")
    assert 0.5 < score <= 1.0


def test_summarize():
    s = summarize([1.0, 2.0, 3.0, None])
    assert s == {"mean": 2.0, "std": 1.0, "sem": 1.0 / np.sqrt(3), "n": 3}
    assert summarize([])["n"] == 0
