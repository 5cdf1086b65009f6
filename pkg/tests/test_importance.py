import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.cluster.hierarchy import linkage
from scipy.spatial.distance import squareform

from insider_forest.dataset import Dataset, FeatureSchema, generate_synthetic, train_test_split
from insider_forest.errors import BadCorrelationMatrix
from insider_forest.forest import HyperParams, fit_forest, predict_batch
from insider_forest.importance import (
    IMPORTANCE_HEADER,
    cluster_representatives,
    correlation_distance,
    cut_clusters,
    decorrelated_permutation_importance,
    largest_gap_threshold,
    mdi_report,
    permutation_importance,
    ward_cluster,
)
from insider_forest.linalg import spearman_correlation
from insider_forest.rng import generator


def random_corr(seed, dim):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((3 * dim, dim)) @ rng.standard_normal((dim, dim))
    return spearman_correlation(z)


def dataset(x, y, names=None):
    names = names or [f"f{i}" for i in range(x.shape[1])]
    return Dataset(x, y, FeatureSchema.numeric(names))


def test_duplicates_merge_first_at_zero():
    corr = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    a, b, h, size = ward_cluster(corr).merges[0]
    assert {a, b} == {0, 1} and h == 0.0 and size == 2


def test_equidistant_leaves_hand_lance_williams():
    # d^2({0,1}, 2) = ((1+1)*1 + (1+1)*1 - 1*1) / 3 = 1
    assert ward_cluster(np.eye(3)).heights.tolist() == [1.0, 1.0]


@given(st.integers(0, 2**32 - 1), st.integers(2, 12), st.booleans())
def test_ward_matches_scipy(seed, dim, signed):
    corr = random_corr(seed, dim)
    dend = ward_cluster(corr, signed=signed)
    ref = linkage(squareform(correlation_distance(corr, signed), checks=False), method="ward")
    np.testing.assert_allclose(np.sort(dend.heights), np.sort(ref[:, 2]), atol=1e-10)
    assert np.all(np.diff(dend.heights) >= -1e-12)


def test_four_planted_groups_recovered():
    rng = np.random.default_rng(0)
    latent = rng.standard_normal((500, 4))
    x = np.repeat(latent, 3, axis=1) + 0.3 * rng.standard_normal((500, 12))
    corr = spearman_correlation(x)
    dend = ward_cluster(corr)
    labels = cut_clusters(dend, largest_gap_threshold(dend))
    assert labels.tolist() == [0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3]


def test_representatives_extremes_and_ties():
    corr = random_corr(1, 6)
    dend = ward_cluster(corr)
    assert cluster_representatives(dend, corr, 0.0) == list(range(6))
    assert len(cluster_representatives(dend, corr, dend.heights.max() + 1)) == 1
    twin = np.array([[1.0, 1.0, 0.1], [1.0, 1.0, 0.1], [0.1, 0.1, 1.0]])
    assert cluster_representatives(ward_cluster(twin), twin, 0.5) == [0, 2]


@given(st.integers(0, 2**32 - 1), st.floats(0, 2), st.floats(0, 2))
def test_representatives_shrink_with_threshold(seed, t1, t2):
    corr = random_corr(seed, 8)
    dend = ward_cluster(corr)
    lo, hi = sorted((t1, t2))
    assert len(cluster_representatives(dend, corr, hi)) <= len(cluster_representatives(dend, corr, lo))


def test_bad_correlation_matrix():
    with pytest.raises(BadCorrelationMatrix):
        ward_cluster(np.array([[2.0, 0.0], [0.0, 1.0]]))
    with pytest.raises(BadCorrelationMatrix):
        ward_cluster(np.array([[1.0, 1.5], [1.5, 1.0]]))


def test_dendrogram_json():
    dend = ward_cluster(np.eye(3))
    raw = json.loads(dend.to_json(["a", "b", "c"]))
    assert raw["leaf_count"] == 3 and raw["labels"] == ["a", "b", "c"] and len(raw["merges"]) == 2


def test_unused_feature_scores_exactly_zero():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((200, 3))
    y = (x[:, 0] > 0).astype(int)
    d = dataset(x, y)
    model = fit_forest(d, HyperParams(ntrees=10, max_depth=1, mtry_fraction=1.0, seed=1))
    rep = permutation_importance(model, d, n_repeats=5, seed=0)
    assert np.all(rep.samples[1:] == 0.0)


def test_label_copy_dominates():
    d = generate_synthetic(600, 6, 2, 2.0, seed=3)
    x = np.column_stack([d.x, d.y.astype(float)])
    d = dataset(x, d.y)
    train, test = train_test_split(d, 0.8, seed=1)
    model = fit_forest(train, HyperParams(ntrees=50, mtry_fraction=1.0, seed=2))
    base = np.mean(predict_batch(model, test.x)[0] == test.y)
    rep = permutation_importance(model, test, n_repeats=10, seed=4)
    assert rep.ranking()[0] == 6
    assert rep.scores[6] == pytest.approx(base - 0.5, abs=0.1)


def test_noise_feature_near_zero():
    d = generate_synthetic(800, 6, 3, 1.0, seed=5)
    train, test = train_test_split(d, 0.8, seed=2)
    model = fit_forest(train, HyperParams(ntrees=100, seed=3))
    rep = permutation_importance(model, test, n_repeats=10, seed=1)
    # pooled over the noise columns; a single column misses a 2-sigma band about 1 time in 20
    noise = rep.samples[3:].ravel()
    assert abs(noise.mean()) <= 2 * noise.std(ddof=1)


def test_permutation_reproducible():
    d = generate_synthetic(200, 4, 2, 1.0, seed=6)
    model = fit_forest(d, HyperParams(ntrees=20, seed=1))
    a = permutation_importance(model, d, n_repeats=1, seed=7)
    b = permutation_importance(model, d, n_repeats=1, seed=7)
    np.testing.assert_array_equal(a.samples, b.samples)


def test_report_csv_rows():
    d = generate_synthetic(200, 4, 2, 1.0, seed=7)
    rep = mdi_report(fit_forest(d, HyperParams(ntrees=20, seed=1)), d.names)
    rows = rep.csv_rows()
    assert len(IMPORTANCE_HEADER) == len(rows[0]) == 6
    assert [r[0] for r in rows] == ["1", "2", "3", "4"]
    assert rows[0][2:4] == ["mdi", "train"]


def test_decorrelated_with_independent_features_equals_plain():
    d = generate_synthetic(400, 5, 2, 1.0, seed=8)
    train, test = train_test_split(d, 0.8, seed=3)
    params = HyperParams(ntrees=30, seed=4)
    res = decorrelated_permutation_importance(train, test, params, threshold=0.5, n_repeats=3, seed=2)
    assert res.representatives == list(range(5))
    plain = permutation_importance(fit_forest(train, params), test, n_repeats=3, seed=2)
    np.testing.assert_array_equal(res.report.scores, plain.scores)


def test_decorrelated_single_feature_model():
    d = generate_synthetic(300, 4, 2, 1.0, seed=9)
    train, test = train_test_split(d, 0.8, seed=4)
    res = decorrelated_permutation_importance(train, test, HyperParams(ntrees=20, seed=1), threshold=10.0,
                                              n_repeats=2, seed=3)
    assert len(res.representatives) == 1
    sub = test.select_columns(res.representatives)
    base = np.mean(predict_batch(res.model, sub.x)[0] == sub.y)
    drops = []
    for r in range(2):
        xp = sub.x.copy()
        xp[:, 0] = xp[generator(3, 0, r).permutation(sub.n_rows), 0]
        drops.append(base - np.mean(predict_batch(res.model, xp)[0] == sub.y))
    assert res.report.scores[0] == pytest.approx(np.mean(drops), abs=1e-15)


def test_duplicate_shares_then_concentrates():
    d = generate_synthetic(1500, 10, 3, 1.5, correlated_groups=1, seed=10)
    train, test = train_test_split(d, 0.8, seed=5)
    params = HyperParams(ntrees=200, seed=6)
    before = permutation_importance(fit_forest(train, params), test, n_repeats=10, seed=1)
    res = decorrelated_permutation_importance(train, test, params, threshold=0.5, n_repeats=10, seed=1)
    kept = [j for j in res.representatives if j in (0, 3)]
    assert len(kept) == 1
    after = res.report.scores[res.representatives.index(kept[0])]
    assert after > max(before.scores[0], before.scores[3])


def test_mdi_favours_high_cardinality_noise():
    rng = np.random.default_rng(11)
    n = 1000
    y = rng.integers(0, 2, n)
    flips = lambda p: np.where(rng.random(n) < p, 1 - y, y)  # noqa: E731
    x = np.column_stack([flips(0.2), flips(0.3), rng.standard_normal(n)]).astype(float)
    d = dataset(x, y, ["binary_strong", "binary_weak", "continuous_noise"])
    train, test = train_test_split(d, 0.8, seed=6)
    model = fit_forest(train, HyperParams(ntrees=200, seed=7))
    mdi = mdi_report(model, d.names)
    perm = permutation_importance(model, test, n_repeats=10, seed=2)
    assert mdi.scores[2] > min(mdi.scores[0], mdi.scores[1])
    assert perm.ranking()[0] in (0, 1)
    assert perm.scores[2] < perm.scores[0]
