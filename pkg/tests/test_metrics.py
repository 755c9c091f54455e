import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fallrep.metrics import (
    DegenerateGeometryWarning,
    MetricError,
    auc,
    average_precision,
    kendall,
    linear_probe_scores,
    neighborhood_consistency,
    pcr,
    poa_macro,
    project,
    severity_axis,
    spearman,
)
from oracles import ap_oracle, auc_oracle, kendall_b_oracle, pcr_oracle, poa_oracle, spearman_oracle


def tied_fixture(rng, n, levels=None):
    labels = rng.integers(0, 3, size=n)
    while len(set(labels.tolist())) < 2:
        labels = rng.integers(0, 3, size=n)
    scores = rng.integers(0, levels, size=n).astype(float) if levels else rng.normal(size=n)
    if len(set(scores.tolist())) < 2:
        scores[0] += 1.0
    return labels, scores


def test_severity_axis_collinear():
    z = np.array([[0, 0, 1], [0, 0, 1], [0, 0, -1]], dtype=float)
    np.testing.assert_array_equal(severity_axis(z, [0, 0, 2]), [0, 0, -1])


def test_severity_axis_formula():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(30, 5))
    y = np.arange(30) % 3
    diff = z[y == 2].mean(0) - z[y == 0].mean(0)
    np.testing.assert_allclose(severity_axis(z, y), diff / np.linalg.norm(diff), atol=1e-15)
    assert project(z, severity_axis(z, y))[y == 2].mean() > project(z, severity_axis(z, y))[y == 0].mean()


def test_projection_examples():
    v = np.array([0.6, 0.8])
    assert project(v[None, :], v)[0] == pytest.approx(1.0)
    assert project(np.array([[-0.8, 0.6]]), v)[0] == pytest.approx(0.0)
    z = np.random.default_rng(1).normal(size=(5, 2))
    np.testing.assert_allclose(project(z, v), [row @ v for row in z], atol=1e-15)


@pytest.mark.parametrize("fn", [spearman, kendall])
def test_rank_examples(fn):
    assert fn([0, 1, 2], [-1, 0, 1]) == pytest.approx(1.0)
    assert fn([0, 1, 2], [1, 0, -1]) == pytest.approx(-1.0)


def test_kendall_with_label_ties():
    want = kendall_b_oracle([0, 0, 1, 1], [0, 1, 2, 3])
    assert want == pytest.approx(4 / math.sqrt(24))
    assert kendall([0, 0, 1, 1], [0, 1, 2, 3]) == pytest.approx(want, abs=1e-12)


def test_spearman_twenty_items_with_ties():
    labels, scores = tied_fixture(np.random.default_rng(2), 20, levels=4)
    assert spearman(labels, scores) == pytest.approx(spearman_oracle(labels, scores), abs=1e-12)


def test_constant_input_rejected():
    with pytest.raises(MetricError):
        spearman([0, 1, 2], [1, 1, 1])


def test_poa_examples():
    assert poa_macro([0, 0, 1, 1, 2, 2], [0, 1, 2, 3, 4, 5]) == 1.0
    assert poa_macro([0, 1, 2, 0], [3, 3, 3, 3]) == 0.5
    labels, scores = tied_fixture(np.random.default_rng(3), 12, levels=3)
    assert poa_macro(labels, scores) == pytest.approx(poa_oracle(labels, scores), abs=1e-12)


def test_poa_sampling_above_cap():
    rng = np.random.default_rng(4)
    labels = rng.integers(0, 3, size=3000)
    scores = labels + rng.normal(scale=1.5, size=3000)
    exact = poa_macro(labels, scores, pair_cap=10**9)
    sampled = poa_macro(labels, scores, seed=1, pair_cap=20_000)
    assert sampled == poa_macro(labels, scores, seed=1, pair_cap=20_000)
    assert abs(sampled - exact) < 0.02


def test_auc_examples():
    assert auc([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]) == 1.0
    assert auc([0, 1, 0, 1], [5, 5, 5, 5]) == 0.5
    y = [0, 1, 1, 0, 1, 0, 0, 1, 1, 0]
    s = [0.3, 0.3, 0.9, 0.1, 0.5, 0.7, 0.5, 0.2, 0.8, 0.4]
    assert auc(y, s) == pytest.approx(auc_oracle(y, s), abs=1e-12)


def test_ap_examples():
    assert average_precision([1, 1, 0, 0], [4, 3, 2, 1]) == 1.0
    assert average_precision([1, 0, 0, 0], [9, 1, 2, 3]) == 1.0
    n, p = 9, 3
    y = [0] * (n - p) + [1] * p
    s = list(range(n, 0, -1))
    worst = sum(j / (n - p + j) for j in range(1, p + 1)) / p
    assert average_precision(y, s) == pytest.approx(worst, abs=1e-12)


def test_ap_ties_follow_input_order():
    assert average_precision([1, 0], [1.0, 1.0]) == 1.0
    assert average_precision([0, 1], [1.0, 1.0]) == 0.5


def test_pcr_degenerate_geometry_warns():
    z = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
    with pytest.warns(DegenerateGeometryWarning):
        value = pcr(z, [0, 0, 1, 1])
    assert math.isfinite(value) and value > 1e6


def test_pcr_six_point_fixture():
    z = np.array([[0, 0], [1, 0], [0, 2], [3, 1], [2, 2], [-1, 1]], dtype=float)
    y = [0, 0, 1, 1, 2, 2]
    assert pcr(z, y) == pytest.approx(pcr_oracle(z.tolist(), y), abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_pcr_random_null_near_one(seed):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(300, 8))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    assert abs(pcr(z, rng.integers(0, 3, size=300)) - 1.0) < 0.05


def test_probe_separable_and_pure():
    rng = np.random.default_rng(0)
    x = np.vstack([rng.normal(-2, 0.5, size=(40, 3)), rng.normal(2, 0.5, size=(40, 3))])
    y = np.r_[np.zeros(40), np.ones(40)]
    s = linear_probe_scores(x, y, x)
    assert auc(y, s) == 1.0
    np.testing.assert_array_equal(s, linear_probe_scores(x, y, x))
    dup = linear_probe_scores(x, y, np.vstack([x[:1], x[:1]]))
    assert dup[0] == dup[1]


def test_probe_null():
    aucs = []
    for seed in range(5):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(400, 8))
        y = rng.integers(0, 2, size=400)
        s = linear_probe_scores(x[:200], y[:200], x[200:])
        aucs.append(auc(y[200:], s))
    assert all(0.3 <= a <= 0.7 for a in aucs)


def test_neighborhood_pure_clusters():
    rng = np.random.default_rng(0)
    centers = np.eye(3) * 10
    z = np.vstack([centers[c] + rng.normal(scale=0.1, size=(12, 3)) for c in range(3)])
    y = np.repeat([0, 1, 2], 12)
    vids = [f"v{i}" for i in range(36)]
    res = neighborhood_consistency(z, y, vids, k=5)
    assert res.diagonal == {0: 1.0, 1: 1.0, 2: 1.0}
    assert sum(res.skipped.values()) == 0


def test_neighborhood_shuffled_labels():
    rng = np.random.default_rng(1)
    z = rng.normal(size=(600, 6))
    y = np.repeat([0, 1, 2], 200)[rng.permutation(600)]
    res = neighborhood_consistency(z, y, [f"v{i % 60}" for i in range(600)], k=10, seed=2)
    for c in range(3):
        assert abs(res.diagonal[c] - 1 / 3) <= 0.1


def test_neighborhood_single_video_query_is_skipped():
    z = np.array([[1.0, 0], [0.9, 0.1], [0, 1.0], [0.1, 0.9], [0.5, 0.5], [0.6, 0.4]])
    y = [0, 0, 1, 1, 2, 2]
    vids = ["a", "b", "c", "d", "e", "e"]
    # size-2 classes: the only database entries of class 2 sit in video "e"
    res = neighborhood_consistency(z, y, vids, k=2)
    assert res.skipped[2] == 0 and res.confusion[2].sum() > 0
    res = neighborhood_consistency(z[[0, 1, 2, 3, 4]], [0, 0, 1, 1, 2], ["a", "a", "a", "a", "a"], k=2)
    assert sum(res.skipped.values()) == 5


fixture_st = st.tuples(st.integers(2, 200), st.integers(0, 2**32 - 1), st.sampled_from([None, 2, 3, 5]))


@given(fixture_st)
def test_rank_metrics_match_oracles(fx):
    n, seed, levels = fx
    labels, scores = tied_fixture(np.random.default_rng(seed), n, levels)
    l, s = labels.tolist(), scores.tolist()
    assert abs(spearman(l, s) - spearman_oracle(l, s)) <= 1e-12
    assert abs(kendall(l, s) - kendall_b_oracle(l, s)) <= 1e-12
    # near zero the two can differ in sign; |3 tau - 2 rho| <= 1 forces agreement past 0.5
    if abs(spearman(l, s)) > 0.5:
        assert np.sign(spearman(l, s)) == np.sign(kendall(l, s))
    assert abs(poa_macro(l, s) - poa_oracle(l, s)) <= 1e-12


@given(fixture_st)
def test_binary_metrics_match_oracles(fx):
    n, seed, levels = fx
    labels, scores = tied_fixture(np.random.default_rng(seed), n, levels)
    y = (labels > 0).tolist()
    if all(y) or not any(y):
        y[0] = not y[0]
    s = scores.tolist()
    assert abs(auc(y, s) - auc_oracle(y, s)) <= 1e-12
    assert abs(average_precision(y, s) - ap_oracle(y, s)) <= 1e-12


@given(fixture_st)
def test_monotone_transform_invariance(fx):
    n, seed, levels = fx
    labels, scores = tied_fixture(np.random.default_rng(seed), n, levels)
    t = scores**3 + 2 * scores
    y = labels > 0
    if y.all() or not y.any():
        y[0] = not y[0]
    for fn in (spearman, kendall, poa_macro):
        assert fn(labels, t) == pytest.approx(fn(labels, scores), abs=1e-12)
    assert auc(y, t) == auc(y, scores)
