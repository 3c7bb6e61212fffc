import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from transitflow.metrics import beta_cv, davies_bouldin, dunn, silhouette, validity_report

PTS = np.array([[0.0], [1.0], [10.0], [11.0]])
LAB = [0, 0, 1, 1]


def test_hand_values():
    assert silhouette(PTS, LAB) == pytest.approx((9.5 / 10.5 + 8.5 / 9.5) / 2, abs=1e-12)
    assert dunn(PTS, LAB) == pytest.approx(9.0)
    assert davies_bouldin(PTS, LAB) == pytest.approx(0.1)
    assert beta_cv(PTS, LAB) == pytest.approx(0.1)


def test_report_matches_individual_functions():
    X = np.random.default_rng(0).normal(size=(40, 3))
    lab = np.random.default_rng(1).integers(0, 3, 40)
    r = validity_report(X, lab)
    assert r.silhouette == pytest.approx(silhouette(X, lab), rel=1e-12)
    assert r.dunn == pytest.approx(dunn(X, lab), rel=1e-12)
    assert r.davies_bouldin == pytest.approx(davies_bouldin(X, lab), rel=1e-12)
    assert r.beta_cv == pytest.approx(beta_cv(X, lab), rel=1e-12)


def test_silhouette_zero_when_a_equals_b():
    # regular tetrahedron: every pairwise distance is equal
    pts = np.array([[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]])
    assert silhouette(pts, [0, 0, 1, 1]) == pytest.approx(0.0, abs=1e-12)


def test_singleton_points_score_zero():
    assert silhouette([[0.0], [1.0], [5.0]], [0, 0, 1]) == pytest.approx(oracles.silhouette([[0], [1], [5]], [0, 0, 1]))


def test_dunn_zero_for_shared_location():
    assert dunn([[0.0], [1.0], [1.0], [2.0]], [0, 0, 1, 1]) == 0.0


def test_dunn_all_singletons_is_an_error():
    with pytest.raises(ValueError):
        dunn([[0.0], [1.0]], [0, 1])


def test_davies_bouldin_two_singletons_is_zero():
    assert davies_bouldin([[0.0], [3.0]], [0, 1]) == 0.0


def test_davies_bouldin_coincident_centroids_is_an_error():
    with pytest.raises(ValueError):
        davies_bouldin([[0.0], [2.0], [1.0]], [0, 0, 1])


def test_beta_cv_needs_an_intra_edge():
    with pytest.raises(ValueError):
        beta_cv([[0.0], [1.0]], [0, 1])


def test_single_cluster_is_an_error():
    for f in (silhouette, dunn, davies_bouldin, beta_cv):
        with pytest.raises(ValueError):
            f(PTS, [0, 0, 0, 0])


@pytest.mark.parametrize("k", [0.01, 2.5, 1e4])
def test_scale_and_translation_invariance(k):
    X = np.random.default_rng(3).normal(size=(30, 2))
    lab = np.repeat([0, 1, 2], 10)
    a = validity_report(X, lab)
    b = validity_report(k * X + np.array([7.0, -3.0]), lab)
    for name in ("silhouette", "dunn", "davies_bouldin", "beta_cv"):
        assert getattr(b, name) == pytest.approx(getattr(a, name), rel=1e-9)


def test_separated_labelling_beats_shuffled():
    rng = np.random.default_rng(4)
    X = np.concatenate([rng.normal(0, 1, (25, 2)), rng.normal(8, 1, (25, 2))])
    good = np.repeat([0, 1], 25)
    bad = rng.permutation(good)
    g, b = validity_report(X, good), validity_report(X, bad)
    assert g.silhouette > b.silhouette and g.dunn > b.dunn
    assert g.davies_bouldin < b.davies_bouldin and g.beta_cv < b.beta_cv


def test_large_input_uses_blocks():
    rng = np.random.default_rng(5)
    X = np.concatenate([rng.normal(0, 1, (700, 2)), rng.normal(6, 1, (700, 2))])
    lab = np.repeat([0, 1], 700)
    r = validity_report(X, lab)
    assert r.silhouette == pytest.approx(oracles.silhouette(X[::7], lab[::7]), abs=0.05)
    assert 0 < r.beta_cv < 1


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(3, 12), st.integers(1, 3), st.integers(2, 3))
def test_random_labelling_matches_pairwise_oracle(seed, n, d, k):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    lab = rng.integers(0, k, n)
    if len(set(lab.tolist())) < 2:
        lab[0], lab[1] = 0, 1
    check_against_oracle(X, lab)


def check_against_oracle(X, lab):
    r = validity_report(X, lab)
    assert -1 <= r.silhouette <= 1
    assert math.isclose(r.silhouette, oracles.silhouette(X, lab), rel_tol=1e-12, abs_tol=1e-12)
    assert math.isclose(silhouette(X, lab), oracles.silhouette(X, lab), rel_tol=1e-12, abs_tol=1e-12)
    counts = np.bincount(np.unique(lab, return_inverse=True)[1])
    if (counts > 1).any():
        assert math.isclose(dunn(X, lab), oracles.dunn(X, lab), rel_tol=1e-12, abs_tol=1e-12)
        assert math.isclose(beta_cv(X, lab), oracles.beta_cv(X, lab), rel_tol=1e-12, abs_tol=1e-12)
    assert math.isclose(davies_bouldin(X, lab), oracles.davies_bouldin(X, lab), rel_tol=1e-12, abs_tol=1e-12)
