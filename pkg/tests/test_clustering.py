import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from transitflow.clustering import (
    NON_PASSENGER, PASSENGER, FuzzyCMeans, FuzzyPartition, GaussianMixtureEM, Standardizer,
    fcm_cost, fcm_fit, gmm_fit, harden, update_centers, update_memberships,
)


def _blobs(seed=0, n=50):
    rng = np.random.default_rng(seed)
    x = np.concatenate([rng.normal(0, 0.1, n), rng.normal(10, 0.1, n)])
    truth = np.array([0] * n + [1] * n)
    return x[:, None], truth


def _agree_up_to_relabel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return (a == b).all() or (a == 1 - b).all()


# cost

def test_cost_zero_for_crisp_points_on_centers():
    assert fcm_cost([0.0, 1.0], [[1, 0], [0, 1]], [0.0, 1.0]) == 0.0


def test_cost_hand_values():
    u = [[0.9, 0.1], [0.1, 0.9]]
    assert fcm_cost([0.0, 1.0], u, [0.0, 1.0], m=2) == pytest.approx(0.02, abs=1e-12)
    assert fcm_cost([0.0, 1.0], [[0.5, 0.5]] * 2, [0.0, 1.0], m=2) == pytest.approx(0.5, abs=1e-12)


def test_cost_dimension_mismatch():
    with pytest.raises(ValueError):
        fcm_cost([0.0, 1.0], [[1, 0, 0]] * 2, [0.0, 1.0])


# memberships

def test_membership_hand_value():
    np.testing.assert_allclose(update_memberships([0.25], [0.0, 1.0], m=2), [[0.9, 0.1]], atol=1e-12)


def test_membership_equidistant_and_coincident():
    np.testing.assert_allclose(update_memberships([0.5], [0.0, 1.0]), [[0.5, 0.5]])
    np.testing.assert_array_equal(update_memberships([0.0], [0.0, 1.0]), [[1.0, 0.0]])
    np.testing.assert_array_equal(update_memberships([2.0], [2.0, 2.0, 5.0]), [[0.5, 0.5, 0.0]])


# centers

def test_center_hand_value():
    v = update_centers([0.0, 1.0], [[0.9, 0.1], [0.1, 0.9]], m=2)
    assert v[0, 0] == pytest.approx(0.01 / 0.82, abs=1e-12)
    assert v[0, 0] == pytest.approx(0.012195, abs=1e-6)


def test_uniform_memberships_give_mean_centers():
    pts = np.array([[0.0, 1.0], [2.0, 5.0], [4.0, 0.0]])
    v = update_centers(pts, np.full((3, 2), 0.5))
    np.testing.assert_allclose(v, [pts.mean(axis=0)] * 2)


def test_single_point_center():
    np.testing.assert_array_equal(update_centers([[3.0, 4.0]], [[1.0, 0.0]])[0], [3.0, 4.0])


def test_empty_cluster_is_reseeded_at_farthest_point():
    pts = np.array([[0.0], [1.0], [9.0]])
    v = update_centers(pts, [[1, 0], [1, 0], [1, 0]])
    assert v[1, 0] == 9.0


# fitting

def test_fcm_separates_blobs_and_recovers_centers():
    X, truth = _blobs()
    part = fcm_fit(X, seed=1, duration_index=0)
    labels = np.argmax(part.memberships, axis=1)
    assert _agree_up_to_relabel(labels, truth)
    centers = np.sort(part.centers_original_units()[:, 0])
    np.testing.assert_allclose(centers, [0.0, 10.0], atol=0.2)
    assert part.passenger_cluster == int(np.argmax(part.centers[:, 0]))


def test_fcm_seed_stability_on_separated_data():
    X, _ = _blobs()
    a = np.argmax(fcm_fit(X, seed=1, duration_index=0).memberships, axis=1)
    b = np.argmax(fcm_fit(X, seed=99, duration_index=0).memberships, axis=1)
    assert _agree_up_to_relabel(a, b)


def test_fcm_is_bitwise_deterministic():
    X = np.random.default_rng(5).normal(size=(80, 3))
    a = FuzzyCMeans(random_state=3).fit(X)
    b = FuzzyCMeans(random_state=3).fit(X)
    assert a.memberships_.tobytes() == b.memberships_.tobytes()
    assert a.cost_history_ == b.cost_history_


def test_fcm_needs_distinct_points():
    with pytest.raises(ValueError, match="distinct"):
        FuzzyCMeans(n_clusters=2).fit(np.ones((5, 2)))


def test_fcm_rejects_bad_fuzzifier():
    with pytest.raises(ValueError):
        FuzzyCMeans(m=1.0).fit(np.arange(6.0).reshape(3, 2))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(5, 60), st.integers(1, 4), st.floats(1.2, 3.0))
def test_fcm_invariants(seed, n, d, m):
    X = np.random.default_rng(seed).normal(size=(n, d))
    est = FuzzyCMeans(m=m, random_state=seed).fit(X)
    u = est.memberships_
    np.testing.assert_allclose(u.sum(axis=1), 1.0, atol=1e-9)
    assert (u >= 0).all() and (u <= 1).all()
    h = np.array(est.cost_history_)
    assert (np.diff(h) <= 1e-9 * np.maximum(1.0, h[:-1])).all()
    assert (est.cluster_centers_ >= X.min(axis=0) - 1e-9).all()
    assert (est.cluster_centers_ <= X.max(axis=0) + 1e-9).all()
    assert est.cost_ == pytest.approx(fcm_cost(X, u, est.cluster_centers_, m), rel=1e-9)


@pytest.mark.parametrize("k", [0.5, 3.0, 1000.0])
def test_hard_labels_invariant_under_uniform_scaling(k):
    X = np.random.default_rng(2).normal(size=(60, 3))
    a = FuzzyCMeans(random_state=4).fit(X).labels_
    b = FuzzyCMeans(random_state=4).fit(k * X).labels_
    np.testing.assert_array_equal(a, b)


def test_standardizer_flags_constant_features():
    X = np.array([[1.0, 5.0], [3.0, 5.0]])
    s = Standardizer().fit(X)
    assert s.constant_features_.tolist() == [1]
    np.testing.assert_allclose(s.transform(X), [[-1.0, 0.0], [1.0, 0.0]])
    np.testing.assert_allclose(s.inverse_transform(s.transform(X)), X)


# GMM

def test_gmm_separates_blobs():
    X, truth = _blobs()
    part = gmm_fit(X, seed=0, duration_index=0)
    assert _agree_up_to_relabel(np.argmax(part.memberships, axis=1), truth)


def test_gmm_repeated_point_is_finite():
    est = GaussianMixtureEM(random_state=0).fit(np.ones((10, 3)))
    assert np.isfinite(est.responsibilities_).all()
    np.testing.assert_allclose(est.responsibilities_.sum(axis=1), 1.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(4, 60), st.integers(1, 4))
def test_gmm_log_likelihood_non_decreasing(seed, n, d):
    X = np.random.default_rng(seed).normal(size=(n, d))
    h = np.array(GaussianMixtureEM(random_state=seed).fit(X).log_likelihood_history_)
    assert (np.diff(h) >= -1e-8 * np.maximum(1.0, np.abs(h[:-1]))).all()


# harden

def _partition(u, p=0):
    u = np.asarray(u, dtype=float)
    return FuzzyPartition(u, np.zeros((u.shape[1], 1)), 0.0, 2.0, 0, p)


def test_harden_rules():
    assert harden(_partition([[0.9, 0.1]])) == [PASSENGER]
    assert harden(_partition([[0.5, 0.5]])) == [NON_PASSENGER]
    assert harden(_partition([[0.2, 0.8]], p=1)) == [PASSENGER]


def test_harden_on_blobs_matches_identity():
    X, truth = _blobs()
    labels = harden(fcm_fit(X, seed=3, duration_index=0))
    assert labels == [PASSENGER if t == 1 else NON_PASSENGER for t in truth]


def test_fcm_fit_on_feature_vectors_designates_long_duration(default_trip_dir):
    from transitflow.features import extract_features
    from transitflow.ingest import load_trip_dir
    vs = extract_features(load_trip_dir(default_trip_dir))
    part = fcm_fit(vs, seed=7)
    durations = np.array([v.duration_s for v in vs])
    u = part.u_passenger
    assert durations[u > 0.5].mean() > durations[u <= 0.5].mean()
    assert part.keys[0] == (vs[0].trip_id, vs[0].protocol, vs[0].mac)
