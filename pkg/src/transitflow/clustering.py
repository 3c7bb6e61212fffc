"""Fuzzy C-Means passenger separation and a diagonal-covariance GMM baseline.

Both clusterers follow the scikit-learn estimator protocol and operate on the
standardized feature space produced by :class:`Standardizer`.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .features import DURATION_INDEX, feature_matrix

PASSENGER = "passenger"
NON_PASSENGER = "non_passenger"


class Standardizer(TransformerMixin, BaseEstimator):
    """Z-score scaling; zero-variance features keep sd = 1 and are flagged."""

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.mean_ = X.mean(axis=0)
        sd = X.std(axis=0)
        self.constant_features_ = np.flatnonzero(sd <= 0)
        sd[sd <= 0] = 1.0
        self.scale_ = sd
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "scale_")
        X = check_array(X, dtype=np.float64)
        return (X - self.mean_) / self.scale_

    def inverse_transform(self, Z):
        check_is_fitted(self, "scale_")
        return np.asarray(Z, dtype=float) * self.scale_ + self.mean_


def _sq_dist(points, centers):
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("ncd,ncd->nc", diff, diff)


def fcm_cost(points, memberships, centers, m=2.0):
    """Fuzzy objective: sum over points and clusters of u**m * ||x - v||**2."""
    points = _as_points(points)
    memberships = np.asarray(memberships, dtype=float)
    centers = np.asarray(centers, dtype=float)
    if centers.ndim == 1:
        centers = centers[:, None]
    if memberships.shape != (points.shape[0], centers.shape[0]) or points.shape[1] != centers.shape[1]:
        raise ValueError(
            f"dimension mismatch: points {points.shape}, memberships {memberships.shape}, centers {centers.shape}")
    return float(np.sum(memberships ** m * _sq_dist(points, centers)))


def update_memberships(points, centers, m=2.0):
    """Membership update for fixed centers.

    A point lying exactly on one or more centers splits its membership
    equally among those centers.
    """
    points = _as_points(points)
    centers = np.asarray(centers, dtype=float)
    if centers.ndim == 1:
        centers = centers[:, None]
    d2 = _sq_dist(points, centers)
    zero = d2 <= 0.0
    hit = zero.any(axis=1)
    u = np.empty_like(d2)
    if (~hit).any():
        # (d_i / d_k) ** (2 / (m-1)) == (d2_i / d2_k) ** (1 / (m-1))
        inv = d2[~hit] ** (-1.0 / (m - 1.0))
        u[~hit] = inv / inv.sum(axis=1, keepdims=True)
    if hit.any():
        z = zero[hit].astype(float)
        u[hit] = z / z.sum(axis=1, keepdims=True)
    return u


def update_centers(points, memberships, m=2.0):
    """Weighted-mean center update; an all-zero-weight cluster is re-seeded at the farthest point."""
    points = _as_points(points)
    w = np.asarray(memberships, dtype=float) ** m
    totals = w.sum(axis=0)
    centers = np.zeros((w.shape[1], points.shape[1]))
    ok = totals > 0
    centers[ok] = (w[:, ok].T @ points) / totals[ok][:, None]
    for i in np.flatnonzero(~ok):
        others = centers[ok] if ok.any() else points.mean(axis=0, keepdims=True)
        far = _sq_dist(points, others).min(axis=1)
        centers[i] = points[int(np.argmax(far))]
        ok[i] = True
    return centers


def _as_points(points):
    points = np.asarray(points, dtype=float)
    return points[:, None] if points.ndim == 1 else points


def _init_centers(X, n_clusters, rng):
    uniq = np.unique(X, axis=0)
    if len(uniq) < n_clusters:
        raise ValueError(f"need at least {n_clusters} distinct points, got {len(uniq)}")
    idx = rng.choice(len(uniq), size=n_clusters, replace=False)
    return uniq[np.sort(idx)]


class FuzzyCMeans(ClusterMixin, BaseEstimator):
    """Fuzzy C-Means by alternating membership and center updates.

    Parameters
    ----------
    n_clusters : int
        Number of clusters.
    m : float
        Fuzzifier, > 1.
    max_iter : int
        Iteration cap.
    tol : float
        Convergence requires both the largest membership change and the
        largest center shift to fall below ``tol``.
    random_state : int or None
        Seed for picking initial centers among the distinct data points.

    Attributes
    ----------
    memberships_ : ndarray of shape (n_samples, n_clusters)
    cluster_centers_ : ndarray of shape (n_clusters, n_features)
    cost_ : float
    cost_history_ : list of float
        Objective after every membership update; non-increasing.
    n_iter_ : int
    labels_ : ndarray of shape (n_samples,)
    """

    def __init__(self, n_clusters=2, m=2.0, max_iter=300, tol=1e-6, random_state=None):
        self.n_clusters = n_clusters
        self.m = m
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        if self.m <= 1:
            raise ValueError("fuzzifier m must be > 1")
        rng = np.random.default_rng(self.random_state)
        centers = _init_centers(X, self.n_clusters, rng)
        u = update_memberships(X, centers, self.m)
        history = [fcm_cost(X, u, centers, self.m)]
        n_iter = 0
        for n_iter in range(1, self.max_iter + 1):
            new_centers = update_centers(X, u, self.m)
            new_u = update_memberships(X, new_centers, self.m)
            du = np.max(np.abs(new_u - u))
            dv = np.max(np.sqrt(np.sum((new_centers - centers) ** 2, axis=1)))
            u, centers = new_u, new_centers
            history.append(fcm_cost(X, u, centers, self.m))
            if du < self.tol and dv < self.tol:
                break
        self.memberships_ = u
        self.cluster_centers_ = centers
        self.cost_ = history[-1]
        self.cost_history_ = history
        self.n_iter_ = n_iter
        self.labels_ = np.argmax(u, axis=1)
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "cluster_centers_")
        return update_memberships(check_array(X, dtype=np.float64), self.cluster_centers_, self.m)

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)


def _kmeanspp(X, k, rng):
    """Seeded k-means++ seeding: later means drawn in proportion to squared distance."""
    means = [X[rng.integers(len(X))]]
    for _ in range(1, k):
        d2 = _sq_dist(X, np.array(means)).min(axis=1)
        total = d2.sum()
        idx = rng.choice(len(X), p=d2 / total) if total > 0 else rng.integers(len(X))
        means.append(X[idx])
    return np.array(means, dtype=float)


class GaussianMixtureEM(ClusterMixin, BaseEstimator):
    """Gaussian mixture with diagonal covariances fitted by EM.

    Means start from k-means++ seeding drawn from ``random_state``.

    Variances are floored at ``var_floor``; the log-likelihood trace is kept
    in ``log_likelihood_history_`` and is non-decreasing.
    """

    def __init__(self, n_components=2, max_iter=300, tol=1e-6, var_floor=1e-6, random_state=None):
        self.n_components = n_components
        self.max_iter = max_iter
        self.tol = tol
        self.var_floor = var_floor
        self.random_state = random_state

    def _log_prob(self, X):
        var = self.covariances_
        lp = -0.5 * (np.sum(np.log(2 * np.pi * var), axis=1)[None, :]
                     + np.sum((X[:, None, :] - self.means_[None]) ** 2 / var[None], axis=2))
        return lp + np.log(self.weights_)[None, :]

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        n, d = X.shape
        k = self.n_components
        if n < k:
            raise ValueError(f"need at least {k} points, got {n}")
        rng = np.random.default_rng(self.random_state)
        self.means_ = _kmeanspp(X, k, rng)
        self.covariances_ = np.tile(np.maximum(X.var(axis=0), self.var_floor), (k, 1))
        self.weights_ = np.full(k, 1.0 / k)

        history = []
        self.converged_ = False
        for it in range(1, self.max_iter + 1):
            lp = self._log_prob(X)
            norm = logsumexp(lp, axis=1)
            history.append(float(norm.sum()))
            if len(history) > 1 and abs(history[-1] - history[-2]) < self.tol:
                self.converged_ = True
                break
            resp = np.exp(lp - norm[:, None])
            nk = np.maximum(resp.sum(axis=0), np.finfo(float).tiny)
            self.weights_ = nk / nk.sum()
            self.means_ = (resp.T @ X) / nk[:, None]
            diff = X[:, None, :] - self.means_[None]
            var = np.einsum("nk,nkd->kd", resp, diff ** 2) / nk[:, None]
            self.covariances_ = np.maximum(var, self.var_floor)
        lp = self._log_prob(X)
        norm = logsumexp(lp, axis=1)
        self.responsibilities_ = np.exp(lp - norm[:, None])
        self.log_likelihood_history_ = history
        self.n_iter_ = it
        self.labels_ = np.argmax(self.responsibilities_, axis=1)
        self.n_features_in_ = d
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "means_")
        X = check_array(X, dtype=np.float64)
        lp = self._log_prob(X)
        return np.exp(lp - logsumexp(lp, axis=1)[:, None])

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)


@dataclass
class FuzzyPartition:
    """Soft two-way partition of MAC feature vectors."""

    memberships: np.ndarray
    centers: np.ndarray
    cost: float
    fuzzifier: float
    n_iterations: int
    passenger_cluster: int
    method: str = "fcm"
    seed: Optional[int] = None
    cost_history: List[float] = field(default_factory=list)
    standardizer: Optional[Standardizer] = None
    keys: list = field(default_factory=list)

    @property
    def u_passenger(self):
        return self.memberships[:, self.passenger_cluster]

    def centers_original_units(self):
        if self.standardizer is None:
            return self.centers
        return self.standardizer.inverse_transform(self.centers)


def designate_passenger(centers, duration_index=DURATION_INDEX):
    """Index of the cluster whose center has the larger duration coordinate."""
    return int(np.argmax(np.asarray(centers)[:, duration_index]))


def _prepare(vectors, standardize):
    if len(vectors) and hasattr(vectors[0], "as_array"):
        keys = [(v.trip_id, v.protocol, v.mac) for v in vectors]
        X = feature_matrix(vectors)
    else:
        X = check_array(vectors, dtype=np.float64)
        keys = list(range(len(X)))
    scaler = Standardizer().fit(X) if standardize else None
    Z = scaler.transform(X) if scaler is not None else X
    return Z, scaler, keys


def fcm_fit(vectors, c=2, m=2.0, seed=None, max_iter=300, tol=1e-6, standardize=True,
            duration_index=DURATION_INDEX):
    """Fit FCM on feature vectors (or a raw array) and designate the passenger cluster."""
    Z, scaler, keys = _prepare(vectors, standardize)
    est = FuzzyCMeans(n_clusters=c, m=m, max_iter=max_iter, tol=tol, random_state=seed).fit(Z)
    return FuzzyPartition(
        memberships=est.memberships_, centers=est.cluster_centers_, cost=est.cost_, fuzzifier=m,
        n_iterations=est.n_iter_,
        passenger_cluster=designate_passenger(est.cluster_centers_, duration_index),
        method="fcm", seed=seed, cost_history=est.cost_history_, standardizer=scaler, keys=keys,
    )


def gmm_fit(vectors, c=2, seed=None, max_iter=300, tol=1e-6, standardize=True, duration_index=DURATION_INDEX):
    """Fit the GMM baseline; responsibilities play the role of memberships."""
    Z, scaler, keys = _prepare(vectors, standardize)
    est = GaussianMixtureEM(n_components=c, max_iter=max_iter, tol=tol, random_state=seed).fit(Z)
    part = FuzzyPartition(
        memberships=est.responsibilities_, centers=est.means_, cost=float("nan"), fuzzifier=float("nan"),
        n_iterations=est.n_iter_, passenger_cluster=designate_passenger(est.means_, duration_index),
        method="gmm", seed=seed, standardizer=scaler, keys=keys,
    )
    part.log_likelihood_history = est.log_likelihood_history_
    part.estimator = est
    return part


def harden(partition):
    """Label each point by its largest membership; exact ties go to non_passenger."""
    u = np.asarray(partition.memberships)
    p = partition.passenger_cluster
    others = np.delete(u, p, axis=1)
    is_pass = u[:, p] > others.max(axis=1)
    return [PASSENGER if x else NON_PASSENGER for x in is_pass]
