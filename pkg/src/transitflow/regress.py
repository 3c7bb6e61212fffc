"""Population count regression: CART trees, a bagged forest and an OLS baseline."""

import json
import math
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array, check_X_y, check_is_fitted

TARGETS = ("onboard", "boarding", "alighting")
REGRESSOR_NAMES = ("day_of_week", "hour_of_day", "minute_of_hour", "is_last_stop", "passenger_mac_count")
MODEL_FORMAT = "transitflow.forest"
MODEL_VERSION = 1


@dataclass(frozen=True)
class StopRegressors:
    day_of_week: int
    hour_of_day: int
    minute_of_hour: int
    is_last_stop: bool
    passenger_mac_count: int

    def __post_init__(self):
        if not 0 <= self.day_of_week <= 6:
            raise ValueError(f"day_of_week {self.day_of_week} outside 0..6")
        if not 0 <= self.hour_of_day <= 23:
            raise ValueError(f"hour_of_day {self.hour_of_day} outside 0..23")
        if not 0 <= self.minute_of_hour <= 59:
            raise ValueError(f"minute_of_hour {self.minute_of_hour} outside 0..59")
        if self.passenger_mac_count < 0:
            raise ValueError("passenger_mac_count must be non-negative")

    def as_array(self):
        return np.array([self.day_of_week, self.hour_of_day, self.minute_of_hour,
                         float(self.is_last_stop), self.passenger_mac_count], dtype=float)


def to_counts(raw):
    """Clamp at zero and round half up."""
    return np.floor(np.maximum(np.asarray(raw, dtype=float), 0.0) + 0.5).astype(int)


def _resolve_max_features(max_features, n_features):
    if max_features is None:
        return n_features
    if max_features == "third":
        return max(1, n_features // 3)
    if isinstance(max_features, float):
        return max(1, int(max_features * n_features))
    return max(1, min(int(max_features), n_features))


def best_split(X, y, features, min_samples_leaf=1):
    """Best variance-reduction split over ``features``.

    Returns ``(gain, feature, threshold)`` or ``None`` when no split reduces
    the squared error.  Equal gains keep the lowest feature index, then the
    lowest threshold.  Thresholds are midpoints between adjacent distinct
    values; rows with ``x <= threshold`` go left.
    """
    n = len(y)
    yc = y - y.mean()
    sse = float(yc @ yc)
    tol = 1e-12 * max(sse, 1e-300)
    best = None
    for f in sorted(features):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        cs = np.cumsum(yc[order])
        n_left = np.arange(1, n)
        valid = (xs[1:] > xs[:-1]) & (n_left >= min_samples_leaf) & (n - n_left >= min_samples_leaf)
        if not valid.any():
            continue
        sl = cs[:-1]
        sr = cs[-1] - sl
        gain = sl ** 2 / n_left + sr ** 2 / (n - n_left)
        gain = np.where(valid, gain, -np.inf)
        top = float(gain.max())
        # first position within tolerance of the max = lowest threshold
        i = int(np.flatnonzero(gain >= top - tol)[0])
        if top <= tol:
            continue
        if best is None or top > best[0] + tol:
            best = (top, f, 0.5 * (xs[i] + xs[i + 1]))
    return best


class RegressionTree(RegressorMixin, BaseEstimator):
    """Unpruned CART regression tree.

    Nodes split greedily on squared-error reduction until pure, smaller than
    ``2 * min_samples_leaf`` rows, or no split helps.  With ``max_features``
    set, each node first tries a random subset of that size and draws more
    features one at a time only if none of the subset can split.
    """

    def __init__(self, min_samples_leaf=1, max_features=None, random_state=None):
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        n_features = X.shape[1]
        k = _resolve_max_features(self.max_features, n_features)
        rng = np.random.default_rng(self.random_state)
        feature, threshold, left, right, value, n_samples = [], [], [], [], [], []

        def new_node(idx):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(float(y[idx].mean()))
            n_samples.append(len(idx))
            return len(value) - 1

        root = new_node(np.arange(len(y)))
        stack = [(root, np.arange(len(y)))]
        while stack:
            node, idx = stack.pop()
            yn = y[idx]
            if len(idx) < 2 * self.min_samples_leaf or yn.max() == yn.min():
                continue
            Xn = X[idx]
            if k >= n_features:
                split = best_split(Xn, yn, range(n_features), self.min_samples_leaf)
            else:
                perm = rng.permutation(n_features)
                split = best_split(Xn, yn, perm[:k], self.min_samples_leaf)
                j = k
                while split is None and j < n_features:
                    split = best_split(Xn, yn, perm[j:j + 1], self.min_samples_leaf)
                    j += 1
            if split is None:
                continue
            _, f, thr = split
            go_left = Xn[:, f] <= thr
            li, ri = idx[go_left], idx[~go_left]
            feature[node], threshold[node] = int(f), float(thr)
            left[node] = new_node(li)
            right[node] = new_node(ri)
            # right pushed first so the left subtree is numbered depth-first
            stack.append((right[node], ri))
            stack.append((left[node], li))

        self.feature_ = np.array(feature, dtype=int)
        self.threshold_ = np.array(threshold, dtype=float)
        self.children_left_ = np.array(left, dtype=int)
        self.children_right_ = np.array(right, dtype=int)
        self.value_ = np.array(value, dtype=float)
        self.n_node_samples_ = np.array(n_samples, dtype=int)
        self.n_features_in_ = n_features
        return self

    @property
    def node_count(self):
        return len(self.value_)

    def apply(self, X):
        check_is_fitted(self, "value_")
        X = check_array(X, dtype=np.float64)
        node = np.zeros(len(X), dtype=int)
        active = self.feature_[node] >= 0
        while active.any():
            cur = node[active]
            go_left = X[active, self.feature_[cur]] <= self.threshold_[cur]
            node[active] = np.where(go_left, self.children_left_[cur], self.children_right_[cur])
            active = self.feature_[node] >= 0
        return node

    def predict(self, X):
        return self.value_[self.apply(X)]

    def to_dict(self):
        return {
            "feature": self.feature_.tolist(),
            "threshold": self.threshold_.tolist(),
            "left": self.children_left_.tolist(),
            "right": self.children_right_.tolist(),
            "value": self.value_.tolist(),
            "n_samples": self.n_node_samples_.tolist(),
        }

    @classmethod
    def from_dict(cls, d, **params):
        tree = cls(**params)
        tree.feature_ = np.array(d["feature"], dtype=int)
        tree.threshold_ = np.array(d["threshold"], dtype=float)
        tree.children_left_ = np.array(d["left"], dtype=int)
        tree.children_right_ = np.array(d["right"], dtype=int)
        tree.value_ = np.array(d["value"], dtype=float)
        tree.n_node_samples_ = np.array(d["n_samples"], dtype=int)
        tree.n_features_in_ = len(REGRESSOR_NAMES)
        return tree


def cart_fit(X, y, min_leaf=1, max_features=None, seed=None):
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        raise ValueError("empty training set")
    return RegressionTree(min_samples_leaf=min_leaf, max_features=max_features, random_state=seed).fit(X, y)


class _CountMixin:
    def predict_counts(self, X):
        """Predictions clamped at zero and rounded half up to integers."""
        return to_counts(self.predict(X))


class RandomForestCountRegressor(_CountMixin, RegressorMixin, BaseEstimator):
    """Bagged unpruned CART trees.

    Tree ``t`` draws its bootstrap sample and split candidates from a
    generator seeded with ``random_state + t``.
    """

    def __init__(self, n_estimators=100, max_features="third", min_samples_leaf=1, random_state=0,
                 target=None):
        self.n_estimators = n_estimators
        self.max_features = max_features
        self.min_samples_leaf = min_samples_leaf
        self.random_state = random_state
        self.target = target

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        if len(y) < 2:
            raise ValueError("random forest needs at least 2 rows")
        seed = 0 if self.random_state is None else int(self.random_state)
        n = len(y)
        self.estimators_ = []
        for t in range(self.n_estimators):
            rng = np.random.default_rng(seed + t)
            boot = rng.integers(0, n, size=n)
            tree = RegressionTree(min_samples_leaf=self.min_samples_leaf, max_features=self.max_features,
                                  random_state=rng.integers(0, 2 ** 63 - 1))
            self.estimators_.append(tree.fit(X[boot], y[boot]))
        self.y_min_ = float(y.min())
        self.y_max_ = float(y.max())
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        if not hasattr(self, "estimators_"):
            raise NotFittedError("RandomForestCountRegressor is not fitted")
        X = check_array(X, dtype=np.float64)
        return np.mean([tree.predict(X) for tree in self.estimators_], axis=0)

    def to_dict(self):
        check_is_fitted(self, "estimators_")
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": "rf",
            "target": self.target,
            "seed": self.random_state,
            "n_tree": self.n_estimators,
            "max_features": self.max_features,
            "min_samples_leaf": self.min_samples_leaf,
            "regressors": list(REGRESSOR_NAMES),
            "y_min": self.y_min_,
            "y_max": self.y_max_,
            "trees": [t.to_dict() for t in self.estimators_],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != MODEL_FORMAT or d.get("kind") != "rf":
            raise ValueError("not a serialized random forest")
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')}")
        model = cls(n_estimators=d["n_tree"], max_features=d["max_features"],
                    min_samples_leaf=d["min_samples_leaf"], random_state=d["seed"], target=d["target"])
        model.estimators_ = [RegressionTree.from_dict(t) for t in d["trees"]]
        model.y_min_, model.y_max_ = d["y_min"], d["y_max"]
        model.n_features_in_ = len(d["regressors"])
        return model


def rf_fit(X, y, n_tree=100, seed=0, target=None, **kwargs):
    return RandomForestCountRegressor(n_estimators=n_tree, random_state=seed, target=target, **kwargs).fit(X, y)


def rf_predict(model, X):
    """Return ``(counts, raw)`` for a fitted forest."""
    raw = model.predict(X)
    return to_counts(raw), raw


class LinearCountRegressor(_CountMixin, RegressorMixin, BaseEstimator):
    """Ordinary least squares with intercept, solved by the normal equations.

    Rank-deficient designs fall back to a ridge penalty ``ridge_lambda`` on
    the slopes (``ridge_used_`` is set) unless ``ridge_fallback`` is False.
    """

    def __init__(self, ridge_fallback=True, ridge_lambda=1e-8, target=None):
        self.ridge_fallback = ridge_fallback
        self.ridge_lambda = ridge_lambda
        self.target = target

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        n, p = X.shape
        x_mean, y_mean = X.mean(axis=0), y.mean()
        Xc, yc = X - x_mean, y - y_mean
        gram = Xc.T @ Xc
        rank = np.linalg.matrix_rank(Xc) if n > 1 else 0
        self.ridge_used_ = n < p + 1 or rank < p
        if self.ridge_used_:
            if not self.ridge_fallback:
                raise np.linalg.LinAlgError(f"design matrix rank {rank} < {p} regressors")
            gram = gram + self.ridge_lambda * np.eye(p)
        self.coef_ = np.linalg.solve(gram, Xc.T @ yc)
        self.intercept_ = float(y_mean - x_mean @ self.coef_)
        self.n_features_in_ = p
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        return X @ self.coef_ + self.intercept_

    def to_dict(self):
        check_is_fitted(self, "coef_")
        return {"format": MODEL_FORMAT, "version": MODEL_VERSION, "kind": "ols", "target": self.target,
                "coef": self.coef_.tolist(), "intercept": self.intercept_, "ridge_used": bool(self.ridge_used_)}

    @classmethod
    def from_dict(cls, d):
        model = cls(target=d["target"])
        model.coef_ = np.array(d["coef"], dtype=float)
        model.intercept_ = float(d["intercept"])
        model.ridge_used_ = d["ridge_used"]
        model.n_features_in_ = len(model.coef_)
        return model


def ols_fit(X, y, **kwargs):
    return LinearCountRegressor(**kwargs).fit(X, y)


def ols_predict(model, X):
    raw = model.predict(X)
    return to_counts(raw), raw


def save_model(model, path):
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh, sort_keys=True)
        fh.write("\n")


def load_model(path):
    with open(path) as fh:
        d = json.load(fh)
    kind = d.get("kind")
    if kind == "rf":
        return RandomForestCountRegressor.from_dict(d)
    if kind == "ols":
        return LinearCountRegressor.from_dict(d)
    raise ValueError(f"{path}: unknown model kind {kind!r}")


@dataclass
class EvalMetrics:
    mae: float
    mse: float
    mape: Optional[float]
    n_excluded_zero_truth: int
    n: int

    def to_dict(self):
        return asdict(self)


def evaluate(y_hat, y_true):
    """MAE, MSE and MAPE (percent); MAPE skips zero truths and is None if all are zero."""
    y_hat = np.asarray(y_hat, dtype=float)
    y_true = np.asarray(y_true, dtype=float)
    if y_hat.shape != y_true.shape:
        raise ValueError(f"length mismatch: {y_hat.shape} vs {y_true.shape}")
    if y_hat.size == 0:
        raise ValueError("nothing to evaluate")
    err = y_hat - y_true
    nz = y_true != 0
    mape = float(np.mean(np.abs(err[nz]) / np.abs(y_true[nz])) * 100.0) if nz.any() else None
    return EvalMetrics(
        mae=float(np.mean(np.abs(err))),
        mse=float(np.mean(err ** 2)),
        mape=mape,
        n_excluded_zero_truth=int((~nz).sum()),
        n=int(y_true.size),
    )


def train_test_split(rows, test_fraction=0.3, seed=0, groups=None):
    """Seeded shuffle and split; the train part holds ceil((1 - test_fraction) * N) rows.

    With ``groups`` (one key per row) whole groups are held out instead and
    the ceiling applies to the number of groups.
    """
    rows = list(rows)
    n = len(rows)
    if n < 2:
        raise ValueError("need at least 2 rows to split")
    rng = np.random.default_rng(seed)
    keep = 1.0 - test_fraction
    if groups is None:
        perm = rng.permutation(n)
        n_train = math.ceil(round(keep * n, 9))
        train_idx, test_idx = sorted(perm[:n_train]), sorted(perm[n_train:])
    else:
        groups = list(groups)
        if len(groups) != n:
            raise ValueError("groups must align with rows")
        uniq = sorted(set(groups))
        perm = rng.permutation(len(uniq))
        n_train = math.ceil(round(keep * len(uniq), 9))
        train_groups = {uniq[i] for i in perm[:n_train]}
        train_idx = [i for i in range(n) if groups[i] in train_groups]
        test_idx = [i for i in range(n) if groups[i] not in train_groups]
    return [rows[i] for i in train_idx], [rows[i] for i in test_idx]
