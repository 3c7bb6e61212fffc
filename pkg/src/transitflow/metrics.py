"""Internal cluster validity indices.

All four indices use Euclidean distances.  Pairwise quantities are
accumulated in row blocks so memory stays O(block * n).
"""

import json
from dataclasses import dataclass, asdict

import numpy as np
from scipy.spatial.distance import cdist

_BLOCK = 512


@dataclass
class ValidityReport:
    silhouette: float
    dunn: float
    davies_bouldin: float
    beta_cv: float

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _prepare(points, labels):
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    labels = np.asarray(labels)
    if len(labels) != len(X):
        raise ValueError("points and labels differ in length")
    uniq, codes = np.unique(labels, return_inverse=True)
    if len(uniq) < 2:
        raise ValueError("validity indices need at least 2 clusters")
    return X, codes, len(uniq)


def _blocks(X):
    for start in range(0, len(X), _BLOCK):
        stop = min(start + _BLOCK, len(X))
        yield start, stop, cdist(X[start:stop], X)


def _pair_stats(X, codes, k):
    """Per-point distance sums to each cluster, plus Dunn extrema."""
    n = len(X)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), codes] = 1.0
    sums = np.empty((n, k))
    min_inter = np.inf
    max_intra = 0.0
    for start, stop, D in _blocks(X):
        rows = np.arange(start, stop)
        D[rows - start, rows] = 0.0
        sums[start:stop] = D @ onehot
        same = codes[start:stop, None] == codes[None, :]
        if (~same).any():
            min_inter = min(min_inter, float(D[~same].min()))
        if same.any():
            max_intra = max(max_intra, float(D[same].max()))
    return sums, min_inter, max_intra


def silhouette(points, labels):
    """Mean silhouette width; points in singleton clusters score 0."""
    X, codes, k = _prepare(points, labels)
    sums, _, _ = _pair_stats(X, codes, k)
    return _silhouette_from(sums, codes, k)


def _silhouette_from(sums, codes, k):
    n = len(codes)
    sizes = np.bincount(codes, minlength=k).astype(float)
    own = sizes[codes]
    a = np.where(own > 1, sums[np.arange(n), codes] / np.maximum(own - 1, 1), 0.0)
    means = sums / sizes[None, :]
    means[np.arange(n), codes] = np.inf
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(s.mean())


def dunn(points, labels):
    """Smallest single-linkage distance between clusters over the largest cluster diameter."""
    X, codes, k = _prepare(points, labels)
    _, min_inter, max_intra = _pair_stats(X, codes, k)
    if max_intra <= 0:
        raise ValueError("Dunn index undefined: every cluster has zero diameter")
    return min_inter / max_intra


def davies_bouldin(points, labels):
    X, codes, k = _prepare(points, labels)
    return _davies_bouldin(X, codes, k)


def _davies_bouldin(X, codes, k):
    cents = np.vstack([X[codes == i].mean(axis=0) for i in range(k)])
    scatter = np.array([np.sqrt(((X[codes == i] - cents[i]) ** 2).sum(axis=1)).mean() for i in range(k)])
    cd = np.sqrt(((cents[:, None, :] - cents[None, :, :]) ** 2).sum(axis=2))
    off = ~np.eye(k, dtype=bool)
    if (cd[off] <= 0).any():
        raise ValueError("Davies-Bouldin index undefined: coincident centroids")
    ratio = np.where(off, (scatter[:, None] + scatter[None, :]) / np.where(off, cd, 1.0), -np.inf)
    return float(ratio.max(axis=1).mean())


def beta_cv(points, labels):
    """Mean intra-cluster pair distance over mean inter-cluster pair distance."""
    X, codes, k = _prepare(points, labels)
    sums, _, _ = _pair_stats(X, codes, k)
    return _beta_cv_from(sums, codes, k)


def _beta_cv_from(sums, codes, k):
    n = len(codes)
    sizes = np.bincount(codes, minlength=k)
    intra_pairs = int((sizes * (sizes - 1) // 2).sum())
    inter_pairs = n * (n - 1) // 2 - intra_pairs
    if intra_pairs == 0:
        raise ValueError("BetaCV undefined: no intra-cluster pairs")
    intra = sums[np.arange(n), codes].sum() / 2.0
    inter = (sums.sum() - sums[np.arange(n), codes].sum()) / 2.0
    return float((intra / intra_pairs) / (inter / inter_pairs))


def validity_report(points, labels):
    """All four indices from a single pairwise pass."""
    X, codes, k = _prepare(points, labels)
    sums, min_inter, max_intra = _pair_stats(X, codes, k)
    try:
        db = _davies_bouldin(X, codes, k)
    except ValueError:
        db = float("nan")
    return ValidityReport(
        silhouette=_silhouette_from(sums, codes, k),
        dunn=min_inter / max_intra if max_intra > 0 else float("nan"),
        davies_bouldin=db,
        beta_cv=_beta_cv_from(sums, codes, k) if (np.bincount(codes) > 1).any() else float("nan"),
    )
