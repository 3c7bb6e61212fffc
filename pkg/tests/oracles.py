"""Slow, independent reference implementations used only by the tests."""

import math
from fractions import Fraction
from itertools import combinations


def _sse(values):
    if not values:
        return Fraction(0)
    mean = sum(values, Fraction(0)) / len(values)
    return sum(((v - mean) ** 2 for v in values), Fraction(0))


def brute_best_split(X, y, min_leaf=1, features=None):
    """Exhaustive search over every (feature, midpoint) pair with exact SSE.

    Returns ``(feature, threshold)`` minimising SSE_left + SSE_right, ties to
    the lowest feature then the lowest threshold, or None if no split
    improves on the parent SSE.
    """
    rows = [[Fraction(v) for v in r] for r in X]
    ys = [Fraction(v) for v in y]
    parent = _sse(ys)
    best = None
    feats = range(len(rows[0])) if features is None else sorted(features)
    for f in feats:
        vals = sorted({r[f] for r in rows})
        for lo, hi in zip(vals, vals[1:]):
            thr = (lo + hi) / 2
            left = [yy for r, yy in zip(rows, ys) if r[f] <= thr]
            right = [yy for r, yy in zip(rows, ys) if r[f] > thr]
            if len(left) < min_leaf or len(right) < min_leaf:
                continue
            cost = _sse(left) + _sse(right)
            if cost >= parent:
                continue
            if best is None or cost < best[0]:
                best = (cost, f, thr)
    return None if best is None else (best[1], best[2])


def brute_tree(X, y, min_leaf=1):
    """Grow a full tree with ``brute_best_split``; nested dicts with exact leaf means."""
    ys = [Fraction(v) for v in y]
    mean = sum(ys, Fraction(0)) / len(ys)
    if len(set(ys)) == 1 or len(ys) < 2 * min_leaf:
        return {"value": mean}
    split = brute_best_split(X, y, min_leaf)
    if split is None:
        return {"value": mean}
    f, thr = split
    li = [i for i, r in enumerate(X) if Fraction(r[f]) <= thr]
    ri = [i for i, r in enumerate(X) if Fraction(r[f]) > thr]
    return {
        "feature": f,
        "threshold": thr,
        "left": brute_tree([X[i] for i in li], [y[i] for i in li], min_leaf),
        "right": brute_tree([X[i] for i in ri], [y[i] for i in ri], min_leaf),
    }


def _groups(points, labels):
    out = {}
    for p, lab in zip(points, labels):
        out.setdefault(lab, []).append(tuple(float(v) for v in p))
    return out


def silhouette(points, labels):
    pts = [tuple(float(v) for v in p) for p in points]
    groups = _groups(points, labels)
    scores = []
    for p, lab in zip(pts, labels):
        own = groups[lab]
        if len(own) == 1:
            scores.append(0.0)
            continue
        a = sum(math.dist(p, q) for q in own) / (len(own) - 1)
        b = min(sum(math.dist(p, q) for q in g) / len(g) for k, g in groups.items() if k != lab)
        scores.append(0.0 if max(a, b) == 0 else (b - a) / max(a, b))
    return sum(scores) / len(scores)


def dunn(points, labels):
    pts = [tuple(float(v) for v in p) for p in points]
    inter, intra = math.inf, 0.0
    for (p, lp), (q, lq) in combinations(zip(pts, labels), 2):
        d = math.dist(p, q)
        if lp == lq:
            intra = max(intra, d)
        else:
            inter = min(inter, d)
    return inter / intra


def davies_bouldin(points, labels):
    groups = _groups(points, labels)
    cents, spread = {}, {}
    for k, g in groups.items():
        c = tuple(sum(col) / len(g) for col in zip(*g))
        cents[k] = c
        spread[k] = sum(math.dist(p, c) for p in g) / len(g)
    total = 0.0
    for i in groups:
        total += max((spread[i] + spread[j]) / math.dist(cents[i], cents[j]) for j in groups if j != i)
    return total / len(groups)


def beta_cv(points, labels):
    pts = [tuple(float(v) for v in p) for p in points]
    intra, inter = [], []
    for (p, lp), (q, lq) in combinations(zip(pts, labels), 2):
        (intra if lp == lq else inter).append(math.dist(p, q))
    return (sum(intra) / len(intra)) / (sum(inter) / len(inter))
