"""End-to-end orchestration: features, separation, stop counts, regression, report."""

import csv
import json
import math
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import NON_PASSENGER, PASSENGER, Standardizer, fcm_fit, gmm_fit, harden
from .config import PipelineConfig
from .features import extract_features, feature_matrix, write_features
from .filters import filter_method_1, filter_method_2
from .ingest import TRIP_FILES, load_trip_dir
from .metrics import validity_report
from .plots import line_chart, scatter_chart
from .regress import evaluate, load_model, rf_fit, ols_fit, save_model, train_test_split
from .ridership import assign_stops, assignment_summary, build_od, stop_counts, write_stop_counts
from .simgen import score_separation

LAYOUT_VERSION = 1
LABELS_HEADER = ["trip_id", "mac", "protocol", "u_passenger", "u_non_passenger", "label", "method"]
ESTIMATES_HEADER = ["trip_id", "stop_seq", "target", "separation", "regression", "split",
                    "mac_count", "truth", "raw", "estimate"]
METRICS_HEADER = ["target", "method", "mse", "mae", "mape", "n_excluded", "n"]


@dataclass
class Separation:
    method: str
    vectors: list
    labels: list
    u_passenger: np.ndarray
    info: dict = field(default_factory=dict)

    def passenger_keys(self):
        return {(v.trip_id, v.protocol, v.mac) for v, lab in zip(self.vectors, self.labels) if lab == PASSENGER}


def clean(obj):
    """Make ``obj`` JSON-safe: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else None
    return obj


def write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(clean(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _num(x):
    if x is None:
        return ""
    if isinstance(x, float) and not math.isfinite(x):
        return ""
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def load_trips(paths, cfg):
    trips = []
    for p in paths:
        trips.append(load_trip_dir(p, gps_join_tolerance_s=cfg.gps_join_tolerance_s, salt=cfg.salt))
    ids = [t.trip_id for t in trips]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate trip ids {ids}")
    return trips


def features_for(trips, cfg):
    return {t.trip_id: extract_features(t, speed_cap_mps=cfg.speed_cap_mps) for t in trips}


def separate(method, features_by_trip, cfg):
    """Run one separation method over all trips.

    FCM and GMM are fitted once on the pooled vectors; the filters run per
    trip because the RSSI percentile cut of method 2 is a per-trip quantity.
    """
    vectors = [v for tid in sorted(features_by_trip) for v in features_by_trip[tid]]
    if not vectors:
        raise ValueError("no MAC feature vectors to separate")
    info = {"method": method}
    if method in ("fcm", "gmm"):
        if len(vectors) < 2:
            raise ValueError(f"{method} needs at least 2 MACs")
        if method == "fcm":
            part = fcm_fit(vectors, m=cfg.fcm_m, seed=cfg.seed, max_iter=cfg.fcm_max_iter, tol=cfg.fcm_tol)
            info.update(cost=part.cost, cost_history=part.cost_history)
        else:
            part = gmm_fit(vectors, seed=cfg.seed, max_iter=cfg.gmm_max_iter, tol=cfg.gmm_tol)
            info.update(log_likelihood_history=part.log_likelihood_history)
        info.update(seed=cfg.seed, iterations=part.n_iterations, centers=part.centers_original_units())
        labels = harden(part)
        u = np.asarray(part.u_passenger, dtype=float)
    elif method in ("fm1", "fm2"):
        labels = []
        for tid in sorted(features_by_trip):
            vs = features_by_trip[tid]
            labels += filter_method_1(vs, cfg.filters) if method == "fm1" else filter_method_2(vs, cfg.filters)
        u = np.array([1.0 if lab == PASSENGER else 0.0 for lab in labels])
    else:
        raise ValueError(f"unknown separation method {method!r}")
    return Separation(method, vectors, labels, u, info)


def validity_of(sep, scaler=None):
    X = feature_matrix(sep.vectors)
    if scaler is None:
        scaler = Standardizer().fit(X)
    if len(set(sep.labels)) < 2:
        return None
    return validity_report(scaler.transform(X), sep.labels).to_dict()


def write_labels(sep, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LABELS_HEADER)
        for v, lab, u in zip(sep.vectors, sep.labels, sep.u_passenger):
            w.writerow([v.trip_id, v.mac, v.protocol, _num(float(u)), _num(float(1.0 - u)), lab, sep.method])


def read_label_rows(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing input file: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and ("mac" not in rows[0] or "label" not in rows[0]):
        raise ValueError(f"{path}: labels need 'mac' and 'label' columns")
    return rows


def truth_labels(trips_dirs):
    """``{(trip_id, mac): label}`` from each trip's labels.csv, or None if any is missing."""
    out = {}
    for d, trip_id in trips_dirs:
        p = Path(d) / TRIP_FILES["labels"]
        if not p.exists():
            return None
        for row in read_label_rows(p):
            out[(trip_id, row["mac"])] = row["label"]
    return out


def score_against(sep, truth):
    pred = {(v.trip_id, v.protocol, v.mac): lab for v, lab in zip(sep.vectors, sep.labels)}
    ref = {}
    for (tid, proto, mac) in pred:
        if (tid, mac) not in truth:
            raise ValueError(f"no truth label for MAC {mac} in trip {tid}")
        ref[(tid, proto, mac)] = truth[(tid, mac)]
    return score_separation(pred, ref)


def stop_records(trips, features_by_trip, passenger_keys, radius_m=None):
    """Stop assignments and per-stop MAC counts for the passenger-labelled MACs."""
    records, assignments = {}, {}
    for trip in trips:
        vs = [v for v in features_by_trip[trip.trip_id] if (v.trip_id, v.protocol, v.mac) in passenger_keys]
        assignments[trip.trip_id] = [assign_stops(v, trip.stations, radius_m) for v in vs]
        records[trip.trip_id] = stop_counts(assignments[trip.trip_id], trip)
    return records, assignments


def estimate(records, regression, targets, cfg, models=None):
    """Fit (or apply ``models``) and predict every stop of every trip.

    Returns ``(rows, metrics, fitted)`` where ``rows`` follow ESTIMATES_HEADER
    minus the separation column, ``metrics`` maps target to EvalMetrics (or
    None without truth) and ``fitted`` maps target to the model used.
    """
    flat = [r for tid in sorted(records) for r in records[tid]]
    rows, metrics, fitted = [], {}, {}
    for target in targets:
        X = np.array([r.regressors(target).as_array() for r in flat], dtype=float)
        truth = [r.truth_value(target) for r in flat]
        labelled = [i for i, t in enumerate(truth) if t is not None]
        split = {}
        if models is not None:
            if target not in models:
                raise ValueError(f"no model supplied for target {target!r}")
            model = models[target]
            test_idx = labelled
            split = {i: "all" for i in labelled}
        else:
            if len(labelled) < 2:
                raise ValueError("training needs ground truth for at least 2 stops")
            groups = [flat[i].trip_id for i in labelled] if cfg.split_mode == "trip" else None
            train, test = train_test_split(labelled, cfg.test_fraction, seed=cfg.seed, groups=groups)
            y = np.array([truth[i] for i in train], dtype=float)
            if regression == "rf":
                model = rf_fit(X[train], y, n_tree=cfg.n_tree, seed=cfg.seed, target=target)
            else:
                model = ols_fit(X[train], y, target=target)
            test_idx = list(test)
            split = {i: "train" for i in train}
            split.update({i: "test" for i in test})
        raw = model.predict(X)
        counts = model.predict_counts(X)
        fitted[target] = model
        for i, r in enumerate(flat):
            rows.append([r.trip_id, r.stop_seq, target, regression, split.get(i, ""),
                         r.mac_count(target), truth[i], float(raw[i]), int(counts[i])])
            r.estimates[(regression, target)] = int(counts[i])
        if test_idx:
            y_true = np.array([truth[i] for i in test_idx], dtype=float)
            y_hat = raw[test_idx] if cfg.metrics_on == "raw" else counts[test_idx]
            metrics[target] = evaluate(y_hat, y_true)
        else:
            metrics[target] = None
    return rows, metrics, fitted


def write_estimates(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ESTIMATES_HEADER)
        for r in rows:
            w.writerow([_num(x) if isinstance(x, float) else ("" if x is None else x) for x in r])


def write_metrics(entries, path):
    """``entries`` is a list of ``(target, method, EvalMetrics)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for target, method, m in entries:
            w.writerow([target, method, _num(m.mse), _num(m.mae), _num(m.mape), m.n_excluded_zero_truth, m.n])


def load_models(paths):
    models = {}
    for p in paths:
        if not Path(p).exists():
            raise FileNotFoundError(f"missing model file: {p}")
        model = load_model(p)
        if model.target is None:
            raise ValueError(f"{p}: model has no target")
        models[model.target] = model
    return models


def manifest(cfg, inputs, command):
    import numpy, scipy, sklearn
    return {
        "layout_version": LAYOUT_VERSION,
        "command": command,
        "config": cfg.to_dict() if hasattr(cfg, "to_dict") else cfg,
        "seed": getattr(cfg, "seed", None),
        "inputs": [str(p) for p in inputs],
        "versions": {"transitflow": __version__, "python": platform.python_version(),
                     "numpy": numpy.__version__, "scipy": scipy.__version__, "scikit-learn": sklearn.__version__},
    }


def run_pipeline(cfg: PipelineConfig, out_dir, log=print):
    """Run every configured separation x regression combination and write the report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "plots").mkdir(exist_ok=True)
    (out / "models").mkdir(exist_ok=True)
    trip_dirs = [Path(p) for p in cfg.trips]
    if not trip_dirs:
        raise ValueError("no trips given")
    trips = load_trips(trip_dirs, cfg)
    feats = features_for(trips, cfg)
    all_vectors = [v for tid in sorted(feats) for v in feats[tid]]
    write_features(all_vectors, out / "features.csv", with_trip=True)
    scaler = Standardizer().fit(feature_matrix(all_vectors))
    truth = truth_labels([(d, t.trip_id) for d, t in zip(trip_dirs, trips)])
    have_truth = all(t.truth for t in trips)

    summary = {
        "layout_version": LAYOUT_VERSION,
        "trips": [{"trip_id": t.trip_id, "load": t.report.to_dict(), "n_macs": len(feats[t.trip_id]),
                   "n_stations": len(t.stations), "has_ground_truth": bool(t.truth)} for t in trips],
        "separation": {},
        "regression": {},
    }
    metric_entries, all_estimates = [], []
    plot_data = {}
    for method in cfg.separation:
        sep = separate(method, feats, cfg)
        write_labels(sep, out / f"labels_{method}.csv")
        entry = {
            "n_passenger": sep.labels.count(PASSENGER),
            "n_non_passenger": sep.labels.count(NON_PASSENGER),
            "validity": validity_of(sep, scaler),
            "scores": score_against(sep, truth) if truth is not None else None,
        }
        entry.update({k: v for k, v in sep.info.items() if k in ("seed", "iterations", "cost")})
        radius = cfg.filters.m2_stop_radius_m if method == "fm2" else None
        records, assignments = stop_records(trips, feats, sep.passenger_keys(), radius)
        entry["assignment"] = {tid: assignment_summary(a) for tid, a in sorted(assignments.items())}
        flat = [r for tid in sorted(records) for r in records[tid]]
        write_stop_counts(flat, out / f"stop_counts_{method}.csv")
        for trip in trips:
            od = build_od(assignments[trip.trip_id], [s.stop_seq for s in trip.stations])
            od.write_csv(out / f"od_matrix_{method}_{trip.trip_id}.csv")
        summary["separation"][method] = entry
        log(f"{method}: {entry['n_passenger']} passenger / {entry['n_non_passenger']} non-passenger MACs")

        if not have_truth:
            continue
        for reg in cfg.regression:
            rows, metrics, fitted = estimate(records, reg, cfg.targets, cfg)
            all_estimates += [r[:3] + [method] + r[3:] for r in rows]
            for target in cfg.targets:
                save_model(fitted[target], out / "models" / f"{method}_{reg}_{target}.json")
                m = metrics[target]
                if m is not None:
                    metric_entries.append((target, f"{method}+{reg}", m))
        plot_data[method] = records

    if have_truth:
        write_estimates(all_estimates, out / "estimates.csv")
        write_metrics(metric_entries, out / "metrics.csv")
        summary["regression"] = {
            "split_mode": cfg.split_mode, "test_fraction": cfg.test_fraction, "metrics_on": cfg.metrics_on,
            "metrics": [dict(target=t, method=mth, **m.to_dict()) for t, mth, m in metric_entries],
        }
    else:
        summary["regression"] = {"notice": "ground truth missing for at least one trip; metrics omitted"}
        log("notice: ground truth missing, regression metrics omitted")
    if cfg.separation:
        _plots(out, cfg, trips, plot_data, all_estimates)
    summary["files"] = sorted(str(p.relative_to(out)) for p in out.rglob("*")
                              if p.is_file() and p.name not in ("summary.json", "manifest.json"))
    write_json(summary, out / "summary.json")
    write_json(manifest(cfg, cfg.trips, "pipeline"), out / "manifest.json")
    return summary


def _plots(out, cfg, trips, plot_data, estimates):
    method = cfg.separation[0]
    est = {}
    for r in estimates:
        trip_id, stop_seq, target, sep, reg = r[:5]
        if sep == method and target == "onboard":
            est[(reg, trip_id, stop_seq)] = r[-1]
    for trip in trips:
        stops = [s.stop_seq for s in trip.stations]
        series = {}
        if trip.truth:
            by = {t.stop_seq: t.onboard for t in trip.truth}
            series["truth onboard"] = [by.get(s) for s in stops]
        recs = plot_data.get(method, {}).get(trip.trip_id)
        if recs:
            series[f"{method} MAC onboard"] = [r.mac_onboard for r in recs]
        for reg in cfg.regression:
            vals = [est.get((reg, trip.trip_id, s)) for s in stops]
            if any(v is not None for v in vals):
                series[f"{reg} estimate"] = vals
        if series:
            svg = line_chart(stops, series, title=f"Onboard counts, trip {trip.trip_id}",
                             xlabel="stop sequence", ylabel="count")
            (out / "plots" / f"onboard_{trip.trip_id}.svg").write_text(svg)
    groups = {}
    for reg in cfg.regression:
        pairs = [(r[7], r[-1]) for r in estimates
                 if r[3] == method and r[4] == reg and r[2] == "onboard" and r[7] is not None]
        if pairs:
            groups[f"{method}+{reg}"] = ([p[0] for p in pairs], [p[1] for p in pairs])
    if groups:
        (out / "plots" / "scatter_onboard.svg").write_text(
            scatter_chart(groups, title="Onboard truth vs estimate"))
