"""Command-line entry point.

Exit codes: 0 success, 1 runtime or data error, 2 usage or config error
(including missing input files).
"""

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .config import ConfigError, PipelineConfig, load_config, scenario_from_flat
from .features import read_features, write_features
from .ingest import TRIP_FILES, DataError, read_labels
from .pipeline import (
    clean, estimate, features_for, load_models, load_trips, manifest, read_label_rows, run_pipeline,
    save_model, score_against, separate, stop_records, truth_labels, validity_of, write_estimates,
    write_json, write_labels, write_metrics,
)
from .ridership import build_od, write_stop_counts
from .simgen import generate, score_separation

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
DAY = 86400.0


class UsageError(Exception):
    pass


def _csv_list(text):
    return [x.strip() for x in text.split(",") if x.strip()]


def _global_parent(suppress):
    p = argparse.ArgumentParser(add_help=False)
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=default, help="config file (INI with dotted sections)")
    p.add_argument("--seed", type=int, default=default, help="random seed; overrides the config")
    p.add_argument("--out", default=default, help="output directory")
    return p


def build_parser():
    parser = argparse.ArgumentParser(prog="transitflow", parents=[_global_parent(False)],
                                     description="Ridership estimation from Wi-Fi/Bluetooth MAC sensing.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = [_global_parent(True)]

    p = sub.add_parser("simulate", parents=common, help="write synthetic trip directories")
    p.add_argument("--n-trips", type=int, default=1,
                   help="trips to write; trip k uses seed+k and starts k days and 3k hours later")

    p = sub.add_parser("extract", parents=common, help="per-MAC features for one or more trips")
    p.add_argument("trips", nargs="+", help="trip directories")

    p = sub.add_parser("cluster", parents=common, help="FCM or GMM separation of a features file")
    p.add_argument("features")
    p.add_argument("--method", default="fcm", choices=["fcm", "gmm"])

    p = sub.add_parser("filter", parents=common, help="threshold-filter separation of a features file")
    p.add_argument("features")
    p.add_argument("--method", default="fm1", choices=["fm1", "fm2"])

    p = sub.add_parser("estimate", parents=common, help="stop counts, O-D matrices and regression estimates")
    p.add_argument("trips", nargs="+", help="trip directories")
    p.add_argument("--labels", required=True, help="labels CSV from cluster/filter")
    p.add_argument("--method", default="rf", choices=["rf", "ols"])
    p.add_argument("--model", action="append", default=[], help="serialized model (one per target)")
    p.add_argument("--targets", type=_csv_list, default=None)

    p = sub.add_parser("pipeline", parents=common, help="full report over separation x regression methods")
    p.add_argument("trips", nargs="*", help="trip directories (default: pipeline.trips from the config)")
    p.add_argument("--separation", type=_csv_list, default=None)
    p.add_argument("--regression", type=_csv_list, default=None)
    p.add_argument("--targets", type=_csv_list, default=None)

    p = sub.add_parser("evaluate", parents=common, help="score predicted labels against truth labels")
    p.add_argument("labels", help="predicted labels CSV")
    p.add_argument("--truth", action="append", default=[],
                   help="trip directory or labels CSV holding true labels; repeatable")
    return parser


def _flat_config(args):
    if args.config is None:
        return {}
    return load_config(args.config)


def _pipeline_config(args, flat, **overrides):
    cfg = PipelineConfig.from_flat(flat)
    if args.seed is not None:
        cfg.seed = args.seed
    for k, v in overrides.items():
        if v is not None:
            setattr(cfg, k, v)
    return cfg.validate()


def _out(args, default):
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args, flat):
    out = _out(args, "sim")
    base = scenario_from_flat(flat, seed=args.seed)
    if args.n_trips < 1:
        raise UsageError("--n-trips must be >= 1")
    written = []
    for k in range(args.n_trips):
        if args.n_trips == 1:
            cfg, target = base, out
        else:
            trip_id = f"trip_{k + 1:02d}"
            cfg = dataclasses.replace(base, seed=base.seed + k, trip_id=trip_id,
                                      start_time=base.start_time + k * DAY + (3 * k % 12) * 3600.0)
            target = out / trip_id
        trip = generate(cfg)
        trip.write(target)
        written.append(str(target))
        print(f"{target}: {len(trip.sensing)} sensing rows, {len(trip.labels)} MACs")
    return EXIT_OK


def cmd_extract(args, flat):
    cfg = _pipeline_config(args, flat)
    out = _out(args, "features")
    trips = load_trips(args.trips, cfg)
    feats = features_for(trips, cfg)
    vectors = [v for tid in sorted(feats) for v in feats[tid]]
    write_features(vectors, out / "features.csv", with_trip=True)
    write_json({t.trip_id: t.report.to_dict() for t in trips}, out / "load_report.json")
    write_json(manifest(cfg, args.trips, "extract"), out / "manifest.json")
    print(f"{len(vectors)} MAC feature vectors -> {out / 'features.csv'}")
    return EXIT_OK


def _separate_file(args, flat):
    cfg = _pipeline_config(args, flat)
    path = Path(args.features)
    if not path.exists():
        raise FileNotFoundError(f"missing input file: {path}")
    vectors = read_features(path)
    by_trip = {}
    for v in vectors:
        by_trip.setdefault(v.trip_id, []).append(v)
    sep = separate(args.method, by_trip, cfg)
    out = _out(args, args.command)
    write_labels(sep, out / "labels.csv")
    report = {k: v for k, v in sep.info.items() if k in ("method", "seed", "iterations", "cost")}
    report.update(n_passenger=sep.labels.count("passenger"), n_non_passenger=sep.labels.count("non_passenger"),
                  validity=validity_of(sep))
    write_json(report, out / "validity.json")
    write_json(manifest(cfg, [str(path)], args.command), out / "manifest.json")
    print(json.dumps(clean(report["validity"]), sort_keys=True))
    return EXIT_OK


def _passenger_keys(label_rows, feats):
    exact = {(r["trip_id"], r["protocol"], r["mac"]) for r in label_rows
             if r["label"] == "passenger" and r.get("trip_id") is not None and r.get("protocol") is not None}
    by_mac = {r["mac"] for r in label_rows
              if r["label"] == "passenger" and (r.get("trip_id") is None or r.get("protocol") is None)}
    keys = set(exact)
    for vs in feats.values():
        for v in vs:
            if v.mac in by_mac:
                keys.add((v.trip_id, v.protocol, v.mac))
    return keys


def cmd_estimate(args, flat):
    cfg = _pipeline_config(args, flat, targets=args.targets)
    out = _out(args, "estimate")
    rows = read_label_rows(args.labels)
    trips = load_trips(args.trips, cfg)
    feats = features_for(trips, cfg)
    methods = {r.get("method") for r in rows}
    radius = cfg.filters.m2_stop_radius_m if methods == {"fm2"} else None
    records, assignments = stop_records(trips, feats, _passenger_keys(rows, feats), radius)
    write_stop_counts([r for tid in sorted(records) for r in records[tid]], out / "stop_counts.csv")
    for trip in trips:
        od = build_od(assignments[trip.trip_id], [s.stop_seq for s in trip.stations])
        od.write_csv(out / f"od_matrix_{trip.trip_id}.csv")

    models = load_models(args.model) if args.model else None
    have_truth = all(t.truth for t in trips)
    if models is None and not have_truth:
        raise UsageError("no ground truth to train on; pass --model with serialized models")
    if models is not None:
        method = {type(m).__name__ for m in models.values()}
        reg = "rf" if method == {"RandomForestCountRegressor"} else "ols" if method == {"LinearCountRegressor"} else "mixed"
    else:
        reg = args.method
    est_rows, metrics, fitted = estimate(records, reg, cfg.targets, cfg, models=models)
    sep = ",".join(sorted(m for m in methods if m)) or "labels"
    write_estimates([r[:3] + [sep] + r[3:] for r in est_rows], out / "estimates.csv")
    if models is None:
        (out / "models").mkdir(exist_ok=True)
        for target, model in fitted.items():
            save_model(model, out / "models" / f"{reg}_{target}.json")
    if have_truth:
        entries = [(t, reg, metrics[t]) for t in cfg.targets if metrics[t] is not None]
        write_metrics(entries, out / "metrics.csv")
        for t, _, m in entries:
            mape = "n/a" if m.mape is None else f"{m.mape:.2f}%"
            print(f"{t:10s} {reg}: MSE={m.mse:.3f} MAE={m.mae:.3f} MAPE={mape}")
    else:
        print("notice: no ground truth, metrics omitted", file=sys.stderr)
    write_json(manifest(cfg, [*args.trips, args.labels, *args.model], "estimate"), out / "manifest.json")
    return EXIT_OK


def cmd_pipeline(args, flat):
    cfg = _pipeline_config(args, flat, separation=args.separation, regression=args.regression,
                           targets=args.targets)
    if args.trips:
        cfg.trips = list(args.trips)
    if not cfg.trips:
        raise UsageError("no trips given (positional or pipeline.trips in the config)")
    out = _out(args, "report")
    summary = run_pipeline(cfg, out)
    for method, entry in summary["separation"].items():
        if entry["scores"] is not None:
            print(f"{method}: F1={entry['scores']['f1']:.3f}")
    print(f"report -> {out}")
    return EXIT_OK


def cmd_evaluate(args, flat):
    pred_rows = read_label_rows(args.labels)
    if not args.truth:
        raise UsageError("--truth is required")
    truth = {}
    for t in args.truth:
        p = Path(t)
        if p.is_dir():
            truth.update(truth_labels([(p, p.name)]) or {})
            if not (p / TRIP_FILES["labels"]).exists():
                raise FileNotFoundError(f"missing input file: {p / TRIP_FILES['labels']}")
        else:
            truth.update({("", mac): lab for mac, lab in read_labels(p).items()})
    pred, ref = {}, {}
    for r in pred_rows:
        tid = r.get("trip_id") or ""
        key = (tid, r.get("protocol", ""), r["mac"])
        lab = truth.get((tid, r["mac"]), truth.get(("", r["mac"])))
        if lab is None:
            raise DataError(f"no truth label for MAC {r['mac']}")
        pred[key], ref[key] = r["label"], lab
    scores = score_separation(pred, ref)
    if args.out:
        write_json(scores, _out(args, "evaluate") / "scores.json")
    print(json.dumps(scores, sort_keys=True))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate, "extract": cmd_extract, "cluster": _separate_file, "filter": _separate_file,
    "estimate": cmd_estimate, "pipeline": cmd_pipeline, "evaluate": cmd_evaluate,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        flat = _flat_config(args)
        return COMMANDS[args.command](args, flat)
    except (UsageError, ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ValueError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
