"""Per-MAC feature extraction from a joined trip."""

import csv
import logging
from dataclasses import dataclass, asdict
from typing import List, Optional

import numpy as np

logger = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_000.0
DEFAULT_SPEED_CAP_MPS = 45.0

FEATURE_NAMES = (
    "n_detections",
    "duration_s",
    "avg_rssi",
    "max_rssi",
    "least_dist_start_m",
    "least_dist_end_m",
    "travel_dist_m",
    "avg_speed_mps",
    "max_speed_mps",
)
DURATION_INDEX = FEATURE_NAMES.index("duration_s")
FEATURES_HEADER = ["mac", "protocol", *FEATURE_NAMES]


def haversine(lat1, lon1, lat2, lon2):
    """Great-circle distance in meters; broadcasts over numpy arrays."""
    lat1, lon1, lat2, lon2 = (np.radians(np.asarray(a, dtype=float)) for a in (lat1, lon1, lat2, lon2))
    a = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    d = 2 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))
    return float(d) if np.ndim(d) == 0 else d


@dataclass
class MacFeatureVector:
    mac: str
    protocol: str
    n_detections: int
    duration_s: float
    avg_rssi: float
    max_rssi: float
    least_dist_start_m: float
    least_dist_end_m: float
    travel_dist_m: float
    avg_speed_mps: float
    max_speed_mps: float
    label: Optional[str] = None
    # detection window and its assigned fixes; used for stop assignment
    t_first: float = 0.0
    t_last: float = 0.0
    first_lat: float = 0.0
    first_lon: float = 0.0
    last_lat: float = 0.0
    last_lon: float = 0.0
    trip_id: str = ""

    @property
    def key(self):
        return (self.protocol, self.mac)

    def as_array(self):
        return np.array([getattr(self, f) for f in FEATURE_NAMES], dtype=float)

    def to_dict(self):
        return asdict(self)


def feature_matrix(vectors):
    """Stack vectors into an ``(n, 9)`` float array in FEATURE_NAMES order."""
    if not vectors:
        return np.zeros((0, len(FEATURE_NAMES)))
    return np.vstack([v.as_array() for v in vectors])


class _RangeMax:
    """Sparse table answering max over ``values[lo:hi]`` in O(1) per query."""

    def __init__(self, values):
        self.levels = [np.asarray(values, dtype=float)]
        k = 1
        while 2 * k <= len(values):
            prev = self.levels[-1]
            self.levels.append(np.maximum(prev[:-k], prev[k:]))
            k *= 2

    def query(self, lo, hi):
        lo = np.asarray(lo)
        hi = np.asarray(hi)
        out = np.zeros(lo.shape, dtype=float)
        ok = hi > lo
        if not ok.any():
            return out
        length = hi[ok] - lo[ok]
        j = np.floor(np.log2(length)).astype(int)
        res = np.empty(len(length))
        for level in np.unique(j):
            sel = j == level
            table = self.levels[level]
            a = lo[ok][sel]
            b = hi[ok][sel] - (1 << level)
            res[sel] = np.maximum(table[a], table[b])
        out[ok] = res
        return out


def extract_features(trip, speed_cap_mps=DEFAULT_SPEED_CAP_MPS) -> List[MacFeatureVector]:
    """One feature vector per unique ``(protocol, mac)``, ordered by mac then protocol."""
    if trip.n_records == 0:
        raise ValueError(f"trip {trip.trip_id!r} has no sensing records")
    if not trip.stations:
        raise ValueError(f"trip {trip.trip_id!r} has no stations")

    proto = trip.protocol.astype(str)
    mac = trip.mac.astype(str)
    order = np.lexsort((trip.t, proto, mac))
    proto, mac = proto[order], mac[order]
    t = trip.t[order]
    rssi = trip.rssi[order].astype(float)
    fix = trip.fix_index[order]

    new_group = np.ones(len(t), dtype=bool)
    new_group[1:] = (mac[1:] != mac[:-1]) | (proto[1:] != proto[:-1])
    starts = np.flatnonzero(new_group)
    ends = np.append(starts[1:], len(t)) - 1

    n_det = ends - starts + 1
    t_first, t_last = t[starts], t[ends]
    duration = t_last - t_first
    avg_rssi = np.add.reduceat(rssi, starts) / n_det
    max_rssi = np.maximum.reduceat(rssi, starts)

    glat, glon, gt = trip.gps_lat, trip.gps_lon, trip.gps_t
    f_first, f_last = fix[starts], fix[ends]
    slat, slon = trip.station_lat, trip.station_lon
    d_start = haversine(glat[f_first][:, None], glon[f_first][:, None], slat[None, :], slon[None, :])
    d_end = haversine(glat[f_last][:, None], glon[f_last][:, None], slat[None, :], slon[None, :])
    least_start = np.atleast_2d(d_start).min(axis=1)
    least_end = np.atleast_2d(d_end).min(axis=1)

    # GPS segments with per-segment speed clamped to the cap
    if len(gt) > 1:
        seg_len = np.atleast_1d(haversine(glat[:-1], glon[:-1], glat[1:], glon[1:]))
        seg_dt = np.diff(gt)
        speed = seg_len / seg_dt
        capped = speed > speed_cap_mps
        if capped.any():
            logger.info("trip %s: %d GPS segments above %.1f m/s clamped",
                        trip.trip_id, int(capped.sum()), speed_cap_mps)
        speed = np.minimum(speed, speed_cap_mps)
        seg_len = speed * seg_dt
    else:
        seg_len = np.zeros(0)
        speed = np.zeros(0)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    # fixes inside [t_first, t_last]: indices lo..hi
    lo = np.searchsorted(gt, t_first, side="left")
    hi = np.searchsorted(gt, t_last, side="right") - 1
    has_seg = hi > lo
    lo_c = np.clip(lo, 0, len(cum) - 1)
    hi_c = np.clip(hi, 0, len(cum) - 1)
    travel = np.where(has_seg, cum[hi_c] - cum[lo_c], 0.0)
    max_speed = _RangeMax(speed).query(lo, np.where(has_seg, hi, lo)) if len(speed) else np.zeros(len(lo))
    with np.errstate(divide="ignore", invalid="ignore"):
        avg_speed = np.where(duration > 0, travel / np.where(duration > 0, duration, 1.0), 0.0)
    zero = duration <= 0
    travel = np.where(zero, 0.0, travel)
    max_speed = np.where(zero, 0.0, max_speed)

    out = []
    for g in range(len(starts)):
        out.append(MacFeatureVector(
            mac=mac[starts[g]], protocol=proto[starts[g]],
            n_detections=int(n_det[g]), duration_s=float(duration[g]),
            avg_rssi=float(avg_rssi[g]), max_rssi=float(max_rssi[g]),
            least_dist_start_m=float(least_start[g]), least_dist_end_m=float(least_end[g]),
            travel_dist_m=float(travel[g]), avg_speed_mps=float(avg_speed[g]),
            max_speed_mps=float(max_speed[g]),
            t_first=float(t_first[g]), t_last=float(t_last[g]),
            first_lat=float(glat[f_first[g]]), first_lon=float(glon[f_first[g]]),
            last_lat=float(glat[f_last[g]]), last_lon=float(glon[f_last[g]]),
            trip_id=trip.trip_id,
        ))
    return out


def summarize_features(vectors, label=None):
    """Per-feature min/max/mean/sd (population sd).

    With ``label`` set to ``True`` the summary is split by each vector's
    ``label``; a string restricts it to that label.
    """
    if not vectors:
        raise ValueError("no feature vectors to summarize")
    if label is True:
        labels = sorted({v.label for v in vectors if v.label is not None})
        return {lab: summarize_features([v for v in vectors if v.label == lab]) for lab in labels}
    if isinstance(label, str):
        vectors = [v for v in vectors if v.label == label]
        if not vectors:
            raise ValueError(f"no vectors labeled {label!r}")
    X = feature_matrix(vectors)
    return {
        name: {
            "min": float(X[:, j].min()),
            "max": float(X[:, j].max()),
            "mean": float(X[:, j].mean()),
            "sd": float(X[:, j].std(ddof=0)),
        }
        for j, name in enumerate(FEATURE_NAMES)
    }


def _fmt(x):
    return f"{x:.6f}".rstrip("0").rstrip(".") if isinstance(x, float) else str(x)


def write_features(vectors, path, with_label=False, with_trip=False):
    header = (["trip_id"] if with_trip else []) + FEATURES_HEADER + (["label"] if with_label else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for v in vectors:
            row = ([v.trip_id] if with_trip else []) + [v.mac, v.protocol] + [_fmt(getattr(v, f)) for f in FEATURE_NAMES]
            if with_label:
                row.append(v.label or "")
            w.writerow(row)


def read_features(path):
    vectors = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kw = {f: float(row[f]) for f in FEATURE_NAMES}
            kw["n_detections"] = int(kw["n_detections"])
            vectors.append(MacFeatureVector(
                mac=row["mac"], protocol=row["protocol"], label=row.get("label") or None,
                trip_id=row.get("trip_id", ""), **kw))
    return vectors
