"""Loading and validation of sensing logs, GPS traces, station tables and counts.

Each sensing record is joined to the GPS fix with the nearest timestamp.  The
tie-break goes to the earlier fix and records further than
``gps_join_tolerance_s`` from every fix are dropped and counted.
"""

import csv
import hashlib
import hmac
import json
import math
from dataclasses import dataclass, asdict
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator, List, Optional

import numpy as np

PROTOCOLS = ("wifi", "bt")

SENSING_HEADER = ["protocol", "mac", "timestamp", "rssi"]
GPS_HEADER = ["timestamp", "lat", "lon"]
STATIONS_HEADER = ["route_id", "stop_seq", "stop_id", "lat", "lon", "name"]
TRUTH_HEADER = ["trip_id", "stop_seq", "boarding", "alighting", "onboard"]

DEFAULT_JOIN_TOLERANCE_S = 5.0


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


@dataclass(frozen=True)
class SensingRecord:
    protocol: str
    mac: str
    t: float
    rssi: int


@dataclass(frozen=True)
class GpsFix:
    t: float
    lat: float
    lon: float


@dataclass(frozen=True)
class Station:
    route_id: str
    stop_seq: int
    stop_id: str
    lat: float
    lon: float
    name: str = ""


@dataclass(frozen=True)
class GroundTruthRow:
    trip_id: str
    stop_seq: int
    boarding: int
    alighting: int
    onboard: int


@dataclass
class LoadReport:
    rows_read: int
    rows_retained: int
    rows_dropped: int
    tolerance_s: float
    gps_fixes: int
    gps_duplicates_collapsed: int

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass
class TripDataset:
    """Columnar view of one trip.

    Sensing columns are aligned arrays sorted by ``(t, mac, protocol, rssi)``;
    ``fix_index[i]`` points into the GPS arrays.
    """

    trip_id: str
    protocol: np.ndarray
    mac: np.ndarray
    t: np.ndarray
    rssi: np.ndarray
    fix_index: np.ndarray
    gps_t: np.ndarray
    gps_lat: np.ndarray
    gps_lon: np.ndarray
    stations: List[Station]
    truth: Optional[List[GroundTruthRow]] = None
    report: Optional[LoadReport] = None

    @property
    def n_records(self):
        return len(self.t)

    def records(self) -> Iterator[tuple]:
        """Yield ``(SensingRecord, GpsFix)`` pairs."""
        for i in range(self.n_records):
            k = self.fix_index[i]
            yield (
                SensingRecord(str(self.protocol[i]), str(self.mac[i]), float(self.t[i]), int(self.rssi[i])),
                GpsFix(float(self.gps_t[k]), float(self.gps_lat[k]), float(self.gps_lon[k])),
            )

    @property
    def gps(self) -> List[GpsFix]:
        return [GpsFix(float(t), float(a), float(o)) for t, a, o in zip(self.gps_t, self.gps_lat, self.gps_lon)]

    @property
    def station_lat(self):
        return np.array([s.lat for s in self.stations], dtype=float)

    @property
    def station_lon(self):
        return np.array([s.lon for s in self.stations], dtype=float)

    @property
    def station_seq(self):
        return np.array([s.stop_seq for s in self.stations], dtype=int)


def anonymize(mac, salt):
    """Keyed hash of a MAC address; 128-bit hex digest."""
    if not salt:
        raise ValueError("salt must be non-empty")
    digest = hmac.new(salt.encode(), mac.strip().lower().encode(), hashlib.sha256)
    return digest.hexdigest()[:32]


def parse_timestamp(value):
    """Epoch seconds (decimal) or an RFC 3339 string, to float seconds at ms resolution."""
    value = value.strip()
    try:
        t = float(value)
    except ValueError:
        text = value[:-1] + "+00:00" if value.endswith(("Z", "z")) else value
        dt = datetime.fromisoformat(text)
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        t = dt.timestamp()
    if not math.isfinite(t):
        raise ValueError(f"non-finite timestamp {value!r}")
    return round(t, 3)


def _read_rows(path, header):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing input file: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        got = [h.strip() for h in got]
        missing = [h for h in header if h not in got]
        if missing:
            raise DataError(f"{path}: header missing columns {missing}")
        pos = [got.index(h) for h in header]
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(got):
                raise DataError(f"{path}:{reader.line_num}: expected {len(got)} fields, got {len(row)}")
            yield reader.line_num, [row[p].strip() for p in pos]


def read_sensing(path, salt=None):
    protocol, mac, t, rssi = [], [], [], []
    for line, (p, m, ts, r) in _read_rows(path, SENSING_HEADER):
        try:
            p = p.lower()
            if p not in PROTOCOLS:
                raise ValueError(f"unknown protocol {p!r}")
            if not m:
                raise ValueError("empty mac")
            tv = parse_timestamp(ts)
            rv = int(r)
            if not -120 <= rv <= 0:
                raise ValueError(f"rssi {rv} outside [-120, 0]")
        except ValueError as exc:
            raise DataError(f"{path}:{line}: {exc}") from None
        protocol.append(p)
        mac.append(anonymize(m, salt) if salt else m.lower())
        t.append(tv)
        rssi.append(rv)
    return (np.array(protocol, dtype=object), np.array(mac, dtype=object),
            np.array(t, dtype=float), np.array(rssi, dtype=int))


def read_gps(path):
    """Return ``(t, lat, lon, n_duplicates)`` sorted by t; duplicate stamps keep the last-seen fix."""
    latest = {}
    n_rows = 0
    for line, (ts, la, lo) in _read_rows(path, GPS_HEADER):
        try:
            tv = parse_timestamp(ts)
            lat, lon = float(la), float(lo)
            if not (-90 <= lat <= 90 and -180 <= lon <= 180):
                raise ValueError(f"coordinates out of range ({lat}, {lon})")
        except ValueError as exc:
            raise DataError(f"{path}:{line}: {exc}") from None
        latest[tv] = (lat, lon)
        n_rows += 1
    if not latest:
        raise DataError(f"{path}: empty GPS trace")
    ts = np.array(sorted(latest), dtype=float)
    lat = np.array([latest[t][0] for t in ts])
    lon = np.array([latest[t][1] for t in ts])
    return ts, lat, lon, n_rows - len(ts)


def read_stations(path, route_id=None):
    stations = []
    for line, (rid, seq, sid, la, lo, name) in _read_rows(path, STATIONS_HEADER):
        try:
            seq = int(seq)
            if seq < 1:
                raise ValueError(f"stop_seq must be positive, got {seq}")
            lat, lon = float(la), float(lo)
            if not (-90 <= lat <= 90 and -180 <= lon <= 180):
                raise ValueError(f"coordinates out of range ({lat}, {lon})")
        except ValueError as exc:
            raise DataError(f"{path}:{line}: {exc}") from None
        stations.append(Station(rid, seq, sid, lat, lon, name))
    routes = sorted({s.route_id for s in stations})
    if route_id is None:
        if len(routes) > 1:
            raise DataError(f"{path}: several routes {routes}; pass route_id")
    else:
        stations = [s for s in stations if s.route_id == route_id]
    if not stations:
        raise DataError(f"{path}: no stations")
    seqs = [s.stop_seq for s in stations]
    if len(set(seqs)) != len(seqs):
        raise DataError(f"{path}: duplicate stop_seq within route")
    return sorted(stations, key=lambda s: s.stop_seq)


def read_truth(path, trip_id=None):
    rows = []
    for line, (tid, seq, b, a, o) in _read_rows(path, TRUTH_HEADER):
        try:
            row = GroundTruthRow(tid, int(seq), int(b), int(a), int(o))
            if min(row.boarding, row.alighting, row.onboard) < 0 or row.stop_seq < 1:
                raise ValueError("negative count or stop_seq")
        except ValueError as exc:
            raise DataError(f"{path}:{line}: {exc}") from None
        rows.append(row)
    if trip_id is not None:
        rows = [r for r in rows if r.trip_id == trip_id]
    check_conservation(rows, source=str(path))
    return rows


def check_conservation(rows, source="ground truth"):
    """Raise DataError unless onboard_k = onboard_{k-1} + boarding_k - alighting_k for every trip."""
    by_trip = {}
    for r in rows:
        by_trip.setdefault(r.trip_id, []).append(r)
    for tid, trip_rows in by_trip.items():
        onboard = 0
        for r in sorted(trip_rows, key=lambda r: r.stop_seq):
            onboard = onboard + r.boarding - r.alighting
            if r.onboard != onboard:
                raise DataError(
                    f"{source}: conservation violated for trip {tid} at stop {r.stop_seq}: "
                    f"onboard {r.onboard} != {onboard}")


def nearest_fix(gps_t, t):
    """Index of the GPS fix closest in time to each ``t``; ties go to the earlier fix."""
    t = np.asarray(t, dtype=float)
    right = np.searchsorted(gps_t, t, side="left")
    right = np.clip(right, 0, len(gps_t) - 1)
    left = np.clip(right - 1, 0, len(gps_t) - 1)
    use_left = np.abs(t - gps_t[left]) <= np.abs(gps_t[right] - t)
    return np.where(use_left, left, right)


def load_trip(sensing_path, gps_path, stations_path, truth_path=None, *,
              trip_id=None, route_id=None, gps_join_tolerance_s=DEFAULT_JOIN_TOLERANCE_S,
              salt=None):
    """Load one trip from its CSV files and join sensing records to GPS fixes."""
    for p in (sensing_path, gps_path, stations_path):
        if not Path(p).exists():
            raise FileNotFoundError(f"missing input file: {p}")
    if trip_id is None:
        trip_id = Path(sensing_path).resolve().parent.name
    protocol, mac, t, rssi = read_sensing(sensing_path, salt=salt)
    gps_t, gps_lat, gps_lon, n_dup = read_gps(gps_path)
    stations = read_stations(stations_path, route_id=route_id)
    truth = None
    if truth_path is not None and Path(truth_path).exists():
        truth = read_truth(truth_path)
        ids = {r.trip_id for r in truth}
        if trip_id in ids:
            truth = [r for r in truth if r.trip_id == trip_id]
        elif len(ids) == 1:
            trip_id = ids.pop()
        elif ids:
            raise DataError(f"{truth_path}: no rows for trip {trip_id!r}")

    n_read = len(t)
    fix = nearest_fix(gps_t, t) if n_read else np.zeros(0, dtype=int)
    keep = np.abs(t - gps_t[fix]) <= gps_join_tolerance_s + 1e-9
    protocol, mac, t, rssi, fix = protocol[keep], mac[keep], t[keep], rssi[keep], fix[keep]
    order = np.lexsort((rssi, protocol.astype(str), mac.astype(str), t))

    report = LoadReport(
        rows_read=n_read,
        rows_retained=int(keep.sum()),
        rows_dropped=int(n_read - keep.sum()),
        tolerance_s=float(gps_join_tolerance_s),
        gps_fixes=len(gps_t),
        gps_duplicates_collapsed=n_dup,
    )
    return TripDataset(
        trip_id=trip_id,
        protocol=protocol[order], mac=mac[order], t=t[order], rssi=rssi[order], fix_index=fix[order],
        gps_t=gps_t, gps_lat=gps_lat, gps_lon=gps_lon,
        stations=stations, truth=truth, report=report,
    )


TRIP_FILES = {
    "sensing": "sensing.csv",
    "gps": "gps.csv",
    "stations": "stations.csv",
    "truth": "ground_truth.csv",
    "labels": "labels.csv",
}


def load_trip_dir(path, **kwargs):
    """Load a trip from a directory holding the standard file names."""
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"missing trip directory: {path}")
    truth = path / TRIP_FILES["truth"]
    return load_trip(path / TRIP_FILES["sensing"], path / TRIP_FILES["gps"], path / TRIP_FILES["stations"],
                     truth if truth.exists() else None, trip_id=kwargs.pop("trip_id", path.name), **kwargs)


def read_labels(path):
    """Read a CSV with ``mac`` and ``label`` columns into a ``{mac: label}`` dict."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing input file: {path}")
    with open(path, newline="") as fh:
        return {row["mac"]: row["label"] for row in csv.DictReader(fh)}
