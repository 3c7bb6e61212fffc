"""Boarding/alighting stop assignment, O-D matrices and per-stop MAC counts."""

import csv
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import List, Optional

import numpy as np

from .features import haversine
from .ingest import GroundTruthRow
from .regress import StopRegressors

EXCLUDED_SAME_STOP = "same_stop"
EXCLUDED_OUT_OF_RANGE = "out_of_range"


@dataclass(frozen=True)
class StopAssignment:
    mac: str
    boarding: Optional[int]
    alighting: Optional[int]
    swapped: bool = False
    excluded: Optional[str] = None

    @property
    def counted(self):
        return self.excluded is None


def nearest_stop(lat, lon, stations, max_radius_m=None):
    """``stop_seq`` of the closest station, or None if none lies within ``max_radius_m``."""
    d = haversine(lat, lon, np.array([s.lat for s in stations]), np.array([s.lon for s in stations]))
    d = np.atleast_1d(d)
    i = int(np.argmin(d))
    if max_radius_m is not None and d[i] > max_radius_m:
        return None
    return stations[i].stop_seq


def assign_stops(vector, stations, max_radius_m=None):
    """Boarding stop from the first detection's fix, alighting stop from the last.

    Reversed pairs are swapped; equal stops are excluded.
    """
    if not stations:
        raise ValueError("no stations")
    b = nearest_stop(vector.first_lat, vector.first_lon, stations, max_radius_m)
    a = nearest_stop(vector.last_lat, vector.last_lon, stations, max_radius_m)
    if b is None or a is None:
        return StopAssignment(vector.mac, b, a, excluded=EXCLUDED_OUT_OF_RANGE)
    if b == a:
        return StopAssignment(vector.mac, b, a, excluded=EXCLUDED_SAME_STOP)
    if b > a:
        return StopAssignment(vector.mac, a, b, swapped=True)
    return StopAssignment(vector.mac, b, a)


def assignment_summary(assignments):
    return {
        "counted": sum(a.counted for a in assignments),
        "swapped": sum(a.swapped for a in assignments),
        "excluded_same_stop": sum(a.excluded == EXCLUDED_SAME_STOP for a in assignments),
        "excluded_out_of_range": sum(a.excluded == EXCLUDED_OUT_OF_RANGE for a in assignments),
    }


@dataclass
class OdMatrix:
    """``cells[i, j]`` counts MACs boarding at ``stops[i]`` and alighting at ``stops[j]``."""

    stops: List[int]
    cells: np.ndarray

    @property
    def boarding_totals(self):
        return self.cells.sum(axis=1)

    @property
    def alighting_totals(self):
        return self.cells.sum(axis=0)

    @property
    def total(self):
        return int(self.cells.sum())

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["boarding\\alighting", *self.stops, "total_boarding"])
            for i, s in enumerate(self.stops):
                w.writerow([s, *self.cells[i].tolist(), int(self.boarding_totals[i])])
            w.writerow(["total_alighting", *self.alighting_totals.tolist(), self.total])

    @classmethod
    def read_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        stops = [int(s) for s in rows[0][1:-1]]
        cells = np.array([[int(c) for c in r[1:-1]] for r in rows[1:1 + len(stops)]], dtype=int)
        return cls(stops, cells)


def build_od(assignments, stops):
    stops = list(stops)
    pos = {s: i for i, s in enumerate(stops)}
    cells = np.zeros((len(stops), len(stops)), dtype=int)
    for a in assignments:
        if a.counted:
            cells[pos[a.boarding], pos[a.alighting]] += 1
    return OdMatrix(stops, cells)


@dataclass
class StopRecord:
    trip_id: str
    stop_seq: int
    stop_time: float
    mac_boarding: int
    mac_alighting: int
    mac_onboard: int
    is_last_stop: bool = False
    truth: Optional[GroundTruthRow] = None
    estimates: dict = field(default_factory=dict)

    def mac_count(self, target):
        return {"onboard": self.mac_onboard, "boarding": self.mac_boarding,
                "alighting": self.mac_alighting}[target]

    def regressors(self, target="onboard"):
        """Regressors for ``target``; the MAC count used is the one matching the target."""
        dt = datetime.fromtimestamp(self.stop_time, tz=timezone.utc)
        return StopRegressors(dt.weekday(), dt.hour, dt.minute, self.is_last_stop, self.mac_count(target))

    def truth_value(self, target):
        return None if self.truth is None else getattr(self.truth, target)


def counts_from_od(od):
    """Per-stop (boarding, alighting, onboard) MAC counts from an O-D matrix.

    Onboard at stop k is onboard at k-1 plus boarding at k minus alighting at
    k, so a MAC counts from its boarding stop up to the stop before it alights.
    """
    board = od.boarding_totals.astype(int)
    alight = od.alighting_totals.astype(int)
    onboard = np.cumsum(board - alight)
    return board, alight, onboard


def stop_times(trip):
    """Timestamp of the GPS fix closest to each station."""
    d = haversine(trip.gps_lat[:, None], trip.gps_lon[:, None], trip.station_lat[None, :], trip.station_lon[None, :])
    return trip.gps_t[np.argmin(np.atleast_2d(d), axis=0)]


def stop_counts(assignments, trip):
    """StopRecords for every station of the trip, in route order."""
    stops = [s.stop_seq for s in trip.stations]
    od = build_od(assignments, stops)
    board, alight, onboard = counts_from_od(od)
    times = stop_times(trip)
    truth = {r.stop_seq: r for r in (trip.truth or [])}
    return [
        StopRecord(
            trip_id=trip.trip_id, stop_seq=s, stop_time=float(times[i]),
            mac_boarding=int(board[i]), mac_alighting=int(alight[i]), mac_onboard=int(onboard[i]),
            is_last_stop=(i == len(stops) - 1), truth=truth.get(s),
        )
        for i, s in enumerate(stops)
    ]


STOP_COUNTS_HEADER = ["trip_id", "stop_seq", "mac_boarding", "mac_alighting", "mac_onboard"]
TRUTH_COLUMNS = ["truth_boarding", "truth_alighting", "truth_onboard"]


def write_stop_counts(records, path):
    with_truth = any(r.truth is not None for r in records)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STOP_COUNTS_HEADER + (TRUTH_COLUMNS if with_truth else []))
        for r in records:
            row = [r.trip_id, r.stop_seq, r.mac_boarding, r.mac_alighting, r.mac_onboard]
            if with_truth:
                t = r.truth
                row += [t.boarding, t.alighting, t.onboard] if t else ["", "", ""]
            w.writerow(row)
