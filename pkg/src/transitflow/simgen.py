"""Seeded synthetic trips: sensing log, GPS trace, stations, ground truth and labels.

The vehicle drives a polyline through evenly spaced stops, dwelling at each.
Passenger devices are detected from boarding to alighting.  Non-passenger
devices (roadside, station waiters, pedestrians, parallel vehicles) are only
detected while inside the protocol's detection radius.
"""

import csv
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .clustering import NON_PASSENGER, PASSENGER
from .ingest import TRIP_FILES

M_PER_DEG_LAT = 111_194.93  # 6_371_000 * pi / 180


@dataclass
class ScenarioConfig:
    seed: int = 7
    trip_id: str = "trip"
    route_id: str = "R1"
    start_time: float = 1541792338.0  # 2018-11-09T19:38:58Z
    origin_lat: float = 47.6615
    origin_lon: float = -122.3130
    heading_deg: float = 60.0
    heading_jitter_deg: float = 20.0
    n_stops: int = 15
    stop_spacing_m: float = 400.0
    dwell_s: float = 20.0
    cruise_speed_mps: float = 10.0
    gps_interval_s: float = 0.5
    gps_noise_m: float = 1.0
    n_passengers: int = 30
    board_weights: str = "uniform"  # "uniform" or comma-separated weights for stops 1..n_stops-1
    device_discoverable_prob: float = 0.8
    wifi_share: float = 0.85
    wifi_probe_interval_s: float = 15.0
    bt_response_interval_s: float = 30.0
    wifi_radius_m: float = 61.0
    bt_radius_m: float = 18.3
    rssi_intercept_dbm: float = -40.0
    rssi_slope_db: float = 20.0
    rssi_noise_sd: float = 4.0
    body_loss_db: float = 10.0  # extra attenuation for devices outside the vehicle
    n_roadside: int = 30
    n_waiters: int = 15
    n_pedestrians: int = 13
    n_parallel: int = 2
    parallel_span_stops: int = 2
    pedestrian_speed_mps: float = 1.4

    def validate(self):
        for name in ("device_discoverable_prob", "wifi_share"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("n_passengers", "n_roadside", "n_waiters", "n_pedestrians", "n_parallel",
                     "parallel_span_stops", "dwell_s", "gps_noise_m", "rssi_noise_sd", "body_loss_db"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("cruise_speed_mps", "stop_spacing_m", "gps_interval_s", "wifi_probe_interval_s",
                     "bt_response_interval_s", "wifi_radius_m", "bt_radius_m", "pedestrian_speed_mps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.n_stops < 2:
            raise ValueError("infeasible scenario: need at least 2 stops so alighting follows boarding")
        if self.n_parallel and self.parallel_span_stops > self.n_stops - 2:
            raise ValueError("parallel_span_stops too long for the route")
        self.board_probs()
        return self

    def board_probs(self):
        n = self.n_stops - 1
        if self.board_weights == "uniform":
            return np.full(n, 1.0 / n)
        w = np.array([float(x) for x in str(self.board_weights).split(",")])
        if len(w) != n or (w < 0).any() or w.sum() <= 0:
            raise ValueError(f"board_weights needs {n} non-negative weights with positive sum")
        return w / w.sum()

    @classmethod
    def from_dict(cls, d):
        known = {f.name: f.type for f in fields(cls)}
        kw = {}
        for key, value in d.items():
            if key not in known:
                raise ValueError(f"unknown scenario key {key!r}")
            default = getattr(cls, key)
            if isinstance(value, (tuple, list)):
                value = ",".join(str(x) for x in value)
            kw[key] = type(default)(value) if not isinstance(default, str) else str(value)
        return cls(**kw).validate()

    def to_ini(self):
        lines = ["[simulate]"]
        for k, v in asdict(self).items():
            lines.append(f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}")
        return "\n".join(lines) + "\n"


class _Route:
    """Polyline route in a local east/north metric frame."""

    def __init__(self, cfg, rng):
        n = cfg.n_stops
        headings = np.radians(cfg.heading_deg + rng.uniform(-cfg.heading_jitter_deg, cfg.heading_jitter_deg, n - 1))
        steps = cfg.stop_spacing_m * np.column_stack([np.sin(headings), np.cos(headings)])
        self.stops_xy = np.vstack([[0.0, 0.0], np.cumsum(steps, axis=0)])
        self.stops_s = np.arange(n) * cfg.stop_spacing_m
        self.normals = np.column_stack([np.cos(headings), -np.sin(headings)])
        self.cfg = cfg
        cos0 = math.cos(math.radians(cfg.origin_lat))
        self._lon_scale = M_PER_DEG_LAT * cos0

        # timeline knots: arrive/depart per stop
        t, knots_t, knots_s = cfg.start_time, [], []
        self.arrive = np.empty(n)
        self.depart = np.empty(n)
        for k in range(n):
            self.arrive[k] = t
            knots_t.append(t)
            knots_s.append(self.stops_s[k])
            t += cfg.dwell_s
            self.depart[k] = t
            knots_t.append(t)
            knots_s.append(self.stops_s[k])
            t += cfg.stop_spacing_m / cfg.cruise_speed_mps
        self.knots_t = np.array(knots_t)
        self.knots_s = np.array(knots_s)
        self.end_time = self.depart[-1]

    def s_at(self, t):
        return np.interp(t, self.knots_t, self.knots_s)

    def xy_at_s(self, s):
        s = np.asarray(s, dtype=float)
        return np.column_stack([np.interp(s, self.stops_s, self.stops_xy[:, 0]),
                                np.interp(s, self.stops_s, self.stops_xy[:, 1])])

    def normal_at_s(self, s):
        leg = np.clip(np.searchsorted(self.stops_s, s, side="right") - 1, 0, len(self.normals) - 1)
        return self.normals[leg]

    def bus_xy(self, t):
        return self.xy_at_s(self.s_at(t))

    def time_window_near(self, s0, reach):
        """Interval during which the bus is within ``reach`` meters of arc length ``s0``."""
        lo = float(np.interp(s0 - reach, self.knots_s[::2], self.arrive, left=self.cfg.start_time))
        s_hi = s0 + reach
        idx = np.searchsorted(self.stops_s, s_hi, side="right") - 1
        if s_hi >= self.stops_s[-1]:
            hi = self.end_time
        else:
            idx = max(idx, 0)
            hi = self.depart[idx] + (s_hi - self.stops_s[idx]) / self.cfg.cruise_speed_mps
        return lo, hi

    def to_latlon(self, xy):
        xy = np.atleast_2d(xy)
        lat = self.cfg.origin_lat + xy[:, 1] / M_PER_DEG_LAT
        lon = self.cfg.origin_lon + xy[:, 0] / self._lon_scale
        return lat, lon


@dataclass
class SyntheticTrip:
    config: ScenarioConfig
    sensing: list  # (protocol, mac, t, rssi)
    gps: list  # (t, lat, lon)
    stations: list  # (route_id, stop_seq, stop_id, lat, lon, name)
    truth: list  # (trip_id, stop_seq, boarding, alighting, onboard)
    labels: dict  # mac -> label
    sources: dict  # mac -> device source
    journeys: dict = field(default_factory=dict)  # passenger mac -> (board stop, alight stop)

    def write(self, directory):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        with open(d / TRIP_FILES["sensing"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["protocol", "mac", "timestamp", "rssi"])
            for p, m, t, r in self.sensing:
                w.writerow([p, m, f"{t:.3f}", r])
        with open(d / TRIP_FILES["gps"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["timestamp", "lat", "lon"])
            for t, la, lo in self.gps:
                w.writerow([f"{t:.3f}", f"{la:.7f}", f"{lo:.7f}"])
        with open(d / TRIP_FILES["stations"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["route_id", "stop_seq", "stop_id", "lat", "lon", "name"])
            for rid, seq, sid, la, lo, name in self.stations:
                w.writerow([rid, seq, sid, f"{la:.7f}", f"{lo:.7f}", name])
        with open(d / TRIP_FILES["truth"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["trip_id", "stop_seq", "boarding", "alighting", "onboard"])
            w.writerows(self.truth)
        with open(d / TRIP_FILES["labels"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["mac", "label"])
            for m in sorted(self.labels):
                w.writerow([m, self.labels[m]])
        (d / "scenario.ini").write_text(self.config.to_ini())
        return d


def _poisson_times(rng, start, stop, mean_gap):
    if stop <= start:
        return np.zeros(0)
    n_guess = int((stop - start) / mean_gap * 1.5) + 8
    times = start + np.cumsum(rng.exponential(mean_gap, n_guess))
    while times[-1] < stop:
        times = np.concatenate([times, times[-1] + np.cumsum(rng.exponential(mean_gap, n_guess))])
    return times[times < stop]


def generate(config=None):
    """Build a SyntheticTrip; output depends only on the config (seed included)."""
    cfg = (config or ScenarioConfig()).validate()
    rng = np.random.default_rng(cfg.seed)
    route = _Route(cfg, rng)
    n = cfg.n_stops

    # GPS at fixed rate with AR(1) position error
    gps_t = np.round(np.arange(cfg.start_time, route.end_time + 1e-9, cfg.gps_interval_s), 3)
    rho = 0.98
    shocks = rng.normal(0.0, cfg.gps_noise_m * math.sqrt(1 - rho ** 2), (len(gps_t), 2))
    err = np.empty_like(shocks)
    err[0] = rng.normal(0.0, cfg.gps_noise_m, 2)
    for i in range(1, len(gps_t)):
        err[i] = rho * err[i - 1] + shocks[i]
    gps_lat, gps_lon = route.to_latlon(route.bus_xy(gps_t) + err)

    st_lat, st_lon = route.to_latlon(route.stops_xy)
    stations = [(cfg.route_id, k + 1, f"S{k + 1:03d}", float(st_lat[k]), float(st_lon[k]), f"Stop {k + 1}")
                for k in range(n)]

    macs = set()

    def new_mac():
        while True:
            v = int(rng.integers(0, 2 ** 48))
            m = ":".join(f"{(v >> (8 * i)) & 0xFF:02x}" for i in range(5, -1, -1))
            if m not in macs:
                macs.add(m)
                return m

    def pick_protocol():
        return "wifi" if rng.random() < cfg.wifi_share else "bt"

    def gap(protocol):
        return cfg.wifi_probe_interval_s if protocol == "wifi" else cfg.bt_response_interval_s

    def radius(protocol):
        return cfg.wifi_radius_m if protocol == "wifi" else cfg.bt_radius_m

    def rssi(dist, outside):
        d = np.maximum(np.asarray(dist, dtype=float), 1.0)
        r = (cfg.rssi_intercept_dbm - cfg.rssi_slope_db * np.log10(d) - (cfg.body_loss_db if outside else 0.0)
             + rng.normal(0.0, cfg.rssi_noise_sd, d.shape))
        return np.clip(np.round(r), -120, -17).astype(int)

    sensing, labels, sources, journeys = [], {}, {}, {}

    def emit(mac, protocol, times, dists, label, source):
        live = (times >= cfg.start_time) & (times <= route.end_time)
        times, dists = np.round(times[live], 3), np.asarray(dists)[live]
        if len(times) == 0:
            return
        for t, r in zip(times, rssi(dists, outside=label != PASSENGER)):
            sensing.append((protocol, mac, float(t), int(r)))
        labels[mac] = label
        sources[mac] = source

    # passengers
    board = np.zeros(n + 1, dtype=int)
    alight = np.zeros(n + 1, dtype=int)
    probs = cfg.board_probs()
    for _ in range(cfg.n_passengers):
        b = int(rng.choice(np.arange(1, n), p=probs))
        a = int(rng.integers(b + 1, n + 1))
        board[b] += 1
        alight[a] += 1
        t_on = route.arrive[b - 1] + rng.uniform(0, cfg.dwell_s)
        t_off = route.arrive[a - 1] + rng.uniform(0, cfg.dwell_s)
        seat = rng.uniform(1.0, 8.0)
        discoverable = rng.random() < cfg.device_discoverable_prob
        protocol = pick_protocol()
        mac = new_mac()
        if not discoverable:
            continue
        mid = _poisson_times(rng, t_on, t_off, gap(protocol))
        times = np.concatenate([[t_on], mid, [t_off]])
        emit(mac, protocol, times, np.full(len(times), seat), PASSENGER, "passenger")
        journeys[mac] = (b, a)

    def detect_static(mac, protocol, xy, t0, t1, source):
        times = _poisson_times(rng, t0, t1, gap(protocol))
        if len(times) == 0:
            return
        d = np.hypot(*(route.bus_xy(times) - xy).T)
        keep = d <= radius(protocol)
        emit(mac, protocol, times[keep], d[keep], NON_PASSENGER, source)

    total = route.stops_s[-1]
    for _ in range(cfg.n_roadside):
        protocol = pick_protocol()
        s0 = rng.uniform(0, total)
        lateral = rng.uniform(8.0, 55.0) * rng.choice([-1.0, 1.0])
        xy = route.xy_at_s(s0)[0] + lateral * route.normal_at_s(s0)
        t0, t1 = route.time_window_near(s0, radius(protocol) + 5.0)
        detect_static(new_mac(), protocol, xy, t0, t1, "roadside")

    for _ in range(cfg.n_waiters):
        protocol = pick_protocol()
        k = int(rng.integers(0, n))
        offset = rng.normal(0.0, 1.0, 2)
        xy = route.stops_xy[k] + rng.uniform(3.0, 15.0) * offset / max(np.hypot(*offset), 1e-9)
        t0 = route.arrive[k] - rng.uniform(30.0, 300.0)
        t1 = route.depart[k] + rng.uniform(0.0, 120.0)
        detect_static(new_mac(), protocol, xy, max(t0, cfg.start_time), t1, "waiter")

    for _ in range(cfg.n_pedestrians):
        protocol = pick_protocol()
        s0 = rng.uniform(0, total)
        lateral = rng.uniform(3.0, 30.0) * rng.choice([-1.0, 1.0])
        direction = rng.choice([-1.0, 1.0])
        t_meet = float(np.interp(s0, route.knots_s[::2], route.arrive))
        t0 = t_meet - rng.uniform(0.0, 120.0)
        t1 = t0 + rng.uniform(60.0, 600.0)
        times = _poisson_times(rng, t0, t1, gap(protocol))
        if len(times) == 0:
            continue
        s_walk = np.clip(s0 + direction * cfg.pedestrian_speed_mps * (times - t0), 0, total)
        xy = route.xy_at_s(s_walk) + lateral * route.normal_at_s(s_walk)
        d = np.hypot(*(route.bus_xy(times) - xy).T)
        keep = d <= radius(protocol)
        emit(new_mac(), protocol, times[keep], d[keep], NON_PASSENGER, "pedestrian")

    for _ in range(cfg.n_parallel):
        protocol = pick_protocol()
        k = int(rng.integers(0, n - 1 - cfg.parallel_span_stops))
        t0 = route.depart[k] + rng.uniform(0.0, route.arrive[k + 1] - route.depart[k])
        k1 = k + cfg.parallel_span_stops
        t1 = route.depart[k1] + rng.uniform(0.0, route.arrive[k1 + 1] - route.depart[k1])
        offset = rng.uniform(3.0, 12.0)
        times = _poisson_times(rng, t0, t1, gap(protocol))
        keep = np.full(len(times), offset) <= radius(protocol)
        emit(new_mac(), protocol, times[keep], np.full(int(keep.sum()), offset), NON_PASSENGER, "parallel")

    sensing.sort(key=lambda r: (r[2], r[1]))
    onboard = np.cumsum(board[1:] - alight[1:])
    truth = [(cfg.trip_id, k, int(board[k]), int(alight[k]), int(onboard[k - 1])) for k in range(1, n + 1)]
    gps = [(float(t), float(la), float(lo)) for t, la, lo in zip(gps_t, gps_lat, gps_lon)]
    return SyntheticTrip(cfg, sensing, gps, stations, truth, labels, sources, journeys)


def score_separation(predicted, truth):
    """Accuracy, precision, recall and F1 for the passenger class.

    ``predicted`` and ``truth`` map the same MAC keys to labels.
    """
    if set(predicted) != set(truth):
        missing = set(truth) ^ set(predicted)
        raise ValueError(f"label sets differ on {len(missing)} MACs")
    tp = fp = fn = tn = 0
    for key, t in truth.items():
        p = predicted[key]
        if p == PASSENGER and t == PASSENGER:
            tp += 1
        elif p == PASSENGER:
            fp += 1
        elif t == PASSENGER:
            fn += 1
        else:
            tn += 1
    n = tp + fp + fn + tn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"accuracy": (tp + tn) / n if n else 0.0, "precision": precision, "recall": recall, "f1": f1,
            "tp": tp, "fp": fp, "fn": fn, "tn": tn}


def make_stop_count_dataset(n_rows=400, seed=0, noise_sd=1.0):
    """Stop-level regressors with a nonlinear count response.

    ``y = round(1.8 x + 4 sin(x / 3) + noise)`` clipped at 0, where ``x`` is the
    passenger MAC count in [0, 40].  Returns ``(X, y)`` with columns in
    regressor order.
    """
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 41, n_rows)
    X = np.column_stack([
        rng.integers(0, 7, n_rows),
        rng.integers(6, 23, n_rows),
        rng.integers(0, 60, n_rows),
        (rng.random(n_rows) < 0.1).astype(int),
        x,
    ]).astype(float)
    y = np.maximum(np.round(1.8 * x + 4.0 * np.sin(x / 3.0) + rng.normal(0.0, noise_sd, n_rows)), 0.0)
    return X, y
