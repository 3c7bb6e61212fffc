"""Published threshold filters for passenger / non-passenger separation.

Imperial thresholds are stored in meters (1 ft = 0.3048 m).
"""

import math
from dataclasses import dataclass

import numpy as np

from .clustering import NON_PASSENGER, PASSENGER

FT = 0.3048
MILE = 1609.344


@dataclass(frozen=True)
class FilterConfig:
    # method 1
    wifi_min_detections: int = 3
    bt_min_detections: int = 1
    bt_count_rule: str = "literal"  # "literal": n < 1; "at_most_one": n <= 1
    min_duration_s: float = 60.0
    wifi_max_stop_dist_m: float = 600 * FT
    bt_max_stop_dist_m: float = 300 * FT
    distance_mode: str = "both"  # "both" or "either" endpoint beyond the threshold
    # method 2
    m2_min_duration_s: float = 180.0
    m2_rssi_percentile: float = 20.0
    m2_min_travel_m: float = 900 * FT
    m2_min_detections_per_mile: float = 10.0
    m2_stop_radius_m: float = 200 * FT

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if isinstance(value, (int, float)) and value < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.bt_count_rule not in ("literal", "at_most_one"):
            raise ValueError(f"bad bt_count_rule {self.bt_count_rule!r}")
        if self.distance_mode not in ("both", "either"):
            raise ValueError(f"bad distance_mode {self.distance_mode!r}")


def filter_method_1(vectors, config=FilterConfig()):
    """Method 1: detection count, duration, and endpoint distance to the nearest stop."""
    labels = []
    for v in vectors:
        if v.protocol == "bt":
            few = v.n_detections <= 1 if config.bt_count_rule == "at_most_one" else v.n_detections < config.bt_min_detections
            limit = config.bt_max_stop_dist_m
        else:
            few = v.n_detections < config.wifi_min_detections
            limit = config.wifi_max_stop_dist_m
        short = v.duration_s < config.min_duration_s
        far_start, far_end = v.least_dist_start_m > limit, v.least_dist_end_m > limit
        far = (far_start and far_end) if config.distance_mode == "both" else (far_start or far_end)
        labels.append(NON_PASSENGER if (few or short or far) else PASSENGER)
    return labels


def nearest_rank_percentile(values, pct):
    """Smallest value with at least ``pct`` percent of the data at or below it."""
    values = np.sort(np.asarray(values, dtype=float))
    if values.size == 0:
        raise ValueError("no values")
    rank = max(1, math.ceil(round(pct / 100.0 * values.size, 9)))
    return float(values[rank - 1])


def filter_method_2(vectors, config=FilterConfig()):
    """Method 2: duration, max-RSSI percentile, travel distance and detections per mile.

    The RSSI cut-off is the nearest-rank percentile of max RSSI over the
    vectors passed in, so call it once per trip.
    """
    if not vectors:
        return []
    cut = nearest_rank_percentile([v.max_rssi for v in vectors], config.m2_rssi_percentile)
    labels = []
    for v in vectors:
        miles = v.travel_dist_m / MILE
        sparse = miles <= 0 or v.n_detections / miles < config.m2_min_detections_per_mile
        bad = (v.duration_s < config.m2_min_duration_s
               or v.max_rssi < cut
               or v.travel_dist_m < config.m2_min_travel_m
               or sparse)
        labels.append(NON_PASSENGER if bad else PASSENGER)
    return labels
