import dataclasses
import random

import pytest
from hypothesis import given, settings, strategies as st

from transitflow.clustering import NON_PASSENGER as NP, PASSENGER as P
from transitflow.features import MacFeatureVector
from transitflow.filters import FT, MILE, FilterConfig, filter_method_1, filter_method_2, nearest_rank_percentile


def fv(protocol="wifi", n=5, duration=120.0, start=30.0, end=40.0, max_rssi=-40.0, travel=MILE, mac="m"):
    return MacFeatureVector(mac, protocol, n, duration, max_rssi - 5, max_rssi, start, end, travel,
                            travel / max(duration, 1.0), 15.0)


def m1(v, **kw):
    return filter_method_1([v], FilterConfig(**kw))[0]


# method 1

def test_m1_documented_examples():
    assert m1(fv(n=2)) == NP
    assert m1(fv(n=5, duration=59.0)) == NP
    assert m1(fv(n=5, duration=120.0, start=30.0, end=40.0)) == P


def test_m1_thresholds_are_in_meters():
    assert FilterConfig().wifi_max_stop_dist_m == pytest.approx(182.88)
    assert FilterConfig().bt_max_stop_dist_m == pytest.approx(91.44)
    assert 200 * FT == pytest.approx(60.96)


@pytest.mark.parametrize("change", [
    dict(n=2), dict(duration=59.9), dict(start=183.0, end=183.0),
])
def test_m1_each_wifi_threshold_flips_label(change):
    assert m1(fv()) == P
    assert m1(fv(**change)) == NP


def test_m1_thresholds_are_strict():
    assert m1(fv(n=3, duration=60.0, start=182.88, end=182.88)) == P


def test_m1_bluetooth_rules():
    assert m1(fv("bt", n=1)) == P  # count < 1 never fires for a detected MAC
    assert m1(fv("bt", n=1), bt_count_rule="at_most_one") == NP
    assert m1(fv("bt", n=2), bt_count_rule="at_most_one") == P
    assert m1(fv("bt", start=92.0, end=92.0)) == NP
    assert m1(fv("bt", start=92.0, end=10.0)) == P


def test_m1_distance_mode():
    v = fv(start=500.0, end=10.0)
    assert m1(v) == P
    assert m1(v, distance_mode="either") == NP


def test_m1_order_independent():
    vs = [fv(n=n, duration=d, mac=str(i)) for i, (n, d) in enumerate([(1, 10), (5, 200), (3, 59), (9, 61)])]
    labels = dict(zip([v.mac for v in vs], filter_method_1(vs)))
    random.Random(0).shuffle(vs)
    assert dict(zip([v.mac for v in vs], filter_method_1(vs))) == labels


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(["wifi", "bt"]), st.integers(1, 10), st.floats(0, 500), st.floats(0, 500),
       st.floats(0, 400), st.floats(0, 400))
def test_m1_monotone_in_duration(protocol, n, d1, extra, start, end):
    lo = fv(protocol, n=n, duration=d1, start=start, end=end)
    hi = dataclasses.replace(lo, duration_s=d1 + extra)
    if m1(lo) == P:
        assert m1(hi) == P


def test_config_rejects_bad_values():
    with pytest.raises(ValueError):
        FilterConfig(min_duration_s=-1)
    with pytest.raises(ValueError):
        FilterConfig(bt_count_rule="never")
    with pytest.raises(ValueError):
        FilterConfig(distance_mode="some")


# method 2

def m2_trip(target, n_others=9):
    # target plus a spread of strong passing vectors, so the RSSI cut sits well below -40
    others = [fv(duration=400.0, n=60, max_rssi=-40.0 + i, mac=f"o{i}") for i in range(n_others)]
    return filter_method_2([target] + others)[0]


def test_m2_documented_examples():
    assert m2_trip(fv(duration=179.0, n=60)) == NP
    assert m2_trip(fv(duration=400.0, n=60, travel=200 * FT)) == NP
    assert m2_trip(fv(duration=400.0, n=60, travel=MILE, max_rssi=-32.0)) == P


@pytest.mark.parametrize("change", [
    dict(duration=179.9), dict(travel=274.0), dict(n=9), dict(max_rssi=-90.0),
])
def test_m2_each_threshold_flips_label(change):
    base = dict(duration=400.0, n=60, travel=MILE, max_rssi=-35.0)
    assert m2_trip(fv(**base)) == P
    assert m2_trip(fv(**{**base, **change})) == NP


def test_m2_zero_travel_fails_density_rule():
    assert filter_method_2([fv(duration=400.0, n=60, travel=0.0)], FilterConfig(m2_min_travel_m=0.0)) == [NP]


def test_m2_empty_trip():
    assert filter_method_2([]) == []


def test_m2_order_independent():
    vs = [fv(duration=400.0, n=60, max_rssi=-30.0 - 3 * i, mac=str(i)) for i in range(10)]
    labels = dict(zip([v.mac for v in vs], filter_method_2(vs)))
    assert sum(x == NP for x in labels.values()) == 1  # only the weakest falls under the 20th percentile
    random.Random(0).shuffle(vs)
    assert dict(zip([v.mac for v in vs], filter_method_2(vs))) == labels


def test_nearest_rank_percentile():
    vals = [15, 20, 35, 40, 50]
    assert nearest_rank_percentile(vals, 5) == 15
    assert nearest_rank_percentile(vals, 30) == 20
    assert nearest_rank_percentile(vals, 40) == 20
    assert nearest_rank_percentile(vals, 50) == 35
    assert nearest_rank_percentile(vals, 100) == 50
    assert nearest_rank_percentile(vals, 0) == 15
    assert nearest_rank_percentile([-60] * 10, 20) == -60
    with pytest.raises(ValueError):
        nearest_rank_percentile([], 20)
