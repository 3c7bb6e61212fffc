import csv
import sys
from pathlib import Path

import pytest

from transitflow.simgen import ScenarioConfig, generate

sys.path.insert(0, str(Path(__file__).parent))

DATA = Path(__file__).parent / "data"


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


@pytest.fixture
def trip_files(tmp_path):
    """Write a tiny hand-made trip and return a dict of its file paths.

    The vehicle stands still at stop 1 for 10 s, then drives due north.
    """
    def make(sensing, gps=None, stations=None, truth=None):
        if gps is None:
            gps = [(t / 2, 47.0, -122.0) for t in range(0, 41)]
        if stations is None:
            stations = [("R1", 1, "A", 47.0, -122.0, "A"), ("R1", 2, "B", 47.01, -122.0, "B")]
        paths = {
            "sensing": write_csv(tmp_path / "sensing.csv", ["protocol", "mac", "timestamp", "rssi"], sensing),
            "gps": write_csv(tmp_path / "gps.csv", ["timestamp", "lat", "lon"], gps),
            "stations": write_csv(tmp_path / "stations.csv",
                                  ["route_id", "stop_seq", "stop_id", "lat", "lon", "name"], stations),
        }
        if truth is not None:
            paths["truth"] = write_csv(tmp_path / "ground_truth.csv",
                                       ["trip_id", "stop_seq", "boarding", "alighting", "onboard"], truth)
        return paths
    return make


@pytest.fixture(scope="session")
def default_trip():
    return generate(ScenarioConfig())


@pytest.fixture(scope="session")
def default_trip_dir(tmp_path_factory, default_trip):
    d = tmp_path_factory.mktemp("sim") / "trip"
    default_trip.write(d)
    return d


@pytest.fixture(scope="session")
def multi_trip_dirs(tmp_path_factory):
    from transitflow.cli import main
    root = tmp_path_factory.mktemp("multi")
    assert main(["simulate", "--out", str(root), "--n-trips", "3", "--seed", "7"]) == 0
    return sorted(str(p) for p in root.iterdir() if p.is_dir())


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
