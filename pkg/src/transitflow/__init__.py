"""Passenger ridership estimation from passive Wi-Fi and Bluetooth MAC sensing."""

__version__ = "0.1.0"

from .clustering import FuzzyCMeans, GaussianMixtureEM, Standardizer, fcm_fit, gmm_fit, harden
from .features import MacFeatureVector, extract_features
from .filters import FilterConfig, filter_method_1, filter_method_2
from .ingest import DataError, load_trip, load_trip_dir
from .metrics import ValidityReport, validity_report
from .regress import LinearCountRegressor, RandomForestCountRegressor, RegressionTree
from .ridership import OdMatrix, assign_stops, build_od, counts_from_od, stop_counts
from .simgen import ScenarioConfig, generate

__all__ = [
    "DataError", "FilterConfig", "FuzzyCMeans", "GaussianMixtureEM", "LinearCountRegressor",
    "MacFeatureVector", "OdMatrix", "RandomForestCountRegressor", "RegressionTree", "ScenarioConfig",
    "Standardizer", "ValidityReport", "assign_stops", "build_od", "counts_from_od", "extract_features",
    "fcm_fit", "filter_method_1", "filter_method_2", "generate", "gmm_fit", "harden", "load_trip",
    "load_trip_dir", "stop_counts", "validity_report",
]
