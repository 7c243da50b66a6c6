"""RSSI fingerprint indoor localization: iBeacon codec, log-distance path
loss, fingerprint databases, kNN / wkNN estimation, a seeded room
simulator and error evaluation."""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .errors import LocalizationError
from .estimator import EstimateResult, EstimatorConfig, Mode, Norm, estimate, estimate_batch, knn_select, signal_distance
from .evaluation import ErrorReport, evaluate, sweep
from .fingerprint import Anchor, FingerprintDb, FingerprintEntry, build_entry, load_db, save_db
from .ibeacon import IBeaconPayload, RawAdvertisement, decode_ibeacon, encode_ibeacon
from .ingest import Observation, ScanWindow, parse_observation_line, window_stream, window_to_query
from .pathloss import PathLossParams, calibrate, estimate_distance, predict_rssi
from .simulator import GroundTruthTrace, SimScenario, bundled_scenario, simulate

__all__ = [
    "Anchor", "BACKEND", "ErrorReport", "EstimateResult", "EstimatorConfig", "FingerprintDb",
    "FingerprintEntry", "GroundTruthTrace", "IBeaconPayload", "LocalizationError", "Mode", "Norm",
    "Observation", "PathLossParams", "RawAdvertisement", "ScanWindow", "SimScenario", "build_entry",
    "calibrate", "decode_ibeacon", "encode_ibeacon", "estimate", "estimate_batch", "estimate_distance",
    "evaluate", "knn_select", "load_db", "bundled_scenario", "parse_observation_line", "predict_rssi",
    "save_db", "signal_distance", "simulate", "sweep", "window_stream", "window_to_query",
]
