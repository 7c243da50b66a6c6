"""Log-distance path-loss model.

    rssi(d) = rssi_at_d0 - 10 * n * log10(d / d0)

RSSI is kept as real-valued dBm here; rounding to integers only happens at
wire boundaries (ingest records, simulator output).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateExponent, InsufficientData, NonPositiveDistance, ParseError


@dataclass(frozen=True)
class PathLossParams:
    rssi_at_d0: float
    d0: float = 1.0
    n: float = 2.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.d0) and self.d0 > 0):
            raise NonPositiveDistance(f"reference distance must be > 0, got {self.d0}")
        if not math.isfinite(self.n) or not math.isfinite(self.rssi_at_d0):
            raise ValueError("rssi_at_d0 and n must be finite")

    @classmethod
    def from_measured_power(cls, measured_power: int, n: float = 2.0) -> PathLossParams:
        """Use an iBeacon measured-power byte (calibrated RSSI at 1 m) as the reference."""
        return cls(rssi_at_d0=float(measured_power), d0=1.0, n=n)


def predict_rssi(params: PathLossParams, d):
    """Expected RSSI in dBm at distance ``d`` (scalar or array, meters)."""
    arr = np.asarray(d, dtype=float)
    if np.any(~(arr > 0)):
        raise NonPositiveDistance(f"distance must be > 0, got {d!r}")
    out = params.rssi_at_d0 - 10.0 * params.n * np.log10(arr / params.d0)
    return float(out) if out.ndim == 0 else out


def estimate_distance(params: PathLossParams, rssi):
    """Invert :func:`predict_rssi`: distance in meters for an RSSI in dBm."""
    if params.n == 0:
        raise DegenerateExponent("path-loss exponent is 0; RSSI carries no distance information")
    out = params.d0 * np.power(10.0, (params.rssi_at_d0 - np.asarray(rssi, dtype=float)) / (10.0 * params.n))
    return float(out) if np.ndim(out) == 0 else out


def calibrate(samples: Iterable[tuple[float, float]], d0: float = 1.0) -> PathLossParams:
    """Least-squares fit of ``rssi_at_d0`` and ``n`` from (distance, rssi) pairs.

    The model is linear in ``x = log10(d / d0)``, so the ordinary least
    squares solution is computed in closed form on centered data.
    """
    pairs = [(float(d), float(r)) for d, r in samples]
    if not pairs:
        raise InsufficientData("no calibration samples")
    dist = np.array([p[0] for p in pairs])
    rssi = np.array([p[1] for p in pairs])
    if np.any(~(dist > 0)):
        raise NonPositiveDistance("calibration distances must be > 0")
    if not (d0 > 0):
        raise NonPositiveDistance(f"reference distance must be > 0, got {d0}")
    if len(np.unique(dist)) < 2:
        raise InsufficientData("calibration needs at least 2 distinct distances")

    x = np.log10(dist / d0)
    x_mean = x.mean()
    y_mean = rssi.mean()
    xc = x - x_mean
    slope = float(np.dot(xc, rssi - y_mean) / np.dot(xc, xc))
    intercept = float(y_mean - slope * x_mean)
    return PathLossParams(rssi_at_d0=intercept, d0=d0, n=-slope / 10.0)


def read_samples_csv(path: str | Path) -> list[tuple[float, float]]:
    """Read a ``distance_m,rssi_dbm`` CSV."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["distance_m", "rssi_dbm"]:
            raise ParseError(f"expected header 'distance_m,rssi_dbm', got {header!r}", line=1)
        out: list[tuple[float, float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ParseError(f"expected 2 fields, got {len(row)}", line=lineno)
            try:
                out.append((float(row[0]), float(row[1])))
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from exc
    return out


def write_samples_csv(path: str | Path, samples: Sequence[tuple[float, float]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["distance_m", "rssi_dbm"])
        for d, r in samples:
            w.writerow([repr(float(d)), repr(float(r))])
