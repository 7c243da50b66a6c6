"""kNN / weighted-kNN position estimation over a fingerprint database.

Signal-space distances are taken over the anchors a query and an entry
have in common; entries sharing fewer than ``min_common_anchors`` anchors
with the query are ineligible. Ties are always broken by lower entry index.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from . import _kernels
from .errors import InsufficientOverlap, KTooLarge, NotEnoughEntries
from .fingerprint import FingerprintDb


class Norm(str, enum.Enum):
    CHEBYSHEV = "chebyshev"
    EUCLIDEAN = "euclidean"

    @property
    def code(self) -> int:
        return _kernels.CHEBYSHEV if self is Norm.CHEBYSHEV else _kernels.EUCLIDEAN


class Mode(str, enum.Enum):
    KNN = "knn"
    WKNN = "wknn"


@dataclass(frozen=True)
class EstimatorConfig:
    k: int = 3
    norm: Norm = Norm.CHEBYSHEV
    mode: Mode = Mode.WKNN
    min_common_anchors: int = 3
    zero_distance_epsilon: float = 1e-9

    def __post_init__(self) -> None:
        object.__setattr__(self, "norm", Norm(self.norm))
        object.__setattr__(self, "mode", Mode(self.mode))
        if not isinstance(self.k, int) or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k!r}")
        if not isinstance(self.min_common_anchors, int) or self.min_common_anchors < 1:
            raise ValueError(f"min_common_anchors must be >= 1, got {self.min_common_anchors!r}")
        if not self.zero_distance_epsilon >= 0:
            raise ValueError("zero_distance_epsilon must be >= 0")

    @property
    def label(self) -> str:
        return f"{self.norm.value}-k{self.k}-{self.mode.value}"


class Neighbor(NamedTuple):
    index: int
    signal_distance: float
    weight: float


@dataclass(frozen=True)
class EstimateResult:
    position: tuple[float, float]
    neighbors: tuple[Neighbor, ...]
    mode: Mode
    norm: Norm


def signal_distance(
    a: Mapping[str, float], b: Mapping[str, float], norm: Norm | str = Norm.EUCLIDEAN,
    min_common_anchors: int = 1,
) -> float:
    """Norm of ``a - b`` restricted to the anchors present in both maps."""
    norm = Norm(norm)
    common = [key for key in a if key in b]
    if len(common) < min_common_anchors:
        raise InsufficientOverlap(f"{len(common)} common anchors, need {min_common_anchors}")
    diffs = [a[key] - b[key] for key in common]
    if norm is Norm.CHEBYSHEV:
        return max((abs(d) for d in diffs), default=0.0)
    return math.sqrt(sum(d * d for d in diffs))


def knn_select(distances: Sequence[float], k: int) -> list[int]:
    """Indices of the ``k`` smallest values, ordered by (value, index)."""
    d = np.asarray(distances, dtype=float)
    if k > d.shape[0]:
        raise KTooLarge(f"k={k} exceeds {d.shape[0]} candidates")
    if k < 1:
        raise ValueError("k must be >= 1")
    return [int(i) for i in _kernels.KERNELS.k_smallest(d, k)]


def query_vector(query: Mapping[str, float], anchor_ids: Sequence[str]) -> np.ndarray:
    return np.array([query.get(a, np.nan) for a in anchor_ids], dtype=float)


@dataclass(frozen=True)
class BatchEstimate:
    """Row-aligned results of :func:`estimate_batch`; rows with nonzero status have NaN positions."""

    positions: np.ndarray
    neighbor_index: np.ndarray
    neighbor_distance: np.ndarray
    weights: np.ndarray
    status: np.ndarray

    @property
    def ok(self) -> np.ndarray:
        return self.status == _kernels.STATUS_OK


def estimate_batch(
    db: FingerprintDb, queries: np.ndarray | Sequence[Mapping[str, float]], cfg: EstimatorConfig,
    *, kernels=None,
) -> BatchEstimate:
    """Estimate many queries at once.

    ``queries`` is either a list of anchor->RSSI maps or an
    (n_queries, n_anchors) array in ``db.anchor_ids`` order with NaN for
    unheard anchors. Per-row failures are reported through ``status``.
    """
    kern = kernels or _kernels.KERNELS
    if len(db.entries) < cfg.k:
        raise NotEnoughEntries(f"db has {len(db.entries)} entries, k={cfg.k}")
    ids = db.anchor_ids
    if isinstance(queries, np.ndarray):
        qmat = np.ascontiguousarray(queries, dtype=float).reshape(-1, len(ids))
    else:
        qmat = np.array([query_vector(q, ids) for q in queries], dtype=float).reshape(-1, len(ids))
    emat = np.ascontiguousarray(db.rssi_matrix(ids))
    positions = np.ascontiguousarray(db.positions())
    dist, overlap = kern.distance_matrix(qmat, emat, cfg.norm.code)
    est, idx, dsel, w, status = kern.combine(
        dist, overlap, positions, cfg.k, cfg.min_common_anchors, cfg.mode is Mode.WKNN,
        float(cfg.zero_distance_epsilon),
    )
    return BatchEstimate(est, idx, dsel, w, status)


def estimate(db: FingerprintDb, query: Mapping[str, float], cfg: EstimatorConfig) -> EstimateResult:
    """Estimate one position.

    kNN returns the plain mean of the k nearest training positions. wkNN
    weights each by the reciprocal of its signal distance; if any selected
    distance is below ``zero_distance_epsilon`` the matching entry's
    position is returned exactly.
    """
    batch = estimate_batch(db, [query], cfg)
    if batch.status[0] != _kernels.STATUS_OK:
        raise InsufficientOverlap(
            f"fewer than k={cfg.k} entries share {cfg.min_common_anchors} anchors with the query"
        )
    neighbors = tuple(
        Neighbor(int(i), float(d), float(w))
        for i, d, w in zip(batch.neighbor_index[0], batch.neighbor_distance[0], batch.weights[0])
    )
    x, y = batch.positions[0]
    return EstimateResult((float(x), float(y)), neighbors, cfg.mode, cfg.norm)
