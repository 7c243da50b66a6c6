"""Positional error statistics and configuration sweeps.

Report CSV columns::

    config_id,norm,k,mode,anchors,mean_m,max_m,min_m,n_queries

Per-query CSV columns::

    t_ms,true_x,true_y,est_x,est_y,err_m
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptyRun, InsufficientOverlap, LocalizationError
from .estimator import EstimatorConfig, Mode, Norm, estimate_batch
from .fingerprint import FingerprintDb
from .ingest import ScanWindow, window_stream, window_to_query
from .simulator import GroundTruthTrace, bundled_scenario, simulate, survey

Position = tuple[float, float]

REPORT_HEADER = ["config_id", "norm", "k", "mode", "anchors", "mean_m", "max_m", "min_m", "n_queries"]
PER_QUERY_HEADER = ["t_ms", "true_x", "true_y", "est_x", "est_y", "err_m"]

# Values measured in the physical 7.2 m x 7.2 m room, wkNN with k=3 and four
# beacons. Printed next to simulated results for comparison only.
MEASURED_REFERENCE = (
    # config_id, norm, k, mode, anchors, mean, max, min, n
    ("measured-chebyshev-k3-wknn-4a", "chebyshev", 3, "wknn", 4, 0.704, 2.5, 0.27, 1000),
    ("measured-euclidean-k3-wknn-4a", "euclidean", 3, "wknn", 4, 0.746, 2.37, None, None),
)


@dataclass(frozen=True)
class QueryError:
    t_ms: int
    true: Position
    estimated: Position
    error: float


@dataclass(frozen=True)
class ErrorReport:
    per_query: tuple[QueryError, ...]
    mean_error: float
    max_error: float
    min_error: float
    query_count: int
    config: EstimatorConfig | None = None
    anchors: tuple[str, ...] = ()


@dataclass(frozen=True)
class LabeledQuery:
    """One query vector with the ground truth it was recorded at."""

    t_ms: int
    true: Position
    rssi: Mapping[str, float]


@dataclass(frozen=True)
class SweepCell:
    config_id: str
    config: EstimatorConfig
    anchors: tuple[str, ...]
    report: ErrorReport | None = None
    error: LocalizationError | None = field(default=None, compare=False)


def evaluate(
    estimates: Iterable[tuple[Position, Position, int]],
    config: EstimatorConfig | None = None,
    anchors: Sequence[str] = (),
) -> ErrorReport:
    """Aggregate (true, estimated, t_ms) triples; error is planar Euclidean distance."""
    rows = []
    for true, est, t in estimates:
        err = math.hypot(est[0] - true[0], est[1] - true[1])
        rows.append(QueryError(int(t), (float(true[0]), float(true[1])), (float(est[0]), float(est[1])), err))
    if not rows:
        raise EmptyRun("no estimates to evaluate")
    errs = [r.error for r in rows]
    return ErrorReport(
        per_query=tuple(rows),
        mean_error=math.fsum(errs) / len(errs),
        max_error=max(errs),
        min_error=min(errs),
        query_count=len(rows),
        config=config,
        anchors=tuple(anchors),
    )


def labeled_queries(windows: Iterable[ScanWindow], trace: GroundTruthTrace) -> list[LabeledQuery]:
    """Turn windows into queries labeled with the true position at window start.
    Empty windows and windows outside the trace are skipped."""
    out = []
    for w in windows:
        if not w.observations or w.start < trace.start_ms or w.start >= trace.end_ms:
            continue
        out.append(LabeledQuery(w.start, trace.position_at(w.start), window_to_query(w)))
    return out


def _cell_ids(configs: Sequence[EstimatorConfig], subsets: Sequence[Sequence[str]]) -> list[str]:
    ids = [f"{c.label}-{len(s)}a" for c in configs for s in subsets]
    seen: dict[str, int] = {}
    out = []
    for cid in ids:
        n = seen.get(cid, 0)
        seen[cid] = n + 1
        out.append(cid if n == 0 else f"{cid}-{n}")
    return out


def sweep(
    db: FingerprintDb,
    queries: Sequence[LabeledQuery],
    configs: Sequence[EstimatorConfig],
    anchor_subsets: Sequence[Sequence[str]] | None = None,
    *,
    kernels=None,
) -> list[SweepCell]:
    """Evaluate every (config, anchor subset) cell on the same queries.

    Cells are ordered config-major. A cell whose estimator fails carries the
    error instead of a report; other cells are unaffected.
    """
    subsets = [tuple(s) for s in (anchor_subsets or [db.anchor_ids])]
    ids = iter(_cell_ids(configs, subsets))
    cells = []
    for cfg in configs:
        for subset in subsets:
            cid = next(ids)
            try:
                sub_db = db.restrict(subset)
                if not queries:
                    raise EmptyRun("no queries")
                batch = estimate_batch(sub_db, [q.rssi for q in queries], cfg, kernels=kernels)
                bad = np.count_nonzero(~batch.ok)
                if bad:
                    raise InsufficientOverlap(
                        f"{bad} of {len(queries)} queries share fewer than "
                        f"{cfg.min_common_anchors} anchors with {cfg.k} entries"
                    )
                report = evaluate(
                    ((q.true, tuple(p), q.t_ms) for q, p in zip(queries, batch.positions)),
                    config=cfg, anchors=subset,
                )
                cells.append(SweepCell(cid, cfg, subset, report=report))
            except LocalizationError as exc:
                cells.append(SweepCell(cid, cfg, subset, error=exc))
    return cells


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------


def _f(v) -> str:
    return "" if v is None else f"{v:.6f}"


def report_rows(cells: Sequence[SweepCell], *, include_reference: bool = True) -> list[list[str]]:
    rows = []
    for c in cells:
        r = c.report
        rows.append([
            c.config_id, c.config.norm.value, str(c.config.k), c.config.mode.value,
            str(len(c.anchors)) if c.anchors else "",
            _f(r and r.mean_error), _f(r and r.max_error), _f(r and r.min_error),
            str(r.query_count if r else 0),
        ])
    if include_reference:
        for cid, norm, k, mode, n_anchors, mean, mx, mn, n in MEASURED_REFERENCE:
            rows.append([cid, norm, str(k), mode, str(n_anchors), _f(mean), _f(mx), _f(mn),
                         "" if n is None else str(n)])
    return rows


def write_report_csv(fh, cells: Sequence[SweepCell], *, include_reference: bool = True) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    w.writerows(report_rows(cells, include_reference=include_reference))


def write_per_query_csv(fh, report: ErrorReport) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(PER_QUERY_HEADER)
    for q in report.per_query:
        w.writerow([q.t_ms, _f(q.true[0]), _f(q.true[1]), _f(q.estimated[0]), _f(q.estimated[1]), _f(q.error)])


def format_table(cells: Sequence[SweepCell], *, include_reference: bool = True) -> str:
    """Fixed-width text rendering of the report rows."""
    rows = [REPORT_HEADER] + report_rows(cells, include_reference=include_reference)
    errors = {c.config_id: f"{c.error.category}: {c.error}" for c in cells if c.error is not None}
    widths = [max(len(r[i]) for r in rows) for i in range(len(REPORT_HEADER))]
    buf = io.StringIO()
    for r in rows:
        line = "  ".join(v.rjust(wd) if i >= 5 else v.ljust(wd) for i, (v, wd) in enumerate(zip(r, widths)))
        if r[0] in errors:
            line += f"  ! {errors[r[0]]}"
        buf.write(line.rstrip() + "\n")
    return buf.getvalue()


# --------------------------------------------------------------------------
# reproduction experiment
# --------------------------------------------------------------------------


def bundled_queries(
    *, seed: int = 0, noise_sigma: float = 2.0, packet_loss_p: float = 0.0, n_queries: int = 1000,
    window_ms: int = 1000, training_windows: int = 10,
) -> tuple[FingerprintDb, list[LabeledQuery]]:
    """Survey the bundled room, then record ``n_queries`` windows cycling over
    the training positions. Training and querying use independent substreams."""
    scenario, layout = bundled_scenario(noise_sigma=noise_sigma, packet_loss_p=packet_loss_p, seed=seed)
    db = survey(scenario, layout, windows_per_position=training_windows, window_ms=window_ms, stream=0)
    positions = [layout[i % len(layout)] for i in range(n_queries)]
    trace = GroundTruthTrace(tuple((i * window_ms, p) for i, p in enumerate(positions)), n_queries * window_ms)
    obs = simulate(scenario, trace, stream=1)
    queries = labeled_queries(window_stream(obs, window_ms, origin=trace.start_ms), trace)
    return db, queries


def bundled_configs(k: int = 3) -> list[EstimatorConfig]:
    return [EstimatorConfig(k=k, norm=n, mode=m) for n in Norm for m in (Mode.KNN, Mode.WKNN)]


BUNDLED_SUBSETS = (("A1", "A2", "A3", "A4"), ("A1", "A2", "A3", "A4", "A5"))

__all__ = [
    "ErrorReport", "LabeledQuery", "MEASURED_REFERENCE", "BUNDLED_SUBSETS", "QueryError",
    "SweepCell", "evaluate", "format_table", "labeled_queries", "bundled_configs", "bundled_queries",
    "report_rows", "sweep", "write_per_query_csv", "write_report_csv",
]
