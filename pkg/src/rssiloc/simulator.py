"""Seeded synthetic-room simulator.

Every anchor advertises on a fixed schedule; each advertisement is received
with probability ``1 - packet_loss_p`` at the log-distance RSSI plus i.i.d.
Gaussian shadowing, rounded to integer dBm. The generator is numpy's PCG64
seeded from ``(seed, stream)``, so runs are reproducible across platforms.
"""

from __future__ import annotations

import bisect
import configparser
import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import AnchorAtReceiver, ParseError
from .fingerprint import Anchor, FingerprintDb, build_entry
from .ingest import RSSI_MAX, RSSI_MIN, Observation, window_stream
from .pathloss import PathLossParams, predict_rssi

Position = tuple[float, float]

BUNDLED_ROOM = (7.2, 7.2)
BUNDLED_ANCHOR_HEIGHT = 1.8
BUNDLED_ADV_INTERVAL_MS = 100
# assumed receiver holder height; puts the receiver 0.8 m below the anchors
BUNDLED_RECEIVER_HEIGHT = 1.0
BUNDLED_GRID = (1.8, 3.6, 5.4)
TRUTH_HEADER = ["t_ms", "true_x_m", "true_y_m"]


@dataclass(frozen=True)
class SimScenario:
    room: tuple[float, float]
    anchors: tuple[Anchor, ...]
    path_loss: PathLossParams
    noise_sigma: float = 2.0
    packet_loss_p: float = 0.0
    adv_interval_ms: int = BUNDLED_ADV_INTERVAL_MS
    seed: int = 0
    # None: planar distance. Otherwise slant distance to anchors at their height.
    receiver_height: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "anchors", tuple(self.anchors))
        w, d = self.room
        if not (w > 0 and d > 0):
            raise ValueError("room dimensions must be positive")
        for a in self.anchors:
            if not (0 <= a.x <= w and 0 <= a.y <= d):
                raise ValueError(f"anchor {a.id} at {a.position} lies outside the {w} x {d} room")
        if len({a.id for a in self.anchors}) != len(self.anchors):
            raise ValueError("duplicate anchor ids")
        if not self.noise_sigma >= 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 0 <= self.packet_loss_p <= 1:
            raise ValueError("packet_loss_p must be in [0, 1]")
        if not (isinstance(self.adv_interval_ms, int) and self.adv_interval_ms > 0):
            raise ValueError("adv_interval_ms must be a positive integer")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def with_anchors(self, anchor_ids: Iterable[str]) -> SimScenario:
        keep = set(anchor_ids)
        return replace(self, anchors=tuple(a for a in self.anchors if a.id in keep))


@dataclass(frozen=True)
class GroundTruthTrace:
    """Piecewise-constant receiver path: each point holds until the next, the last until ``end_ms``."""

    points: tuple[tuple[int, Position], ...]
    end_ms: int
    _times: list = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        pts = tuple((int(t), (float(p[0]), float(p[1]))) for t, p in self.points)
        object.__setattr__(self, "points", pts)
        times = [t for t, _ in pts]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("trace timestamps must be strictly increasing")
        if pts and self.end_ms <= times[-1]:
            raise ValueError("trace end must follow the last point")
        object.__setattr__(self, "_times", times)

    @property
    def start_ms(self) -> int:
        return self.points[0][0]

    def position_at(self, t_ms: float) -> Position:
        i = bisect.bisect_right(self._times, t_ms) - 1
        if i < 0:
            raise ValueError(f"time {t_ms} precedes the trace")
        return self.points[i][1]


def static_trace(
    positions: Sequence[Position], dwell_ms: int, cycles: int = 1, start_ms: int = 0
) -> GroundTruthTrace:
    """Visit ``positions`` in order, ``dwell_ms`` each, ``cycles`` times over."""
    pts = []
    t = start_ms
    for _ in range(cycles):
        for p in positions:
            pts.append((t, p))
            t += dwell_ms
    return GroundTruthTrace(tuple(pts), t)


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=(stream,))))


def simulate(scenario: SimScenario, trace: GroundTruthTrace, *, stream: int = 0) -> list[Observation]:
    """Generate the observation stream a receiver following ``trace`` would record.

    Advertisements happen at ``trace.start_ms + j * adv_interval_ms``; at each
    instant anchors are visited in scenario order. One uniform and one normal
    variate are drawn per (instant, anchor) regardless of loss or sigma, so
    the stream for a given seed does not shift when those knobs change.
    ``stream`` selects an independent substream of the same seed.
    """
    if not trace.points or not scenario.anchors:
        return []
    times = np.arange(trace.start_ms, trace.end_ms, scenario.adv_interval_ms, dtype=np.int64)
    rx = np.array([trace.position_at(t) for t in times]).reshape(-1, 2)
    ax = np.array([a.position for a in scenario.anchors])
    planar = np.hypot(rx[:, None, 0] - ax[None, :, 0], rx[:, None, 1] - ax[None, :, 1])
    if scenario.receiver_height is None:
        dist = planar
    else:
        dz = np.array([a.height for a in scenario.anchors]) - scenario.receiver_height
        dist = np.sqrt(planar**2 + dz[None, :] ** 2)
    if np.any(dist <= 0):
        ti, ai = np.argwhere(dist <= 0)[0]
        raise AnchorAtReceiver(f"receiver coincides with anchor {scenario.anchors[ai].id} at t={times[ti]} ms")

    rng = _rng(scenario.seed, stream)
    shape = dist.shape
    keep_draw = rng.random(shape)
    shadow = rng.standard_normal(shape)
    rssi = predict_rssi(scenario.path_loss, dist) + scenario.noise_sigma * shadow
    wire = np.clip(np.rint(rssi), RSSI_MIN, RSSI_MAX)
    received = keep_draw >= scenario.packet_loss_p

    ids = [a.id for a in scenario.anchors]
    out = []
    for ti, ai in zip(*np.nonzero(received)):
        out.append(Observation(int(times[ti]), ids[ai], float(wire[ti, ai])))
    return out


def bundled_scenario(
    *, noise_sigma: float = 2.0, packet_loss_p: float = 0.0, seed: int = 0
) -> tuple[SimScenario, tuple[Position, ...]]:
    """7.2 m x 7.2 m room, anchors in the four corners and the center at 1.8 m,
    and a 3 x 3 training grid at 1.8 / 3.6 / 5.4 m.

    The path-loss parameters (-59 dBm at 1 m, exponent 2) are illustrative
    defaults, not measured values.
    """
    w, d = BUNDLED_ROOM
    h = BUNDLED_ANCHOR_HEIGHT
    anchors = (
        Anchor("A1", 0.0, 0.0, h),
        Anchor("A2", w, 0.0, h),
        Anchor("A3", w, d, h),
        Anchor("A4", 0.0, d, h),
        Anchor("A5", w / 2, d / 2, h),
    )
    scenario = SimScenario(
        room=BUNDLED_ROOM,
        anchors=anchors,
        path_loss=PathLossParams(rssi_at_d0=-59.0, d0=1.0, n=2.0),
        noise_sigma=noise_sigma,
        packet_loss_p=packet_loss_p,
        adv_interval_ms=BUNDLED_ADV_INTERVAL_MS,
        seed=seed,
        receiver_height=BUNDLED_RECEIVER_HEIGHT,
    )
    layout = tuple((x, y) for y in BUNDLED_GRID for x in BUNDLED_GRID)
    return scenario, layout


def group_windows(windows, trace: GroundTruthTrace) -> dict[Position, list]:
    """Assign each window to the true position at its start; windows that
    straddle a position change or fall outside the trace are dropped."""
    grouped: dict[Position, list] = {}
    for w in windows:
        if w.start < trace.start_ms or w.end > trace.end_ms:
            continue
        pos = trace.position_at(w.start)
        if trace.position_at(w.end - 1) != pos:
            continue
        grouped.setdefault(pos, []).append(w)
    return grouped


def survey(
    scenario: SimScenario,
    positions: Sequence[Position],
    *,
    windows_per_position: int = 10,
    window_ms: int = 1000,
    stream: int = 0,
) -> FingerprintDb:
    """Simulate a training survey and build the fingerprint database from it."""
    trace = static_trace(positions, windows_per_position * window_ms)
    obs = simulate(scenario, trace, stream=stream)
    grouped = group_windows(window_stream(obs, window_ms, origin=trace.start_ms), trace)
    entries = [build_entry(p, grouped.get(p, ())) for p in positions]
    return FingerprintDb(scenario.anchors, tuple(entries))


# --------------------------------------------------------------------------
# scenario files and ground-truth sidecar
# --------------------------------------------------------------------------


def _positions_text(positions: Sequence[Position]) -> str:
    return "; ".join(f"{x!r} {y!r}" for x, y in positions)


def _parse_positions(text: str) -> list[Position]:
    out = []
    for chunk in text.split(";"):
        if not chunk.strip():
            continue
        parts = chunk.replace(",", " ").split()
        if len(parts) != 2:
            raise ParseError(f"bad position {chunk.strip()!r}; expected 'x y'")
        out.append((float(parts[0]), float(parts[1])))
    return out


def dump_scenario(
    scenario: SimScenario, path: str | Path, *, positions: Sequence[Position] = (), dwell_ms: int = 1000,
    cycles: int = 1,
) -> None:
    cp = configparser.ConfigParser(interpolation=None)
    cp["scenario"] = {
        "room_width_m": repr(scenario.room[0]),
        "room_depth_m": repr(scenario.room[1]),
        "noise_sigma_db": repr(scenario.noise_sigma),
        "packet_loss_p": repr(scenario.packet_loss_p),
        "adv_interval_ms": str(scenario.adv_interval_ms),
        "seed": str(scenario.seed),
    }
    if scenario.receiver_height is not None:
        cp["scenario"]["receiver_height_m"] = repr(scenario.receiver_height)
    pl = scenario.path_loss
    cp["path_loss"] = {"rssi_at_d0_dbm": repr(pl.rssi_at_d0), "d0_m": repr(pl.d0), "n": repr(pl.n)}
    for a in scenario.anchors:
        cp[f"anchor {a.id}"] = {"x_m": repr(a.x), "y_m": repr(a.y), "height_m": repr(a.height)}
    if positions:
        cp["trace"] = {"positions": _positions_text(positions), "dwell_ms": str(dwell_ms), "cycles": str(cycles)}
    with open(path, "w", encoding="utf-8") as fh:
        cp.write(fh)


def load_scenario(path: str | Path) -> tuple[SimScenario, GroundTruthTrace | None]:
    """Read an INI-style scenario file (see README for the layout)."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise ParseError(f"{path}: {exc}") from exc
    try:
        s = cp["scenario"]
        pl = cp["path_loss"]
        anchors = tuple(
            Anchor(name.split(None, 1)[1].strip(), float(cp[name]["x_m"]), float(cp[name]["y_m"]),
                   float(cp[name].get("height_m", "0")))
            for name in cp.sections()
            if name.startswith("anchor ")
        )
        rh = s.get("receiver_height_m")
        scenario = SimScenario(
            room=(float(s["room_width_m"]), float(s["room_depth_m"])),
            anchors=anchors,
            path_loss=PathLossParams(float(pl["rssi_at_d0_dbm"]), float(pl.get("d0_m", "1")), float(pl["n"])),
            noise_sigma=float(s.get("noise_sigma_db", "2")),
            packet_loss_p=float(s.get("packet_loss_p", "0")),
            adv_interval_ms=int(s.get("adv_interval_ms", str(BUNDLED_ADV_INTERVAL_MS))),
            seed=int(s.get("seed", "0")),
            receiver_height=None if rh is None else float(rh),
        )
        trace = None
        if cp.has_section("trace"):
            t = cp["trace"]
            trace = static_trace(
                _parse_positions(t["positions"]), int(t.get("dwell_ms", "1000")),
                int(t.get("cycles", "1")), int(t.get("start_ms", "0")),
            )
    except KeyError as exc:
        raise ParseError(f"{path}: missing key or section {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"{path}: {exc}") from exc
    return scenario, trace


def write_truth_csv(fh, trace: GroundTruthTrace) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TRUTH_HEADER)
    for t, (x, y) in trace.points:
        w.writerow([t, repr(x), repr(y)])


def read_truth_csv(path: str | Path, end_ms: int | None = None) -> GroundTruthTrace:
    """Read a ``t_ms,true_x_m,true_y_m`` sidecar. The last point holds until
    ``end_ms`` (default: open-ended)."""
    pts = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != TRUTH_HEADER:
            raise ParseError(f"expected header {','.join(TRUTH_HEADER)}, got {header!r}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                pts.append((int(row[0]), (float(row[1]), float(row[2]))))
            except (ValueError, IndexError) as exc:
                raise ParseError(str(exc), line=lineno) from exc
    if not pts:
        raise ParseError("ground-truth file has no rows")
    end = end_ms if end_ms is not None else 2**62
    try:
        return GroundTruthTrace(tuple(pts), end)
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


def distances_to_anchors(scenario: SimScenario, position: Position) -> np.ndarray:
    ax = np.array([a.position for a in scenario.anchors])
    planar = np.hypot(ax[:, 0] - position[0], ax[:, 1] - position[1])
    if scenario.receiver_height is None:
        return planar
    dz = np.array([a.height for a in scenario.anchors]) - scenario.receiver_height
    return np.sqrt(planar**2 + dz**2)


def expected_fingerprint(scenario: SimScenario, position: Position) -> dict[str, float]:
    """Noise-free RSSI per anchor at ``position`` (before wire rounding)."""
    d = distances_to_anchors(scenario, position)
    if np.any(d <= 0):
        raise AnchorAtReceiver(f"receiver at {position} coincides with an anchor")
    return {a.id: float(v) for a, v in zip(scenario.anchors, predict_rssi(scenario.path_loss, d))}


__all__ = [
    "GroundTruthTrace", "SimScenario", "dump_scenario", "expected_fingerprint", "group_windows",
    "load_scenario", "bundled_scenario", "read_truth_csv", "simulate", "static_trace", "survey",
    "write_truth_csv",
]
