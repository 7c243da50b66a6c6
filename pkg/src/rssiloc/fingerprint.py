"""Fingerprint database: one mean-RSSI vector per surveyed position.

On disk a database is two CSV files::

    anchors.csv  anchor_id,x_m,y_m,height_m
    entries.csv  pos_x_m,pos_y_m,anchor_id,mean_rssi_dbm,sample_count

Entries rows sharing the same position coordinates form one entry.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptyTraining, ParseError, SchemaMismatch
from .ingest import Observation, ScanWindow

ANCHORS_FILE = "anchors.csv"
ENTRIES_FILE = "entries.csv"
ANCHORS_HEADER = ["anchor_id", "x_m", "y_m", "height_m"]
ENTRIES_HEADER = ["pos_x_m", "pos_y_m", "anchor_id", "mean_rssi_dbm", "sample_count"]


@dataclass(frozen=True)
class Anchor:
    id: str
    x: float
    y: float
    height: float = 0.0

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("anchor id must be non-empty")
        if not all(math.isfinite(v) for v in (self.x, self.y, self.height)):
            raise ValueError(f"anchor {self.id} has non-finite coordinates")

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class FingerprintEntry:
    position: tuple[float, float]
    rssi_by_anchor: Mapping[str, float]
    sample_count_by_anchor: Mapping[str, int]

    def __post_init__(self) -> None:
        if set(self.rssi_by_anchor) != set(self.sample_count_by_anchor):
            raise ValueError("rssi and sample-count maps must have the same anchors")
        for a, c in self.sample_count_by_anchor.items():
            if c < 1:
                raise ValueError(f"anchor {a}: sample count must be >= 1")
        for a, r in self.rssi_by_anchor.items():
            if not math.isfinite(r):
                raise ValueError(f"anchor {a}: non-finite rssi")


@dataclass(frozen=True)
class FingerprintDb:
    anchors: tuple[Anchor, ...]
    entries: tuple[FingerprintEntry, ...] = ()
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "anchors", tuple(self.anchors))
        object.__setattr__(self, "entries", tuple(self.entries))
        ids = [a.id for a in self.anchors]
        if len(set(ids)) != len(ids):
            raise SchemaMismatch("duplicate anchor ids")
        known = set(ids)
        for i, e in enumerate(self.entries):
            unknown = set(e.rssi_by_anchor) - known
            if unknown:
                raise SchemaMismatch(f"entry {i} references unknown anchors {sorted(unknown)}")

    @property
    def anchor_ids(self) -> list[str]:
        return [a.id for a in self.anchors]

    def positions(self) -> np.ndarray:
        """(n_entries, 2) array of training positions."""
        return np.array([e.position for e in self.entries], dtype=float).reshape(-1, 2)

    def rssi_matrix(self, anchor_ids: Sequence[str] | None = None) -> np.ndarray:
        """(n_entries, n_anchors) mean RSSI, NaN where an anchor is absent."""
        ids = self.anchor_ids if anchor_ids is None else list(anchor_ids)
        out = np.full((len(self.entries), len(ids)), np.nan)
        for i, e in enumerate(self.entries):
            for j, a in enumerate(ids):
                if a in e.rssi_by_anchor:
                    out[i, j] = e.rssi_by_anchor[a]
        return out

    def restrict(self, anchor_ids: Iterable[str]) -> FingerprintDb:
        """Copy keeping only the given anchors (entries may become sparse)."""
        keep = list(anchor_ids)
        missing = set(keep) - set(self.anchor_ids)
        if missing:
            raise SchemaMismatch(f"unknown anchors {sorted(missing)}")
        keep_set = set(keep)
        anchors = tuple(a for a in self.anchors if a.id in keep_set)
        entries = tuple(
            FingerprintEntry(
                e.position,
                {a: v for a, v in e.rssi_by_anchor.items() if a in keep_set},
                {a: v for a, v in e.sample_count_by_anchor.items() if a in keep_set},
            )
            for e in self.entries
        )
        return FingerprintDb(anchors, entries)


def build_entry(position: tuple[float, float], windows: Iterable[ScanWindow]) -> FingerprintEntry:
    """Average every raw sample per anchor across the windows."""
    sums: dict[str, float] = defaultdict(float)
    counts: dict[str, int] = defaultdict(int)
    for w in windows:
        obs: Iterable[Observation] = w.observations if isinstance(w, ScanWindow) else w
        for o in obs:
            sums[o.anchor_id] += o.rssi
            counts[o.anchor_id] += 1
    if not counts:
        raise EmptyTraining(f"no observations for position {position}")
    means = {a: sums[a] / counts[a] for a in sums}
    return FingerprintEntry((float(position[0]), float(position[1])), means, dict(counts))


def build_db(
    anchors: Sequence[Anchor], windows_by_position: Mapping[tuple[float, float], Iterable[ScanWindow]]
) -> FingerprintDb:
    entries = [build_entry(pos, ws) for pos, ws in windows_by_position.items()]
    return FingerprintDb(tuple(anchors), tuple(entries))


def save_anchors(anchors: Sequence[Anchor], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ANCHORS_HEADER)
        for a in anchors:
            w.writerow([a.id, repr(float(a.x)), repr(float(a.y)), repr(float(a.height))])


def save_db(db: FingerprintDb, directory: str | Path) -> None:
    """Write ``anchors.csv`` and ``entries.csv`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_anchors(db.anchors, directory / ANCHORS_FILE)
    with open(directory / ENTRIES_FILE, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ENTRIES_HEADER)
        for e in db.entries:
            for a, r in e.rssi_by_anchor.items():
                w.writerow(
                    [repr(float(e.position[0])), repr(float(e.position[1])), a, repr(float(r)),
                     e.sample_count_by_anchor[a]]
                )


def _rows(path: Path, header: list[str]):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        got = next(reader, None)
        if got is None:
            return
        if [h.strip() for h in got] != header:
            raise ParseError(f"{path.name}: expected header {','.join(header)}, got {got!r}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"{path.name}: expected {len(header)} fields, got {len(row)}", line=lineno)
            yield lineno, [c.strip() for c in row]


def _finite(text: str, what: str, path: Path, lineno: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"{path.name}: bad {what} {text!r}", line=lineno) from None
    if not math.isfinite(v):
        raise ParseError(f"{path.name}: non-finite {what}", line=lineno)
    return v


def load_anchors(path: str | Path) -> list[Anchor]:
    path = Path(path)
    anchors: list[Anchor] = []
    seen: set[str] = set()
    for lineno, (aid, x, y, h) in _rows(path, ANCHORS_HEADER):
        if not aid:
            raise ParseError(f"{path.name}: empty anchor id", line=lineno)
        if aid in seen:
            raise ParseError(f"{path.name}: duplicate anchor id {aid!r}", line=lineno)
        seen.add(aid)
        anchors.append(
            Anchor(aid, _finite(x, "x_m", path, lineno), _finite(y, "y_m", path, lineno),
                   _finite(h, "height_m", path, lineno))
        )
    return anchors


def load_db(directory: str | Path) -> FingerprintDb:
    directory = Path(directory)
    anchors = load_anchors(directory / ANCHORS_FILE)
    known = {a.id for a in anchors}
    entries_path = directory / ENTRIES_FILE
    grouped: dict[tuple[float, float], tuple[dict, dict]] = {}
    for lineno, (px, py, aid, rssi, count) in _rows(entries_path, ENTRIES_HEADER):
        pos = (_finite(px, "pos_x_m", entries_path, lineno), _finite(py, "pos_y_m", entries_path, lineno))
        if aid not in known:
            raise SchemaMismatch(f"{entries_path.name} line {lineno}: unknown anchor id {aid!r}")
        r = _finite(rssi, "mean_rssi_dbm", entries_path, lineno)
        try:
            c = int(count)
        except ValueError:
            raise ParseError(f"{entries_path.name}: bad sample_count {count!r}", line=lineno) from None
        if c < 1:
            raise ParseError(f"{entries_path.name}: sample_count must be >= 1", line=lineno)
        means, counts = grouped.setdefault(pos, ({}, {}))
        if aid in means:
            raise ParseError(f"{entries_path.name}: duplicate row for anchor {aid!r} at {pos}", line=lineno)
        means[aid] = r
        counts[aid] = c
    entries = tuple(FingerprintEntry(pos, m, c) for pos, (m, c) in grouped.items())
    return FingerprintDb(tuple(anchors), entries)
