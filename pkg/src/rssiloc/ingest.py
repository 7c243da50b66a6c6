"""Observation records, tumbling scan windows and the NDJSON wire format.

Each record is one JSON object per line::

    {"t_ms":120,"anchor":"B1","rssi":-63}

The same format is used for file replay and for the network listener, where
every line (TCP) or datagram (UDP) carries one record.
"""

from __future__ import annotations

import json
import logging
import socket
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

from .errors import OutOfOrder, ParseError

log = logging.getLogger(__name__)

RSSI_MIN = -127
RSSI_MAX = 20
DEFAULT_WINDOW_MS = 1000


@dataclass(frozen=True)
class Observation:
    t_ms: int
    anchor_id: str
    rssi: float

    def __post_init__(self) -> None:
        if self.t_ms < 0:
            raise ValueError(f"negative timestamp {self.t_ms}")
        if not RSSI_MIN <= self.rssi <= RSSI_MAX:
            raise ValueError(f"rssi {self.rssi} outside [{RSSI_MIN}, {RSSI_MAX}]")


@dataclass(frozen=True)
class ScanWindow:
    start: int
    duration: int
    observations: tuple[Observation, ...] = ()

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise ValueError("window duration must be positive")
        end = self.start + self.duration
        for obs in self.observations:
            if not self.start <= obs.t_ms < end:
                raise ValueError(f"observation at {obs.t_ms} outside [{self.start}, {end})")

    @property
    def end(self) -> int:
        return self.start + self.duration


@dataclass
class ParseStats:
    """Counters filled in by :func:`iter_observations` in lenient mode."""

    parsed: int = 0
    skipped: int = 0
    errors: list[ParseError] = field(default_factory=list)


def window_stream(
    observations: Iterable[Observation],
    window_ms: int = DEFAULT_WINDOW_MS,
    *,
    origin: int | None = None,
    tolerance_ms: int = 0,
) -> Iterator[ScanWindow]:
    """Bucket a time-ordered observation stream into tumbling windows.

    Windows are aligned to ``origin`` (default: the first timestamp) and
    empty windows between populated ones are emitted to preserve timing.
    A window is yielded as soon as an observation past its end arrives, so
    the generator works on live streams. A timestamp regression larger than
    ``tolerance_ms``, or one that reaches back into an already emitted
    window, raises OutOfOrder.
    """
    if window_ms <= 0:
        raise ValueError("window_ms must be positive")
    start: int | None = None
    bucket: list[Observation] = []
    last_t: int | None = None
    for obs in observations:
        if last_t is not None and obs.t_ms < last_t - tolerance_ms:
            raise OutOfOrder(f"timestamp {obs.t_ms} after {last_t}")
        if start is None:
            base = obs.t_ms if origin is None else origin
            if obs.t_ms < base:
                raise OutOfOrder(f"timestamp {obs.t_ms} precedes window origin {base}")
            start = base + ((obs.t_ms - base) // window_ms) * window_ms
            if origin is not None:
                # leading empty windows keep the stream aligned with the origin
                for s in range(base, start, window_ms):
                    yield ScanWindow(s, window_ms)
        if obs.t_ms < start:
            raise OutOfOrder(f"timestamp {obs.t_ms} falls in an already emitted window")
        while obs.t_ms >= start + window_ms:
            yield ScanWindow(start, window_ms, tuple(bucket))
            bucket = []
            start += window_ms
        bucket.append(obs)
        last_t = obs.t_ms if last_t is None else max(last_t, obs.t_ms)
    if start is not None:
        yield ScanWindow(start, window_ms, tuple(bucket))


def window_to_query(window: ScanWindow | Iterable[Observation]) -> dict[str, float]:
    """Per-anchor mean RSSI over a window; unseen anchors are absent."""
    obs = window.observations if isinstance(window, ScanWindow) else window
    sums: dict[str, float] = defaultdict(float)
    counts: dict[str, int] = defaultdict(int)
    for o in obs:
        sums[o.anchor_id] += o.rssi
        counts[o.anchor_id] += 1
    return {a: sums[a] / counts[a] for a in sums}


def merge_queries(
    a: Mapping[str, float], na: Mapping[str, int], b: Mapping[str, float], nb: Mapping[str, int]
) -> dict[str, float]:
    """Count-weighted merge of two per-anchor mean maps."""
    out = {}
    for key in set(a) | set(b):
        ca, cb = na.get(key, 0), nb.get(key, 0)
        out[key] = (a.get(key, 0.0) * ca + b.get(key, 0.0) * cb) / (ca + cb)
    return out


def parse_observation_line(line: str | bytes) -> Observation:
    """Parse one NDJSON record. Raises ParseError with the byte offset and reason."""
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"invalid UTF-8: {exc.reason}", offset=exc.start) from exc
    text = line.rstrip("\r\n")
    if not text.strip():
        raise ParseError("blank line", offset=0)
    try:
        rec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", offset=len(text[: exc.pos].encode())) from exc
    if not isinstance(rec, dict):
        raise ParseError("record is not a JSON object", offset=0)

    def offset_of(key: str) -> int:
        pos = text.find(f'"{key}"')
        return len(text[: max(pos, 0)].encode())

    for key in ("t_ms", "anchor", "rssi"):
        if key not in rec:
            raise ParseError(f"missing field {key!r}", offset=0)
    t_ms, anchor, rssi = rec["t_ms"], rec["anchor"], rec["rssi"]
    if not isinstance(t_ms, int) or isinstance(t_ms, bool):
        raise ParseError("t_ms must be an integer", offset=offset_of("t_ms"))
    if t_ms < 0:
        raise ParseError(f"negative timestamp {t_ms}", offset=offset_of("t_ms"))
    if not isinstance(anchor, str) or not anchor:
        raise ParseError("anchor must be a non-empty string", offset=offset_of("anchor"))
    if not isinstance(rssi, int) or isinstance(rssi, bool):
        raise ParseError("rssi must be an integer dBm", offset=offset_of("rssi"))
    if not RSSI_MIN <= rssi <= RSSI_MAX:
        raise ParseError(f"rssi {rssi} outside [{RSSI_MIN}, {RSSI_MAX}]", offset=offset_of("rssi"))
    return Observation(t_ms, anchor, float(rssi))


def format_observation(obs: Observation) -> str:
    """Serialize to one NDJSON line (no trailing newline); RSSI is rounded to integer dBm."""
    return json.dumps(
        {"t_ms": int(obs.t_ms), "anchor": obs.anchor_id, "rssi": int(round(obs.rssi))},
        separators=(",", ":"),
    )


def iter_observations(
    lines: Iterable[str | bytes], *, strict: bool = False, stats: ParseStats | None = None
) -> Iterator[Observation]:
    """Parse a line stream. Lenient mode counts and skips bad lines; strict mode raises."""
    stats = stats if stats is not None else ParseStats()
    pos = 0
    for lineno, line in enumerate(lines, start=1):
        size = len(line) if isinstance(line, bytes) else len(line.encode())
        try:
            obs = parse_observation_line(line)
        except ParseError as exc:
            err = ParseError(exc.reason, line=lineno, offset=pos + (exc.offset or 0))
            if strict:
                raise err from exc
            stats.skipped += 1
            stats.errors.append(err)
            if line.strip():
                log.warning("skipping bad record: %s", err)
        else:
            stats.parsed += 1
            yield obs
        pos += size


def read_ndjson(path, *, strict: bool = False, stats: ParseStats | None = None) -> list[Observation]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(iter_observations(fh, strict=strict, stats=stats))


def write_ndjson(fh, observations: Iterable[Observation]) -> None:
    for obs in observations:
        fh.write(format_observation(obs) + "\n")


def listen_lines(
    port: int,
    host: str = "127.0.0.1",
    *,
    udp: bool = False,
    ready=None,
    idle_timeout: float | None = None,
) -> Iterator[bytes]:
    """Yield raw records from a network socket.

    TCP: accepts one connection and yields its lines until the peer closes.
    UDP: yields each line of each datagram until ``idle_timeout`` seconds
    pass without traffic (``None`` waits forever). ``ready`` is called with
    the bound port once the socket is listening.
    """
    kind = socket.SOCK_DGRAM if udp else socket.SOCK_STREAM
    with socket.socket(socket.AF_INET, kind) as srv:
        srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        srv.bind((host, port))
        if udp:
            srv.settimeout(idle_timeout)
            if ready is not None:
                ready(srv.getsockname()[1])
            while True:
                try:
                    data, _ = srv.recvfrom(65536)
                except socket.timeout:
                    return
                for line in data.splitlines():
                    yield line
        else:
            srv.listen(1)
            if ready is not None:
                ready(srv.getsockname()[1])
            conn, _ = srv.accept()
            with conn, conn.makefile("rb") as stream:
                for line in stream:
                    yield line
