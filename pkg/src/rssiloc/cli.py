"""Command-line entry point.

Data (hex, positions, NDJSON, reports) goes to stdout or the named output
files; diagnostics go to stderr as ``error: <Category>: <message>``.
Exit codes: 0 success, 1 data or I/O error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace

from . import __version__
from .errors import LocalizationError, ParseError
from .estimator import EstimatorConfig, Mode, Norm, estimate
from .evaluation import (
    BUNDLED_SUBSETS,
    SweepCell,
    evaluate,
    format_table,
    labeled_queries,
    bundled_queries,
    sweep,
    write_per_query_csv,
    write_report_csv,
)
from .fingerprint import FingerprintDb, build_entry, load_anchors, load_db, save_anchors, save_db
from .ibeacon import IBeaconPayload, decode_ibeacon, encode_ibeacon
from .ingest import (
    DEFAULT_WINDOW_MS,
    ParseStats,
    format_observation,
    iter_observations,
    listen_lines,
    window_stream,
    window_to_query,
)
from .pathloss import calibrate, read_samples_csv
from .simulator import (
    group_windows,
    load_scenario,
    bundled_scenario,
    read_truth_csv,
    simulate,
    static_trace,
    write_truth_csv,
)

log = logging.getLogger("rssiloc")


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _probability(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0 <= v <= 1:
        raise argparse.ArgumentTypeError(f"must be in [0, 1], got {v}")
    return v


def _nonneg_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _id_list(text: str) -> tuple[str, ...]:
    ids = tuple(s.strip() for s in text.split(",") if s.strip())
    if not ids:
        raise argparse.ArgumentTypeError("empty anchor list")
    return ids


def _add_estimator_flags(p: argparse.ArgumentParser, *, multi: bool = False) -> None:
    p.add_argument("--k", type=_positive_int, default=3, help="neighbors (default 3)")
    if multi:
        p.add_argument("--norm", action="append", choices=[n.value for n in Norm],
                       help="repeatable; default: chebyshev and euclidean")
        p.add_argument("--mode", action="append", choices=[m.value for m in Mode],
                       help="repeatable; default: knn and wknn")
    else:
        p.add_argument("--norm", choices=[n.value for n in Norm], default=Norm.CHEBYSHEV.value)
        p.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.WKNN.value)
    p.add_argument("--min-common", type=_positive_int, default=3, help="minimum shared anchors (default 3)")


def _add_sim_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=_nonneg_int)
    p.add_argument("--noise-sigma", type=_nonneg_float, help="shadowing std-dev in dB")
    p.add_argument("--packet-loss", type=_probability)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rssiloc", description="RSSI fingerprint indoor localization")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    codec = sub.add_parser("codec", help="iBeacon advertising data")
    csub = codec.add_subparsers(dest="codec_command", required=True)
    enc = csub.add_parser("encode", help="payload fields -> hex")
    enc.add_argument("--uuid", required=True)
    enc.add_argument("--major", type=int, required=True)
    enc.add_argument("--minor", type=int, required=True)
    enc.add_argument("--power", type=int, required=True, help="measured power at 1 m, dBm")
    dec = csub.add_parser("decode", help="hex -> payload fields (JSON)")
    dec.add_argument("hex")

    cal = sub.add_parser("calibrate", help="fit path-loss parameters")
    cal.add_argument("samples", help="CSV with header distance_m,rssi_dbm")
    cal.add_argument("--d0", type=float, default=1.0, help="reference distance in meters")

    fp = sub.add_parser("fingerprint", help="fingerprint database")
    fsub = fp.add_subparsers(dest="fingerprint_command", required=True)
    build = fsub.add_parser("build", help="observations + ground truth -> db CSVs")
    build.add_argument("--obs", required=True, help="NDJSON observations")
    build.add_argument("--truth", required=True, help="t_ms,true_x_m,true_y_m CSV")
    build.add_argument("--anchors", required=True, help="anchor_id,x_m,y_m,height_m CSV")
    build.add_argument("--db", required=True, help="output directory")
    build.add_argument("--window-ms", type=_positive_int, default=DEFAULT_WINDOW_MS)
    build.add_argument("--max-windows", type=_positive_int, help="windows averaged per position")
    build.add_argument("--strict", action="store_true")

    loc = sub.add_parser("locate", help="db + observation stream -> t_ms,x_m,y_m lines")
    loc.add_argument("--db", required=True)
    src = loc.add_mutually_exclusive_group(required=True)
    src.add_argument("--obs", help="NDJSON file, '-' for stdin")
    src.add_argument("--listen", type=_nonneg_int, metavar="PORT")
    loc.add_argument("--host", default="127.0.0.1")
    loc.add_argument("--udp", action="store_true", help="datagram listener instead of TCP")
    loc.add_argument("--anchors", type=_id_list, help="comma-separated anchor subset")
    loc.add_argument("--window-ms", type=_positive_int, default=DEFAULT_WINDOW_MS)
    loc.add_argument("--origin-ms", type=_nonneg_int, help="window alignment (default: first timestamp)")
    loc.add_argument("--strict", action="store_true")
    _add_estimator_flags(loc)

    sim = sub.add_parser("simulate", help="scenario -> NDJSON observations + ground truth")
    sim.add_argument("scenario", help="scenario file, or 'bundled' for the bundled room")
    sim.add_argument("--truth", required=True, help="ground-truth sidecar output")
    sim.add_argument("--out", help="NDJSON output (default stdout)")
    sim.add_argument("--anchors-out", help="also write the anchors CSV")
    sim.add_argument("--stream", type=_nonneg_int, default=0, help="independent substream of the seed")
    sim.add_argument("--dwell-ms", type=_positive_int, help="time spent at each position")
    sim.add_argument("--cycles", type=_positive_int, help="passes over the position list")
    _add_sim_overrides(sim)

    ev = sub.add_parser("evaluate", help="positions + ground truth -> error report")
    ev.add_argument("--positions", required=True, help="t_ms,x_m,y_m CSV from locate")
    ev.add_argument("--truth", required=True)
    ev.add_argument("--per-query", help="write per-query CSV here")
    ev.add_argument("--anchors", type=_id_list, help="anchor ids echoed in the report")
    ev.add_argument("--table", action="store_true", help="human-readable table instead of CSV")
    ev.add_argument("--no-reference", action="store_true", help="omit the measured reference rows")
    _add_estimator_flags(ev)

    sw = sub.add_parser("sweep", help="norm / mode / anchor-subset comparison")
    sw.add_argument("--bundled", action="store_true", help="simulate the bundled room instead of reading files")
    sw.add_argument("--db")
    sw.add_argument("--obs")
    sw.add_argument("--truth")
    sw.add_argument("--subset", type=_id_list, action="append",
                    help="repeatable anchor subset; default with --bundled: 4 corners, all 5")
    sw.add_argument("--window-ms", type=_positive_int, default=DEFAULT_WINDOW_MS)
    sw.add_argument("--queries", type=_positive_int, default=1000, help="query windows with --bundled")
    sw.add_argument("--table", action="store_true")
    sw.add_argument("--no-reference", action="store_true")
    sw.add_argument("--strict", action="store_true")
    _add_estimator_flags(sw, multi=True)
    _add_sim_overrides(sw)
    return parser


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def _cmd_codec(args, out) -> int:
    if args.codec_command == "encode":
        payload = IBeaconPayload.from_uuid_string(args.uuid, args.major, args.minor, args.power)
        out.write(encode_ibeacon(payload).hex().upper() + "\n")
    else:
        text = "".join(ch for ch in args.hex if ch not in " :-\t")
        try:
            raw = bytes.fromhex(text)
        except ValueError as exc:
            raise ParseError(f"bad hex: {exc}") from None
        p = decode_ibeacon(raw)
        out.write(json.dumps({"uuid": p.uuid_string, "major": p.major, "minor": p.minor,
                              "measured_power": p.measured_power}) + "\n")
    return 0


def _cmd_calibrate(args, out) -> int:
    params = calibrate(read_samples_csv(args.samples), d0=args.d0)
    out.write("rssi_at_d0_dbm,d0_m,n\n")
    out.write(f"{params.rssi_at_d0:.6f},{params.d0:.6f},{params.n:.6f}\n")
    return 0


def _read_obs(path: str, strict: bool, stats: ParseStats):
    if path == "-":
        yield from iter_observations(sys.stdin, strict=strict, stats=stats)
        return
    with open(path, encoding="utf-8", newline="") as fh:
        yield from iter_observations(fh, strict=strict, stats=stats)


def _cmd_fingerprint(args, out) -> int:
    anchors = load_anchors(args.anchors)
    truth = read_truth_csv(args.truth)
    stats = ParseStats()
    obs = list(_read_obs(args.obs, args.strict, stats))
    first = truth.start_ms
    grouped = group_windows(window_stream(obs, args.window_ms, origin=first), truth)
    seen: dict = {}
    for _, pos in truth.points:
        seen.setdefault(pos, None)
    entries = []
    for pos in seen:
        windows = [w for w in grouped.get(pos, []) if w.observations]
        if args.max_windows:
            windows = windows[: args.max_windows]
        entries.append(build_entry(pos, windows))
    save_db(FingerprintDb(tuple(anchors), tuple(entries)), args.db)
    log.info("built %d entries from %d observations (%d bad lines skipped)", len(entries), stats.parsed, stats.skipped)
    return 0


def _cmd_locate(args, out) -> int:
    db = load_db(args.db)
    if args.anchors:
        db = db.restrict(args.anchors)
    cfg = EstimatorConfig(k=args.k, norm=args.norm, mode=args.mode, min_common_anchors=args.min_common)
    stats = ParseStats()
    if args.obs is not None:
        obs = _read_obs(args.obs, args.strict, stats)
    else:
        lines = listen_lines(args.listen, args.host, udp=args.udp,
                             ready=lambda port: log.info("listening on %s:%d", args.host, port))
        obs = iter_observations(lines, strict=args.strict, stats=stats)
    out.write("t_ms,x_m,y_m\n")
    out.flush()
    for w in window_stream(obs, args.window_ms, origin=args.origin_ms):
        try:
            res = estimate(db, window_to_query(w), cfg)
        except LocalizationError as exc:
            if args.strict:
                raise
            log.warning("%s: window t_ms=%d: %s", exc.category, w.start, exc)
            continue
        out.write(f"{w.start},{res.position[0]:.6f},{res.position[1]:.6f}\n")
        out.flush()
    return 0


def _cmd_simulate(args, out) -> int:
    if args.scenario == "bundled":
        scenario, layout = bundled_scenario()
        trace = static_trace(layout, args.dwell_ms or 10_000, args.cycles or 1)
    else:
        scenario, trace = load_scenario(args.scenario)
        if trace is None:
            raise ParseError(f"{args.scenario}: no [trace] section")
        if args.dwell_ms or args.cycles:
            positions = list(dict.fromkeys(p for _, p in trace.points))
            dwell = args.dwell_ms or (trace.points[1][0] - trace.points[0][0] if len(trace.points) > 1
                                      else trace.end_ms - trace.start_ms)
            trace = static_trace(positions, dwell, args.cycles or 1, trace.start_ms)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.noise_sigma is not None:
        overrides["noise_sigma"] = args.noise_sigma
    if args.packet_loss is not None:
        overrides["packet_loss_p"] = args.packet_loss
    if overrides:
        scenario = replace(scenario, **overrides)
    obs = simulate(scenario, trace, stream=args.stream)
    with open(args.truth, "w", newline="", encoding="utf-8") as fh:
        write_truth_csv(fh, trace)
    if args.anchors_out:
        save_anchors(scenario.anchors, args.anchors_out)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.writelines(format_observation(o) + "\n" for o in obs)
    else:
        out.writelines(format_observation(o) + "\n" for o in obs)
    return 0


def _read_positions(path: str) -> list[tuple[int, tuple[float, float]]]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t_ms", "x_m", "y_m"]:
            raise ParseError(f"expected header t_ms,x_m,y_m, got {header!r}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append((int(row[0]), (float(row[1]), float(row[2]))))
            except (ValueError, IndexError) as exc:
                raise ParseError(str(exc), line=lineno) from exc
    return rows


def _cmd_evaluate(args, out) -> int:
    truth = read_truth_csv(args.truth)
    positions = _read_positions(args.positions)
    cfg = EstimatorConfig(k=args.k, norm=args.norm, mode=args.mode, min_common_anchors=args.min_common)
    anchors = args.anchors or ()
    report = evaluate(((truth.position_at(t), p, t) for t, p in positions), config=cfg, anchors=anchors)
    cell = SweepCell(f"{cfg.label}-{len(anchors)}a" if anchors else cfg.label, cfg, tuple(anchors), report=report)
    if args.per_query:
        with open(args.per_query, "w", newline="", encoding="utf-8") as fh:
            write_per_query_csv(fh, report)
    if args.table:
        out.write(format_table([cell], include_reference=not args.no_reference))
    else:
        write_report_csv(out, [cell], include_reference=not args.no_reference)
    return 0


def _cmd_sweep(args, out, parser) -> int:
    norms = args.norm or [n.value for n in Norm]
    modes = args.mode or [m.value for m in Mode]
    configs = [EstimatorConfig(k=args.k, norm=n, mode=m, min_common_anchors=args.min_common)
               for n in norms for m in modes]
    if args.bundled:
        db, queries = bundled_queries(
            seed=args.seed or 0,
            noise_sigma=2.0 if args.noise_sigma is None else args.noise_sigma,
            packet_loss_p=args.packet_loss or 0.0,
            n_queries=args.queries,
            window_ms=args.window_ms,
        )
        subsets = args.subset or list(BUNDLED_SUBSETS)
    else:
        if not (args.db and args.obs and args.truth):
            parser.error("sweep needs either --bundled or all of --db, --obs, --truth")
        db = load_db(args.db)
        truth = read_truth_csv(args.truth)
        obs = _read_obs(args.obs, args.strict, ParseStats())
        queries = labeled_queries(window_stream(obs, args.window_ms, origin=truth.start_ms), truth)
        subsets = args.subset or [tuple(db.anchor_ids)]
    cells = sweep(db, queries, configs, subsets)
    for c in cells:
        if c.error is not None:
            sys.stderr.write(f"error: {c.error.category}: cell {c.config_id}: {c.error}\n")
    if args.table:
        out.write(format_table(cells, include_reference=not args.no_reference))
    else:
        write_report_csv(out, cells, include_reference=not args.no_reference)
    return 1 if args.strict and any(c.error is not None for c in cells) else 0


def main(argv: list[str] | None = None, *, stdout=None) -> int:
    out = stdout or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    root = logging.getLogger("rssiloc")
    root.handlers[:] = [handler]
    root.setLevel(logging.WARNING)
    root.propagate = False

    try:
        if args.command == "codec":
            return _cmd_codec(args, out)
        if args.command == "calibrate":
            return _cmd_calibrate(args, out)
        if args.command == "fingerprint":
            return _cmd_fingerprint(args, out)
        if args.command == "locate":
            return _cmd_locate(args, out)
        if args.command == "simulate":
            return _cmd_simulate(args, out)
        if args.command == "evaluate":
            return _cmd_evaluate(args, out)
        if args.command == "sweep":
            return _cmd_sweep(args, out, parser)
    except LocalizationError as exc:
        sys.stderr.write(f"error: {exc.category}: {exc}\n")
        return 1
    except OSError as exc:
        sys.stderr.write(f"error: IOError: {exc}\n")
        return 1
    except ValueError as exc:
        sys.stderr.write(f"error: InvalidValue: {exc}\n")
        return 1
    parser.error(f"unknown command {args.command!r}")  # pragma: no cover
    return 2  # pragma: no cover


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
