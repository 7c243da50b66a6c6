import csv
import io
import json
import socket
import subprocess
import sys
import time

import pytest

from rssiloc.cli import main
from rssiloc.pathloss import PathLossParams, predict_rssi, write_samples_csv
from rssiloc.simulator import dump_scenario, bundled_scenario

GOLDEN = "0201061AFF4C000215" + "00" * 16 + "00000000C5"


@pytest.fixture
def run(capsys):
    def _run(*argv):
        try:
            code = main(list(argv))
        except SystemExit as exc:
            code = exc.code
        cap = capsys.readouterr()
        return code, cap.out, cap.err

    return _run


def test_codec_encode(run):
    code, out, _ = run("codec", "encode", "--uuid", "00000000-0000-0000-0000-000000000000",
                       "--major", "0", "--minor", "0", "--power", "-59")
    assert code == 0 and out.strip() == GOLDEN


def test_codec_decode(run):
    code, out, _ = run("codec", "decode", GOLDEN)
    assert code == 0
    assert json.loads(out) == {"uuid": "00000000-0000-0000-0000-000000000000", "major": 0, "minor": 0,
                               "measured_power": -59}


def test_codec_decode_not_ibeacon(run):
    code, out, err = run("codec", "decode", GOLDEN.replace("4C00", "4D00"))
    assert code == 1 and out == ""
    assert err.startswith("error: NotIBeacon:")


def test_codec_out_of_range(run):
    code, out, err = run("codec", "encode", "--uuid", "00000000-0000-0000-0000-000000000000",
                         "--major", "70000", "--minor", "0", "--power", "0")
    assert code == 1 and out == "" and "InvalidPayload" in err


def test_unknown_flag(run):
    code, out, _ = run("locate", "--bogus")
    assert code == 2 and out == ""


def test_bad_k_is_usage_error(run, tmp_path):
    code, out, _ = run("locate", "--db", str(tmp_path), "--obs", "x", "--k", "0")
    assert code == 2 and out == ""


def test_missing_file_is_io_error(run, tmp_path):
    code, out, err = run("calibrate", str(tmp_path / "nope.csv"))
    assert code == 1 and err.startswith("error: IOError:")


def test_calibrate(run, tmp_path):
    p = PathLossParams(-45.0, 1.0, 2.5)
    path = tmp_path / "s.csv"
    write_samples_csv(path, [(d, predict_rssi(p, d)) for d in (1, 2, 4, 8)])
    code, out, _ = run("calibrate", str(path))
    assert code == 0
    assert out.splitlines() == ["rssi_at_d0_dbm,d0_m,n", "-45.000000,1.000000,2.500000"]


def pipeline(run, d, *, noise="0", seed="0", mode="wknn"):
    d.mkdir(exist_ok=True)
    assert run("simulate", "bundled", "--noise-sigma", noise, "--seed", seed, "--truth", str(d / "train_truth.csv"),
               "--anchors-out", str(d / "anchors.csv"), "--out", str(d / "train.ndjson"))[0] == 0
    assert run("fingerprint", "build", "--obs", str(d / "train.ndjson"), "--truth", str(d / "train_truth.csv"),
               "--anchors", str(d / "anchors.csv"), "--db", str(d / "db"))[0] == 0
    code, out, _ = run("simulate", "bundled", "--noise-sigma", noise, "--seed", seed, "--stream", "1",
                       "--dwell-ms", "1000", "--cycles", "3", "--truth", str(d / "q_truth.csv"))
    assert code == 0
    (d / "q.ndjson").write_text(out)
    code, out, _ = run("locate", "--db", str(d / "db"), "--obs", str(d / "q.ndjson"), "--mode", mode)
    assert code == 0
    (d / "pos.csv").write_text(out)
    code, out, _ = run("evaluate", "--positions", str(d / "pos.csv"), "--truth", str(d / "q_truth.csv"),
                       "--mode", mode, "--per-query", str(d / "per_query.csv"))
    assert code == 0
    (d / "report.csv").write_text(out)
    return list(csv.DictReader(io.StringIO(out)))


def test_zero_noise_pipeline(run, tmp_path):
    rows = pipeline(run, tmp_path)
    assert float(rows[0]["mean_m"]) < 0.1
    assert rows[0]["n_queries"] == "27"
    assert any(r["config_id"].startswith("measured-") for r in rows)


def test_locate_lines(run, tmp_path):
    pipeline(run, tmp_path)
    lines = (tmp_path / "pos.csv").read_text().splitlines()
    assert lines[0] == "t_ms,x_m,y_m"
    assert lines[1] == "0,1.800000,1.800000"
    assert len(lines) == 28


def test_locate_lenient_and_strict(run, tmp_path):
    pipeline(run, tmp_path)
    bad = tmp_path / "bad.ndjson"
    bad.write_text((tmp_path / "q.ndjson").read_text() + "not json\n")
    code, out, err = run("locate", "--db", str(tmp_path / "db"), "--obs", str(bad))
    assert code == 0 and len(out.splitlines()) == 28 and "skipping" in err
    code, out, err = run("locate", "--db", str(tmp_path / "db"), "--obs", str(bad), "--strict")
    assert code == 1 and "error: ParseError" in err


def test_locate_listen_matches_file(tmp_path, run):
    pipeline(run, tmp_path)
    expected = (tmp_path / "pos.csv").read_text()
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    proc = subprocess.Popen(
        [sys.executable, "-m", "rssiloc", "locate", "--db", str(tmp_path / "db"), "--listen", str(port)],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True,
    )
    payload = (tmp_path / "q.ndjson").read_bytes()
    for _ in range(100):
        try:
            conn = socket.create_connection(("127.0.0.1", port), timeout=1)
            break
        except OSError:
            time.sleep(0.05)
    else:
        proc.kill()
        pytest.fail("listener did not come up")
    with conn:
        conn.sendall(payload)
    out, err = proc.communicate(timeout=30)
    assert proc.returncode == 0, err
    assert out == expected


def test_simulate_from_scenario_file(run, tmp_path):
    sc, layout = bundled_scenario(noise_sigma=0.0)
    path = tmp_path / "room.ini"
    dump_scenario(sc, path, positions=layout[:2], dwell_ms=500)
    code, out, _ = run("simulate", str(path), "--truth", str(tmp_path / "t.csv"))
    assert code == 0
    assert len(out.splitlines()) == 2 * 5 * 5
    assert (tmp_path / "t.csv").read_text().splitlines() == ["t_ms,true_x_m,true_y_m", "0,1.8,1.8", "500,3.6,1.8"]


def test_simulate_bad_scenario(run, tmp_path):
    path = tmp_path / "x.ini"
    path.write_text("[scenario]\n")
    code, out, err = run("simulate", str(path), "--truth", str(tmp_path / "t.csv"))
    assert code == 1 and out == "" and err.startswith("error: ParseError")


def test_sweep_bundled(run):
    code, out, err = run("sweep", "--bundled", "--queries", "45", "--mode", "wknn")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["config_id"] for r in rows[:4]] == [
        "chebyshev-k3-wknn-4a", "chebyshev-k3-wknn-5a", "euclidean-k3-wknn-4a", "euclidean-k3-wknn-5a",
    ]
    assert all(r["n_queries"] == "45" for r in rows[:4])


def test_sweep_reports_failing_cell(run):
    code, out, err = run("sweep", "--bundled", "--queries", "9", "--subset", "A1,A2", "--subset", "A1,A2,A3",
                         "--norm", "chebyshev", "--mode", "wknn")
    assert code == 0
    assert "error: InsufficientOverlap: cell chebyshev-k3-wknn-2a" in err
    rows = list(csv.DictReader(io.StringIO(out)))
    assert rows[0]["mean_m"] == "" and rows[1]["n_queries"] == "9"


def test_sweep_needs_inputs(run):
    code, out, _ = run("sweep")
    assert code == 2 and out == ""


def test_sweep_from_files(run, tmp_path):
    pipeline(run, tmp_path)
    code, out, _ = run("sweep", "--db", str(tmp_path / "db"), "--obs", str(tmp_path / "q.ndjson"),
                       "--truth", str(tmp_path / "q_truth.csv"), "--no-reference")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 4
    assert all(r["n_queries"] == "27" for r in rows)


def test_streams_separate(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "rssiloc", "codec", "decode", "02"], capture_output=True, text=True,
    )
    assert proc.returncode == 1
    assert proc.stdout == ""
    assert proc.stderr.startswith("error: Truncated:")
