import socket
import threading

import pytest
from hypothesis import given, strategies as st

from rssiloc.errors import OutOfOrder, ParseError
from rssiloc.ingest import (
    Observation,
    ParseStats,
    ScanWindow,
    format_observation,
    iter_observations,
    listen_lines,
    merge_queries,
    parse_observation_line,
    window_stream,
    window_to_query,
)


def obs(t, a="A", r=-60.0):
    return Observation(t, a, r)


class TestWindowStream:
    def test_bucketing(self):
        ws = list(window_stream([obs(0), obs(50), obs(120)], 100))
        assert [(w.start, len(w.observations)) for w in ws] == [(0, 2), (100, 1)]

    def test_empty_stream(self):
        assert list(window_stream([], 100)) == []

    def test_regression(self):
        with pytest.raises(OutOfOrder):
            list(window_stream([obs(100), obs(50)], 100))

    def test_empty_windows_preserved(self):
        ws = list(window_stream([obs(10), obs(350)], 100))
        assert [(w.start, len(w.observations)) for w in ws] == [(10, 1), (110, 0), (210, 0), (310, 1)]

    def test_origin_alignment(self):
        ws = list(window_stream([obs(250), obs(260)], 100, origin=0))
        assert [(w.start, len(w.observations)) for w in ws] == [(0, 0), (100, 0), (200, 2)]

    def test_tolerance_inside_open_window(self):
        ws = list(window_stream([obs(10), obs(30), obs(25)], 100, tolerance_ms=10))
        assert len(ws[0].observations) == 3

    def test_tolerance_cannot_reopen_window(self):
        with pytest.raises(OutOfOrder):
            list(window_stream([obs(10), obs(115), obs(105)], 100, tolerance_ms=10))

    def test_is_lazy(self):
        def source():
            yield obs(0)
            yield obs(150)
            raise RuntimeError("stream still open")

        gen = window_stream(source(), 100)
        assert next(gen).start == 0

    @given(st.lists(st.integers(0, 5000), max_size=60), st.integers(1, 700))
    def test_partition(self, times, width):
        times.sort()
        stream = [obs(t, f"A{i % 3}") for i, t in enumerate(times)]
        ws = list(window_stream(stream, width))
        flat = [o for w in ws for o in w.observations]
        assert flat == stream
        for a, b in zip(ws, ws[1:]):
            assert b.start == a.end


class TestQuery:
    def test_means(self):
        w = ScanWindow(0, 100, (obs(1, "A", -60), obs(2, "A", -62), obs(3, "B", -70)))
        assert window_to_query(w) == {"A": -61.0, "B": -70.0}

    def test_empty(self):
        assert window_to_query(ScanWindow(0, 100)) == {}

    def test_singletons(self):
        w = ScanWindow(0, 100, (obs(1, "A", -55), obs(2, "B", -71)))
        assert window_to_query(w) == {"A": -55.0, "B": -71.0}

    @given(
        st.lists(st.tuples(st.sampled_from("ABC"), st.integers(-100, -30)), max_size=20),
        st.lists(st.tuples(st.sampled_from("ABC"), st.integers(-100, -30)), max_size=20),
    )
    def test_merge_matches_concatenation(self, left, right):
        a = [obs(0, k, r) for k, r in left]
        b = [obs(0, k, r) for k, r in right]
        count = lambda xs: {k: sum(1 for o in xs if o.anchor_id == k) for k in {o.anchor_id for o in xs}}
        merged = merge_queries(window_to_query(a), count(a), window_to_query(b), count(b))
        direct = window_to_query(a + b)
        assert merged.keys() == direct.keys()
        for k in direct:
            assert merged[k] == pytest.approx(direct[k], abs=1e-12)

    def test_window_rejects_outside_observation(self):
        with pytest.raises(ValueError):
            ScanWindow(0, 100, (obs(100),))


class TestParse:
    def test_record(self):
        assert parse_observation_line('{"t_ms":120,"anchor":"B1","rssi":-63}') == Observation(120, "B1", -63.0)

    def test_negative_timestamp(self):
        with pytest.raises(ParseError) as ei:
            parse_observation_line('{"t_ms":-1,"anchor":"B1","rssi":-63}')
        assert ei.value.offset == 1

    @pytest.mark.parametrize(
        "line",
        [
            '{"t_ms":1.5,"anchor":"B1","rssi":-63}',
            '{"t_ms":1,"anchor":"","rssi":-63}',
            '{"t_ms":1,"anchor":"B1","rssi":-63.5}',
            '{"t_ms":1,"anchor":"B1","rssi":-200}',
            '{"t_ms":1,"anchor":"B1"}',
            '[1,2,3]',
            '{"t_ms":1,',
            "",
        ],
    )
    def test_malformed(self, line):
        with pytest.raises(ParseError):
            parse_observation_line(line)

    def test_json_error_offset(self):
        with pytest.raises(ParseError) as ei:
            parse_observation_line('{"t_ms": 1 x}')
        assert ei.value.offset == 11

    def test_lenient_skips_and_counts(self):
        lines = ['{"t_ms":1,"anchor":"A","rssi":-50}\n', "\n", "garbage\n", '{"t_ms":2,"anchor":"A","rssi":-51}\n']
        stats = ParseStats()
        got = list(iter_observations(lines, stats=stats))
        assert [o.t_ms for o in got] == [1, 2]
        assert (stats.parsed, stats.skipped) == (2, 2)
        assert stats.errors[1].line == 3
        assert stats.errors[1].offset == len(lines[0]) + len(lines[1])

    def test_strict_blank_line(self):
        with pytest.raises(ParseError):
            list(iter_observations(['{"t_ms":1,"anchor":"A","rssi":-50}\n', "\n"], strict=True))

    def test_format_round_trip(self):
        o = Observation(42, "A5", -71.0)
        assert format_observation(o) == '{"t_ms":42,"anchor":"A5","rssi":-71}'
        assert parse_observation_line(format_observation(o)) == o


RECORDS = [Observation(t, f"A{t % 3}", float(-50 - t % 7)) for t in range(0, 2000, 37)]


def _replay_windows():
    return list(window_stream(iter_observations(format_observation(o) + "\n" for o in RECORDS), 250))


def test_tcp_stream_matches_replay():
    ready = threading.Event()
    port = []

    def on_ready(p):
        port.append(p)
        ready.set()

    result = []

    def server():
        lines = listen_lines(0, ready=on_ready)
        result.extend(window_stream(iter_observations(lines), 250))

    th = threading.Thread(target=server)
    th.start()
    assert ready.wait(5)
    with socket.create_connection(("127.0.0.1", port[0])) as c:
        c.sendall("".join(format_observation(o) + "\n" for o in RECORDS).encode())
    th.join(5)
    assert result == _replay_windows()


def test_udp_datagrams_match_replay():
    ready = threading.Event()
    port = []
    result = []

    def on_ready(p):
        port.append(p)
        ready.set()

    def server():
        lines = listen_lines(0, udp=True, ready=on_ready, idle_timeout=1.0)
        result.extend(window_stream(iter_observations(lines), 250))

    th = threading.Thread(target=server)
    th.start()
    assert ready.wait(5)
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as c:
        for o in RECORDS:
            c.sendto(format_observation(o).encode(), ("127.0.0.1", port[0]))
    th.join(10)
    assert result == _replay_windows()
