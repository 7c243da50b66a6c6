import csv
import io
import random

import pytest

from rssiloc.errors import EmptyRun, InsufficientOverlap
from rssiloc.estimator import EstimatorConfig
from rssiloc.evaluation import (
    PER_QUERY_HEADER,
    REPORT_HEADER,
    evaluate,
    format_table,
    bundled_queries,
    sweep,
    write_per_query_csv,
    write_report_csv,
)


def test_aggregates():
    pairs = [((0, 0), (1, 0), 0), ((0, 0), (0, 2), 1), ((0, 0), (3, 0), 2)]
    r = evaluate(pairs)
    assert (r.mean_error, r.max_error, r.min_error, r.query_count) == (2.0, 3.0, 1.0, 3)


def test_identity():
    r = evaluate([((1.5, 2.5), (1.5, 2.5), 0)])
    assert r.mean_error == r.max_error == r.min_error == 0.0


def test_three_four_five():
    assert evaluate([((0, 0), (3, 4), 0)]).per_query[0].error == 5.0


def test_empty():
    with pytest.raises(EmptyRun):
        evaluate([])


def test_permutation_stable():
    rng = random.Random(3)
    pairs = [((rng.uniform(0, 7), rng.uniform(0, 7)), (rng.uniform(0, 7), rng.uniform(0, 7)), t) for t in range(500)]
    a = evaluate(pairs)
    shuffled = pairs[:]
    rng.shuffle(shuffled)
    b = evaluate(shuffled)
    assert (a.mean_error, a.max_error, a.min_error) == (b.mean_error, b.max_error, b.min_error)
    assert [q.t_ms for q in b.per_query] == [t for _, _, t in shuffled]
    assert a.mean_error == pytest.approx(sum(q.error for q in a.per_query) / 500, abs=1e-12)
    assert a.min_error <= a.mean_error <= a.max_error


@pytest.fixture(scope="module")
def zero_noise():
    return bundled_queries(noise_sigma=0.0, n_queries=18, training_windows=2)


def test_sweep_cells(zero_noise):
    db, queries = zero_noise
    cfgs = [EstimatorConfig(k=3, norm="chebyshev"), EstimatorConfig(k=3, norm="euclidean")]
    cells = sweep(db, queries, cfgs)
    assert len(cells) == 2
    assert [c.report.query_count for c in cells] == [18, 18]
    assert [q.t_ms for q in cells[0].report.per_query] == [q.t_ms for q in cells[1].report.per_query]


def test_sweep_isolates_failing_cell(zero_noise):
    db, queries = zero_noise
    cells = sweep(db, queries, [EstimatorConfig(k=3)], [("A1", "A2"), ("A1", "A2", "A3")])
    assert isinstance(cells[0].error, InsufficientOverlap)
    assert cells[0].report is None
    assert cells[1].error is None and cells[1].report.query_count == 18


@pytest.mark.parametrize("norm", ["chebyshev", "euclidean"])
def test_zero_noise_wknn_closed_loop(zero_noise, norm):
    db, queries = zero_noise
    (cell,) = sweep(db, queries, [EstimatorConfig(k=3, norm=norm, mode="wknn")])
    assert cell.report.mean_error < 0.1


def test_sweep_order_deterministic(zero_noise):
    db, queries = zero_noise
    cfgs = [EstimatorConfig(k=1), EstimatorConfig(k=3, mode="knn")]
    subsets = [("A1", "A2", "A3", "A4"), ("A1", "A2", "A3", "A4", "A5")]
    ids = [c.config_id for c in sweep(db, queries, cfgs, subsets)]
    assert ids == ["chebyshev-k1-wknn-4a", "chebyshev-k1-wknn-5a", "chebyshev-k3-knn-4a", "chebyshev-k3-knn-5a"]


def test_report_csv(zero_noise):
    db, queries = zero_noise
    cells = sweep(db, queries, [EstimatorConfig(k=3)], [("A1", "A2"), ("A1", "A2", "A3", "A4")])
    buf = io.StringIO()
    write_report_csv(buf, cells)
    rows = list(csv.reader(io.StringIO(buf.getvalue())))
    assert rows[0] == REPORT_HEADER
    assert rows[1][5:] == ["", "", "", "0"]
    assert rows[2][4] == "4"
    assert rows[3][0].startswith("measured-") and rows[3][5] == "0.704000"
    assert "InsufficientOverlap" in format_table(cells)


def test_per_query_csv():
    r = evaluate([((0, 0), (3, 4), 1000)])
    buf = io.StringIO()
    write_per_query_csv(buf, r)
    assert buf.getvalue().splitlines() == [",".join(PER_QUERY_HEADER),
                                           "1000,0.000000,0.000000,3.000000,4.000000,5.000000"]
