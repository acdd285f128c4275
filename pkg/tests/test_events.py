import io

import numpy as np
import pytest

from lgcpclust.errors import DomainError, ParseError
from lgcpclust.events import (MarkedEvent, SequenceMatrix, aggregate_rows,
                              aggregated_matrix, dump_events, load_events,
                              split_by_mark)
from helpers import matrix_from_cells, poisson_matrix


def stream(text):
    return io.BytesIO(text.encode('utf-8'))


def test_load_events():

    # Success ----------------------------------------------------------
    matrix = load_events(stream('{"n": 1, "m": 1, "r": 1, "t": 2}\n'))
    assert (matrix.n, matrix.m, matrix.R, matrix.T) == (1, 1, 1, 2.0)
    assert matrix.entry(0, 0) == []

    matrix = load_events(stream('{"n": 1, "m": 1, "r": 1, "t": 2}\n0\t0\t1.0\t1\n'))
    assert matrix.entry(0, 0) == [MarkedEvent(1.0, 1)]

    # blank lines are skipped
    matrix = load_events(stream('{"n": 2, "m": 1, "r": 2, "t": 2}\n\n1\t0\t0.5\t2\n\n'))
    assert matrix.counts()[1, 0].tolist() == [0, 1]

    # Failures -------------------------------------------------------
    with pytest.raises(DomainError) as e:
        load_events(stream('{"n": 1, "m": 1, "r": 1, "t": 2}\n0\t0\t2.5\t1\n'))
    assert '2.5' in e.value.error['description']

    with pytest.raises(DomainError):
        load_events(stream('{"n": 1, "m": 1, "r": 1, "t": 2}\n0\t0\t1.0\t2\n'))

    # unknown account
    with pytest.raises(DomainError):
        load_events(stream('{"n": 1, "m": 1, "r": 1, "t": 2}\n3\t0\t1.0\t1\n'))

    with pytest.raises(ParseError) as e:
        load_events(stream('{"n": 1, "m": 1, "r": 1, "t": 2}\n0\t0\t1.0\t1\n0 0 1.0 1\n'))
    assert e.value.lineno == 3

    with pytest.raises(ParseError) as e:
        load_events(stream('{"n": 1, "m": 1}\n'))
    assert e.value.lineno == 1

    with pytest.raises(ParseError):
        load_events(stream(''))

    with pytest.raises(ParseError) as e:
        load_events(io.BytesIO(b'{"n": 1, "m": 1, "r": 1, "t": 2}\n0\t0\t\xff\xfe\t1\n'))
    assert e.value.lineno == 2
    assert 'UTF-8' in e.value.error['description']

    with pytest.raises(ParseError) as e:
        load_events(io.BytesIO(b'\xff{"n": 1}\n'))
    assert e.value.lineno == 1


def test_split_by_mark():
    split = split_by_mark([(1.0, 1), (0.5, 2), (0.2, 1)], 2)
    assert split.times[0].tolist() == [0.2, 1.0]
    assert split.times[1].tolist() == [0.5]

    assert [t.tolist() for t in split_by_mark([], 3).times] == [[], [], []]

    split = split_by_mark([(0.1, 1), (0.3, 1)], 3)
    assert split.counts().tolist() == [2, 0, 0]

    entry = [(1.0, 1), (0.5, 2), (0.2, 1), (0.5, 2)]
    assert split_by_mark(entry, 2).merge() == sorted(MarkedEvent(*e) for e in entry)

    with pytest.raises(DomainError):
        split_by_mark([(1.0, 3)], 2)


def test_aggregate_rows():
    matrix = poisson_matrix(2, 1, 2, 3.0, seed=0)
    rows = aggregate_rows(matrix)
    for i, row in enumerate(rows):
        assert row.m == 1
        for r in range(2):
            assert row.events.times[r].tolist() == matrix.cell(i, 0).times[r].tolist()

    matrix = matrix_from_cells([[[[0.3]], [[0.3]]]], R=1)
    assert aggregate_rows(matrix)[0].events.times[0].tolist() == [0.3, 0.3]

    matrix = poisson_matrix(2, 3, 2, 2.0, seed=1)
    counts = matrix.counts()
    for i, row in enumerate(aggregate_rows(matrix)):
        for r in range(2):
            assert len(row.events.times[r]) == sum(counts[i, j, r] for j in range(3))

    pooled = aggregated_matrix(matrix)
    assert pooled.m == 1
    assert np.array_equal(pooled.counts()[:, 0], counts.sum(axis=1))


def test_dump_events_reproduces_the_multiset():
    matrix = poisson_matrix(3, 2, 2, 4.0, seed=2)
    buffer = io.BytesIO()
    dump_events(matrix, buffer)
    buffer.seek(0)
    loaded = load_events(buffer)
    assert loaded.header() == matrix.header()
    for i in range(matrix.n):
        for j in range(matrix.m):
            assert loaded.entry(i, j) == matrix.entry(i, j)

    # tiny and long times survive the text form exactly
    tiny = matrix_from_cells([[[[1e-10, 0.1 + 0.2, 2.0]]]], R=1)
    buffer = io.BytesIO()
    dump_events(tiny, buffer)
    buffer.seek(0)
    assert load_events(buffer).entry(0, 0) == tiny.entry(0, 0)
    assert b'0\t0\t1e-10\t1' in buffer.getvalue()


def test_sequence_matrix_validation():
    with pytest.raises(DomainError):
        SequenceMatrix(0, 1, 1, 2.0, [])
    with pytest.raises(DomainError):
        matrix_from_cells([[[[2.5]]]], R=1)
    matrix = poisson_matrix(4, 1, 1, 2.0, seed=3)
    subset = matrix.subset([3, 1])
    assert subset.n == 2
    assert subset.entry(0, 0) == matrix.entry(3, 0)
