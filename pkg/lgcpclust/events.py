"""Marked event data: an n x m matrix whose (i, j) entry is the list of
(time, mark) events of account i in slot j.  Times live in (0, T], marks in
{1..R}.  Duplicate times are legal, every collection here is a multiset.

Event file format::

    {"n": 2, "m": 1, "r": 2, "t": 2.0}
    0\t0\t0.25\t1
    1\t0\t1.5\t2
"""
import json
import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError, ParseError

logger = logging.getLogger(__name__)

HEADER_KEYS = ('n', 'm', 'r', 't')


class MarkedEvent(NamedTuple):
    time: float
    mark: int


class MarkSplitSequence:
    """Per-mark sorted event times; `times[r - 1]` holds mark r."""

    def __init__(self, times):
        self.times = tuple(np.sort(np.asarray(t, dtype=float)) for t in times)

    @property
    def R(self):
        return len(self.times)

    def __len__(self):
        return sum(len(t) for t in self.times)

    def merge(self):
        events = [MarkedEvent(float(t), r + 1)
                  for r, ts in enumerate(self.times) for t in ts]
        return sorted(events)

    def counts(self):
        return np.array([len(t) for t in self.times])

    def __repr__(self):
        return f'<MarkSplitSequence counts={self.counts().tolist()}>'


@dataclass(frozen=True)
class AggregatedRow:
    events: MarkSplitSequence
    m: int


def _check_event(time, mark, R, T):
    if not 1 <= mark <= R:
        raise DomainError(f'mark {mark} not in 1..{R}')
    if not 0 < time <= T:
        raise DomainError(f'time {time} not in (0, {T}]')


def split_by_mark(entry, R):
    """Partition an event list into R sorted per-mark time lists."""
    buckets = [[] for _ in range(R)]
    for time, mark in entry:
        if not 1 <= mark <= R:
            raise DomainError(f'mark {mark} not in 1..{R}')
        buckets[mark - 1].append(time)
    return MarkSplitSequence(buckets)


class SequenceMatrix:
    """Immutable after construction."""

    def __init__(self, n, m, R, T, cells):
        if n < 1 or m < 1 or R < 1:
            raise DomainError(f'need n, m, R >= 1, got {n}, {m}, {R}')
        if T <= 0:
            raise DomainError(f'window length T={T} must be positive')
        if len(cells) != n or any(len(row) != m for row in cells):
            raise DomainError('cells are not an n x m layout')
        for row in cells:
            for cell in row:
                if cell.R != R:
                    raise DomainError(f'cell has {cell.R} marks, expected {R}')
                for ts in cell.times:
                    if len(ts) and (ts[0] <= 0 or ts[-1] > T):
                        raise DomainError(f'event time outside (0, {T}]')
        self.n, self.m, self.R, self.T = n, m, R, float(T)
        self._cells = tuple(tuple(row) for row in cells)

    @classmethod
    def from_records(cls, n, m, R, T, records):
        """`records` yields (account, slot, time, mark) tuples."""
        buckets = [[[[] for _ in range(R)] for _ in range(m)] for _ in range(n)]
        for account, slot, time, mark in records:
            if not 0 <= account < n or not 0 <= slot < m:
                raise DomainError(f'unknown account/slot ({account}, {slot})')
            _check_event(time, mark, R, T)
            buckets[account][slot][mark - 1].append(time)
        cells = [[MarkSplitSequence(c) for c in row] for row in buckets]
        return cls(n, m, R, T, cells)

    def cell(self, i, j):
        return self._cells[i][j]

    def entry(self, i, j):
        return self._cells[i][j].merge()

    def row(self, i):
        return self._cells[i]

    def counts(self):
        return np.array([[c.counts() for c in row] for row in self._cells])

    def subset(self, rows):
        rows = list(rows)
        return SequenceMatrix(len(rows), self.m, self.R, self.T,
                              [self._cells[i] for i in rows])

    def header(self):
        return {'n': self.n, 'm': self.m, 'r': self.R, 't': self.T}

    def __repr__(self):
        return f'<SequenceMatrix n={self.n} m={self.m} R={self.R} T={self.T}>'


def _parse_header(line):
    try:
        header = json.loads(line)
    except ValueError as e:
        raise ParseError(1, f'header is not JSON ({e})')
    if not isinstance(header, dict) or any(k not in header for k in HEADER_KEYS):
        raise ParseError(1, f'header must declare {", ".join(HEADER_KEYS)}')
    try:
        return (int(header['n']), int(header['m']),
                int(header['r']), float(header['t']))
    except (TypeError, ValueError):
        raise ParseError(1, 'header values must be numeric')


def _decode(raw, lineno):
    try:
        return raw.decode('utf-8')
    except UnicodeDecodeError as e:
        raise ParseError(lineno, f'not UTF-8 at byte {e.start}')


def load_events(source):
    """Read an event file from a binary stream into a SequenceMatrix."""
    lines = iter(source)
    try:
        first = next(lines)
    except StopIteration:
        raise ParseError(1, 'missing header')
    n, m, R, T = _parse_header(_decode(first, 1))

    def records():
        for lineno, raw in enumerate(lines, start=2):
            line = _decode(raw, lineno).strip()
            if not line:
                continue
            parts = line.split('\t')
            if len(parts) != 4:
                raise ParseError(lineno, f'expected 4 tab separated fields, got {len(parts)}')
            try:
                account, slot = int(parts[0]), int(parts[1])
                time, mark = float(parts[2]), int(parts[3])
            except ValueError:
                raise ParseError(lineno, f'malformed record {line!r}')
            if not (0 <= account < n and 0 <= slot < m
                    and 1 <= mark <= R and 0 < time <= T):
                raise DomainError(f'line {lineno}: record {line!r} violates header '
                                  f'n={n} m={m} r={R} t={T}')
            yield account, slot, time, mark

    matrix = SequenceMatrix.from_records(n, m, R, T, records())
    logger.info('loaded %r with %d events', matrix, int(matrix.counts().sum()))
    return matrix


def format_time(t):
    # shortest text that reads back to the same float
    return repr(float(t))


def dump_events(matrix, stream):
    """Write `matrix` to a binary stream in the event file format."""
    stream.write((json.dumps(matrix.header()) + '\n').encode('utf-8'))
    for i in range(matrix.n):
        for j in range(matrix.m):
            for time, mark in matrix.entry(i, j):
                stream.write(f'{i}\t{j}\t{format_time(time)}\t{mark}\n'.encode('utf-8'))


def aggregate_rows(matrix):
    """Pool every account's events over all m slots, per mark."""
    rows = []
    for i in range(matrix.n):
        pooled = [np.concatenate([matrix.cell(i, j).times[r] for j in range(matrix.m)])
                  for r in range(matrix.R)]
        rows.append(AggregatedRow(MarkSplitSequence(pooled), matrix.m))
    return rows


def aggregated_matrix(matrix):
    """The m=1 matrix of pooled rows."""
    rows = aggregate_rows(matrix)
    return SequenceMatrix(matrix.n, 1, matrix.R, matrix.T,
                          [[row.events] for row in rows])
