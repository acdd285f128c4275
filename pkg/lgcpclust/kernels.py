"""Kernel smoothed first and second order statistics of event sequences.

A kernel is a symmetric probability density `K`; with bandwidth `h` we use
`K_h(u) = K(u / h) / h`.  The edge correction `g(x; h)` is the mass of
`K_h(x - .)` that falls inside the window [0, T].

Second order statistics exclude the pairing of an event with itself.  They
are formed from the separable decomposition

    sum_{u != v} k_u(s) k_v(t) = (sum_u k_u(s)) (sum_v k_v(t)) - sum_u k_u(s) k_u(t)

so no double loop over events is ever run.
"""
import abc
import logging
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import DomainError, PreconditionError

logger = logging.getLogger(__name__)

QUADRATURE_NODES = 64


class Kernel(metaclass=abc.ABCMeta):
    """A unit-bandwidth kernel density."""

    @abc.abstractmethod
    def __call__(self, x):
        pass

    @abc.abstractmethod
    def support(self):
        """Half width of the (effective) support."""

    def edge_mass(self, lo, hi):
        """Integral of K over [lo, hi], by Gauss-Legendre quadrature."""
        lo = np.maximum(lo, -self.support())
        hi = np.minimum(hi, self.support())
        nodes, weights = np.polynomial.legendre.leggauss(QUADRATURE_NODES)
        half = np.where(hi > lo, (hi - lo) / 2, 0.0)
        mid = (hi + lo) / 2
        x = mid[..., None] + half[..., None] * nodes
        return half * (self(x) * weights).sum(axis=-1)


class EpanechnikovKernel(Kernel):

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(np.abs(x) < 1, 0.75 * (1 - x * x), 0.0)

    def support(self):
        return 1.0

    @staticmethod
    def cdf(x):
        x = np.clip(x, -1, 1)
        return 0.5 + 0.75 * x - 0.25 * x ** 3

    def edge_mass(self, lo, hi):
        return self.cdf(hi) - self.cdf(lo)


class GaussianKernel(Kernel):

    def __call__(self, x):
        return norm.pdf(x)

    def support(self):
        return 8.0


KERNELS = {
    'epanechnikov': EpanechnikovKernel(),
    'gaussian': GaussianKernel(),
}


@dataclass(frozen=True)
class KernelConfig:
    kernel: str
    bandwidth: float
    window: float

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise DomainError(f'unknown kernel {self.kernel!r}, '
                              f'choose from {", ".join(KERNELS)}')
        if not 0 < self.bandwidth < self.window / 2:
            raise DomainError(f'bandwidth {self.bandwidth} not in (0, T/2) '
                              f'for T={self.window}')

    @property
    def density(self):
        return KERNELS[self.kernel]


def kernel_weight(u, cfg):
    h = cfg.bandwidth
    return cfg.density(np.asarray(u, dtype=float) / h) / h


def edge_correction(x, cfg):
    """g(x; h) = integral over [0, T] of K_h(x - t) dt."""
    x = np.asarray(x, dtype=float)
    h = cfg.bandwidth
    return cfg.density.edge_mass((x - cfg.window) / h, x / h)


def smoothing_matrix(times, grid, cfg):
    """Rows k_u(t) = K_h(t - u) / g(t; h) on the grid, one per event."""
    times = np.asarray(times, dtype=float)
    g = edge_correction(grid.points, cfg)
    return kernel_weight(grid.points[None, :] - times[:, None], cfg) / g


def point_stat(row, n, grid, cfg):
    """b_i^r(t), shape (R, G)."""
    return np.stack([smoothing_matrix(ts, grid, cfg).sum(axis=0) / n
                     for ts in row.times])


def pair_stat(row, n, grid, cfg):
    """a_i^{r,r'}(s, t), shape (R, R, G, G)."""
    kernels = [smoothing_matrix(ts, grid, cfg) for ts in row.times]
    smoothed = np.stack([k.sum(axis=0) for k in kernels])
    a = np.einsum('rs,pt->rpst', smoothed, smoothed)
    for r, k in enumerate(kernels):
        a[r, r] -= k.T @ k
    return a / n


class AccountStats:
    """Precomputed kernel statistics of n single-slot accounts at one
    bandwidth.  Posterior weighted sums over accounts of a_i and b_i are
    formed without building a G x G surface per account.
    """

    def __init__(self, matrix, grid, cfg):
        if matrix.m != 1:
            raise PreconditionError(f'account statistics need m=1, got m={matrix.m}')
        self.n, self.R = matrix.n, matrix.R
        self.grid, self.cfg = grid, cfg
        self.event_kernels = []
        self.owners = []
        smoothed = np.zeros((self.n, self.R, grid.size))
        for r in range(self.R):
            owners = np.concatenate([np.full(len(matrix.cell(i, 0).times[r]), i)
                                     for i in range(self.n)]).astype(int)
            times = np.concatenate([matrix.cell(i, 0).times[r] for i in range(self.n)])
            k = smoothing_matrix(times, grid, cfg)
            np.add.at(smoothed[:, r], owners, k)
            self.event_kernels.append(k)
            self.owners.append(owners)
        self.smoothed = smoothed

    @property
    def bandwidth(self):
        return self.cfg.bandwidth

    def points(self):
        """b_i^r for every account, shape (n, R, G)."""
        return self.smoothed / self.n

    def point(self, weights):
        """sum_i w_i b_i^r, shape (R, G)."""
        return np.einsum('i,irg->rg', weights, self.smoothed) / self.n

    def pair(self, weights):
        """sum_i w_i a_i^{r,r'}, shape (R, R, G, G)."""
        a = np.einsum('i,irs,ipt->rpst', weights, self.smoothed, self.smoothed)
        for r in range(self.R):
            k = self.event_kernels[r]
            a[r, r] -= (k * weights[self.owners[r], None]).T @ k
        return a / self.n


def four_estimators(matrix, grid, cfg):
    """Same-cell, same-account, same-slot and fully crossed pair estimators.

    Returns a dict with keys 'A', 'B', 'C', 'D', each of shape (R, R, G, G).
    """
    n, m, R = matrix.n, matrix.m, matrix.R
    if n < 2 or m < 2:
        raise PreconditionError(f'four estimators need n >= 2 and m >= 2, got n={n}, m={m}')
    s = np.zeros((n, m, R, grid.size))
    self_pairs = np.zeros((R, grid.size, grid.size))
    for i in range(n):
        for j in range(m):
            for r, ts in enumerate(matrix.cell(i, j).times):
                if len(ts):
                    k = smoothing_matrix(ts, grid, cfg)
                    s[i, j, r] = k.sum(axis=0)
                    self_pairs[r] += k.T @ k

    def outer(x, y):
        x = x.reshape(-1, R, grid.size)
        y = y.reshape(-1, R, grid.size)
        return np.einsum('irs,ipt->rpst', x, y)

    cells = outer(s, s)
    rows = s.sum(axis=1)
    cols = s.sum(axis=0)
    total = s.sum(axis=(0, 1))
    by_row = outer(rows, rows)
    by_col = outer(cols, cols)

    same = cells.copy()
    for r in range(R):
        same[r, r] -= self_pairs[r]
    return {
        'A': same / (n * m),
        'B': (by_row - cells) / (n * m * (m - 1)),
        'C': (by_col - cells) / (n * (n - 1) * m),
        'D': (outer(total, total) - by_row - by_col + cells) / (n * (n - 1) * m * (m - 1)),
    }


def write_grid(stream, values, grid, bandwidth, marks=(0, 0)):
    """Plain-text grid dump with a one line header."""
    values = np.atleast_2d(values)
    r, rp = marks
    stream.write(f'# G={grid.size} T={grid.T!r} r={r} r\'={rp} h={bandwidth!r}\n')
    for line in values:
        stream.write(' '.join(repr(float(v)) for v in line) + '\n')
