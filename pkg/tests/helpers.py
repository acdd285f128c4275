"""Reference implementations and small data builders shared by the tests."""
import numpy as np

from lgcpclust.config import FitConfig
from lgcpclust.events import MarkSplitSequence, SequenceMatrix
from lgcpclust.kernels import edge_correction, kernel_weight


def matrix_from_cells(cells, R, T=2.0):
    """`cells[i][j]` is a list of per-mark time lists."""
    return SequenceMatrix(len(cells), len(cells[0]), R, T,
                          [[MarkSplitSequence(c) for c in row] for row in cells])


def poisson_matrix(n, m, R, rate, seed, T=2.0):
    """Homogeneous Poisson events at `rate` in every cell and mark."""
    rng = np.random.default_rng(seed)
    cells = [[[np.round(rng.uniform(1e-6, T, rng.poisson(rate * T)), 9) for _ in range(R)]
              for _ in range(m)] for _ in range(n)]
    return matrix_from_cells(cells, R, T)


def two_rate_matrix(n_per, seed, low=2.0, high=2.0 * np.e ** 2):
    """n_per flat-rate accounts at `low`, then n_per at `high`, with labels."""
    rng = np.random.default_rng(seed)
    cells = []
    for rate in [low] * n_per + [high] * n_per:
        times = np.round(rng.uniform(1e-6, 2.0, rng.poisson(rate * 2.0)), 9)
        cells.append([[times]])
    return matrix_from_cells(cells, R=1), np.repeat([1, 2], n_per)


def small_config(seed, **kwargs):
    options = dict(seed=seed, grid_size=21, samples=40, max_iter=15, tol=1e-3,
                   bandwidth_fractions=(0.2, 0.4), restarts=1, workers=1)
    options.update(kwargs)
    return FitConfig(**options)


def smoothed(u, t, cfg):
    return kernel_weight(t - u, cfg) / edge_correction(t, cfg)


def brute_pair_stat(row, n, grid, cfg):
    R, G = row.R, grid.size
    a = np.zeros((R, R, G, G))
    for r in range(R):
        for rp in range(R):
            for x, u in enumerate(row.times[r]):
                for y, v in enumerate(row.times[rp]):
                    if r == rp and x == y:
                        continue
                    a[r, rp] += np.outer(smoothed(u, grid.points, cfg),
                                         smoothed(v, grid.points, cfg))
    return a / n


def brute_four_estimators(matrix, grid, cfg):
    """Literal sums over all event pairs (i, j, u), (i', j', v)."""
    n, m, R, G = matrix.n, matrix.m, matrix.R, grid.size
    out = {name: np.zeros((R, R, G, G)) for name in 'ABCD'}
    events = [(i, j, r, x, u)
              for i in range(n) for j in range(m) for r in range(R)
              for x, u in enumerate(matrix.cell(i, j).times[r])]
    for i, j, r, x, u in events:
        for ip, jp, rp, y, v in events:
            if (i, j, r, x) == (ip, jp, rp, y):
                continue
            term = np.outer(smoothed(u, grid.points, cfg), smoothed(v, grid.points, cfg))
            if i == ip and j == jp:
                out['A'][r, rp] += term
            elif i == ip:
                out['B'][r, rp] += term
            elif j == jp:
                out['C'][r, rp] += term
            else:
                out['D'][r, rp] += term
    out['A'] /= n * m
    out['B'] /= n * m * (m - 1)
    out['C'] /= n * (n - 1) * m
    out['D'] /= n * (n - 1) * m * (m - 1)
    return out


def brute_consistency(labels):
    labels = np.asarray(labels)
    K, n = labels.shape
    scores = []
    for k in range(K):
        pairs = [(i, ip) for i in range(n) for ip in range(n)
                 if i != ip and labels[k, i] == labels[k, ip]]
        agree = sum(labels[k, i] == labels[kp, ip]
                    for kp in range(K) if kp != k for i, ip in pairs)
        scores.append(agree / ((K - 1) * len(pairs)))
    return min(scores)
