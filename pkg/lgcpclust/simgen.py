"""Synthetic labelled datasets from a mixture of multi-level log-Gaussian Cox
processes on [0, 2].

Account effects X come from cluster specific Gaussian processes whose mean
is a random Fourier series and whose covariances are random sine series.
Day effects Y use the basis {1, sin 2 pi t} with an AR(1)-style coupling of
consecutive days, residuals Z use four quarter-window indicators times
2 sin 4 pi t.  Events are drawn by cellwise thinning.
"""
import json
import logging
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from .errors import DomainError, SimulationError
from .events import MarkSplitSequence, SequenceMatrix, dump_events
from .fpca import kl_expand, sample_paths
from .grid import EvalGrid

logger = logging.getLogger(__name__)

WINDOW = 2.0
TERMS = 50
ZETA = np.array([(-1) ** (k + 1) * (k + 1.0) ** -2 for k in range(TERMS + 1)])
X_COV_MAX = 0.3
Y_VAR = 0.2
Z_VAR = 0.05
COUPLING = (0.8, 0.6)
MAX_INTENSITY = 1e12
# full rank is kept when simulating
ENERGY = 1.0
TIME_DIGITS = 9
MIN_TIME = 1e-9


@dataclass
class ClusterSpecX:
    """Uniform draws defining the account-level process of one cluster.

    cos_coef, sin_coef: (R, TERMS + 1) in U(-1, 1)
    cov_coef:           (R, TERMS) in U(0, 0.3), index k-1 for k = 1..TERMS
    cross_coef:         (R, R, TERMS, TERMS) in U(-1, 1), cross_coef[r', r] = cross_coef[r, r'].T
    """
    cos_coef: np.ndarray
    sin_coef: np.ndarray
    cov_coef: np.ndarray
    cross_coef: np.ndarray

    @property
    def R(self):
        return self.cos_coef.shape[0]

    @classmethod
    def zeros(cls, R):
        return cls(np.zeros((R, TERMS + 1)), np.zeros((R, TERMS + 1)),
                   np.zeros((R, TERMS)), np.zeros((R, R, TERMS, TERMS)))

    def mean(self, t):
        """mu^r(t), shape (R, len(t))."""
        k = np.arange(TERMS + 1)
        cos = np.cos(np.pi * np.outer(k, t))
        sin = np.sin(np.pi * np.outer(k, t))
        return 1 + (self.cos_coef * ZETA) @ cos + (self.sin_coef * ZETA) @ sin

    def _sines(self, t):
        """psi^r_k(t) = sin(k pi t + pi Z~^r_k), shape (R, TERMS, len(t))."""
        k = np.arange(1, TERMS + 1)
        return np.sin(np.pi * k[None, :, None] * t[None, None, :]
                      + np.pi * self.cov_coef[:, :, None])

    def covariance(self, t):
        """Gamma^{r,r'}(s, t) on t x t, shape (R, R, len(t), len(t))."""
        R = self.R
        psi = self._sines(t)
        scale = self.cov_coef * np.abs(ZETA[1:])
        gamma = np.zeros((R, R, len(t), len(t)))
        for r in range(R):
            gamma[r, r] = (psi[r].T * scale[r]) @ psi[r]
            for rp in range(R):
                if rp == r:
                    continue
                weights = self.cross_coef[r, rp] * np.sqrt(np.outer(scale[r], scale[rp]))
                gamma[r, rp] = psi[r].T @ weights @ psi[rp]
        return gamma


def gen_cluster_specs(C, R, seed):
    if C < 1 or R < 1:
        raise DomainError(f'need C, R >= 1, got {C}, {R}')
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    specs = []
    for _ in range(C):
        cos_coef = rng.uniform(-1, 1, (R, TERMS + 1))
        sin_coef = rng.uniform(-1, 1, (R, TERMS + 1))
        cov_coef = rng.uniform(0, X_COV_MAX, (R, TERMS))
        cross = np.zeros((R, R, TERMS, TERMS))
        for r in range(R):
            for rp in range(r + 1, R):
                cross[r, rp] = rng.uniform(-1, 1, (TERMS, TERMS))
                cross[rp, r] = cross[r, rp].T
        specs.append(ClusterSpecX(cos_coef, sin_coef, cov_coef, cross))
    return specs


def day_basis(t, T=WINDOW):
    return np.stack([np.ones_like(t), np.sin(2 * np.pi * t)])


def residual_basis(t, T=WINDOW):
    edges = np.linspace(0, T, 5)
    wave = 2 * np.sin(4 * np.pi * t)
    basis = [((t >= edges[0]) & (t <= edges[1])) * wave]
    basis += [((t > lo) & (t <= hi)) * wave for lo, hi in zip(edges[1:-1], edges[2:])]
    return np.stack(basis)


def gen_day_residual(n, m, R, grid, seed):
    """Day paths Y (m, R, G) and residual paths Z (n, m, R, G)."""
    if m < 1:
        raise DomainError(f'need m >= 1, got {m}')
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2,)))
    phi_y = day_basis(grid.points, grid.T)
    raw = rng.normal(0, np.sqrt(Y_VAR), (m, R, len(phi_y))) @ phi_y
    y = raw.copy()
    a, b = COUPLING
    y[1:] = a * raw[1:] + b * raw[:-1]
    phi_z = residual_basis(grid.points, grid.T)
    z_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(3,)))
    z = z_rng.normal(0, np.sqrt(Z_VAR), (n, m, R, len(phi_z))) @ phi_z
    return y, z


def nuisance_truth(grid):
    """Analytic Gamma_y(t, t) and Gamma_z(t, t) of the day/residual design."""
    y = Y_VAR * (day_basis(grid.points, grid.T) ** 2).sum(axis=0)
    z = Z_VAR * (residual_basis(grid.points, grid.T) ** 2).sum(axis=0)
    return y, z


def sample_lgcp(log_intensity, grid, rng):
    """Event times of a Poisson process with intensity exp(log_intensity),
    the log intensity linear between grid nodes.
    """
    rng = np.random.default_rng(rng)
    log_intensity = np.asarray(log_intensity, dtype=float)
    if not np.all(np.isfinite(log_intensity)):
        raise SimulationError('log intensity is not finite')
    if log_intensity.max() > np.log(MAX_INTENSITY):
        raise SimulationError(f'intensity {np.exp(log_intensity.max()):.3g} '
                              f'exceeds {MAX_INTENSITY:.0e}')
    lam = np.exp(log_intensity)
    # exp of a linear function is monotone on each cell
    envelope = np.maximum(lam[:-1], lam[1:])
    counts = rng.poisson(envelope * grid.spacing)
    cells = np.repeat(np.arange(grid.size - 1), counts)
    offsets = rng.uniform(0, 1, cells.size)
    times = grid.points[cells] + offsets * grid.spacing
    local = (1 - offsets) * log_intensity[cells] + offsets * log_intensity[cells + 1]
    keep = rng.uniform(0, 1, cells.size) * envelope[cells] < np.exp(local)
    return np.sort(times[keep])


def _clean_times(times, T):
    times = np.round(times, TIME_DIGITS)
    times[times <= 0] = MIN_TIME
    return np.minimum(times, T)


@dataclass
class LabeledDataset:
    matrix: SequenceMatrix
    labels: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    grid: EvalGrid

    def truth(self):
        y, z = nuisance_truth(self.grid)
        return {
            'grid': self.grid.format(),
            'labels': self.labels.tolist(),
            'means': self.means.tolist(),
            'covariances': self.covariances.tolist(),
            'gamma_y_diagonal': y.tolist(),
            'gamma_z_diagonal': z.tolist(),
        }


def _simulate_account(i, mean, expansion, y, z, m, R, grid, seed):
    bases, sigma = expansion
    x = sample_paths(mean, sigma, bases, 1,
                     np.random.SeedSequence(seed, spawn_key=(1, i))).paths[0]
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(4, i)))
    row = []
    for j in range(m):
        log_intensity = x + y[j] + z[i, j] if m > 1 else x
        row.append(MarkSplitSequence(
            [_clean_times(sample_lgcp(log_intensity[r], grid, rng), grid.T)
             for r in range(R)]))
    return row


def simulate_dataset(C, n_per_cluster, m, R, seed, grid_size=51, specs=None, workers=1):
    """Labelled data: n_per_cluster accounts per cluster, m slots, R marks.

    Every account draws from its own (seed, account) streams, so the
    result does not depend on `workers`.
    """
    if min(C, n_per_cluster, m, R) < 1:
        raise DomainError('C, n_per_cluster, m and R must be positive')
    grid = EvalGrid(WINDOW, grid_size)
    specs = gen_cluster_specs(C, R, seed) if specs is None else specs
    if len(specs) != C or any(s.R != R for s in specs):
        raise DomainError('cluster specs do not match C and R')
    means = np.stack([s.mean(grid.points) for s in specs])
    covariances = np.stack([s.covariance(grid.points) for s in specs])
    expansions = [kl_expand(covariances[c], grid, ENERGY) for c in range(C)]

    n = C * n_per_cluster
    labels = np.repeat(np.arange(1, C + 1), n_per_cluster)
    y, z = gen_day_residual(n, m, R, grid, seed) if m > 1 else (None, None)
    cells = Parallel(n_jobs=workers, prefer='threads')(
        delayed(_simulate_account)(i, means[labels[i] - 1],
                                   expansions[labels[i] - 1], y, z, m, R, grid, seed)
        for i in range(n))
    matrix = SequenceMatrix(n, m, R, grid.T, cells)
    logger.info('simulated %r with %d events', matrix, int(matrix.counts().sum()))
    return LabeledDataset(matrix, labels, means, covariances, grid)


def write_dataset(dataset, events_path, labels_path, truth_path):
    with open(events_path, 'wb') as f:
        dump_events(dataset.matrix, f)
    with open(labels_path, 'w') as f:
        for i, label in enumerate(dataset.labels):
            f.write(f'{i}\t{label}\n')
    with open(truth_path, 'w') as f:
        json.dump(dataset.truth(), f)


def read_labels(path):
    labels = {}
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                account, label = (int(x) for x in line.split('\t'))
            except ValueError:
                raise DomainError(f'{path}: malformed label line {lineno}')
            labels[account] = label
    return np.array([labels[i] for i in sorted(labels)])
