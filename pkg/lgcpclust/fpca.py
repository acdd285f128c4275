"""Truncated Karhunen-Loeve expansions of grid covariance surfaces, the
cross-type score covariance of one cluster, and Gaussian path sampling.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DomainError

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-8
PSD_TOL = 1e-8


@dataclass(frozen=True)
class FpcaBasis:
    """Descending eigenvalues (p,) and eigenfunctions (p, G) of one type."""
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray

    @property
    def rank(self):
        return len(self.eigenvalues)

    def reconstruct(self):
        phi = self.eigenfunctions
        return (phi.T * self.eigenvalues) @ phi

    def format(self):
        return {'eigenvalues': self.eigenvalues.tolist(),
                'eigenfunctions': self.eigenfunctions.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d['eigenvalues'], dtype=float),
                   np.asarray(d['eigenfunctions'], dtype=float).reshape(len(d['eigenvalues']), -1))


@dataclass(frozen=True)
class ScoreCovariance:
    """Joint covariance of the stacked scores of all types."""
    matrix: np.ndarray
    ranks: tuple

    def block(self, r, rp):
        off = np.concatenate([[0], np.cumsum(self.ranks)])
        return self.matrix[off[r]:off[r + 1], off[rp]:off[rp + 1]]

    def format(self):
        return {'matrix': self.matrix.tolist(), 'ranks': list(self.ranks)}

    @classmethod
    def from_dict(cls, d):
        ranks = tuple(d['ranks'])
        size = sum(ranks)
        return cls(np.asarray(d['matrix'], dtype=float).reshape(size, size), ranks)


@dataclass(frozen=True)
class LatentPathSample:
    """Q sampled paths of all R types, shape (Q, R, G)."""
    paths: np.ndarray
    scores: np.ndarray

    def __len__(self):
        return len(self.paths)


def eigendecompose(gamma, grid):
    """Discretised Fredholm eigenproblem for the covariance kernel `gamma`."""
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (grid.size, grid.size):
        raise DomainError(f'surface of shape {gamma.shape} does not match grid {grid.size}')
    if np.max(np.abs(gamma - gamma.T), initial=0.0) > SYMMETRY_TOL:
        raise DomainError('covariance surface is not symmetric')
    root_w = np.sqrt(grid.weights)
    weighted = root_w[:, None] * gamma * root_w[None, :]
    values, vectors = linalg.eigh((weighted + weighted.T) / 2)
    order = np.argsort(values)[::-1]
    values = np.clip(values[order], 0.0, None)
    functions = (vectors[:, order] / root_w[:, None]).T
    return FpcaBasis(values, functions)


def truncate(basis, energy):
    """Keep the fewest leading components carrying `energy` of the total."""
    if not 0 < energy <= 1:
        raise DomainError(f'energy {energy} not in (0, 1]')
    total = basis.eigenvalues.sum()
    if total <= 0:
        return FpcaBasis(np.zeros(1), basis.eigenfunctions[:1])
    cumulative = np.cumsum(basis.eigenvalues)
    p = int(np.searchsorted(cumulative, energy * total * (1 - 1e-12))) + 1
    p = min(p, basis.rank)
    return FpcaBasis(basis.eigenvalues[:p], basis.eigenfunctions[:p])


def psd_project(matrix):
    sym = (matrix + matrix.T) / 2
    values, vectors = linalg.eigh(sym)
    fixed = (vectors * np.clip(values, 0.0, None)) @ vectors.T
    return (fixed + fixed.T) / 2


def assemble_score_cov(cross, bases, grid):
    """Score covariance from the per-type bases and cross surfaces.

    `cross` maps (r, r') with r != r' (0-based) to the surface
    Gamma^{r,r'}(s, t); a missing pair is taken from the transpose of
    (r', r), or as zero when both are missing.
    """
    R = len(bases)
    for b in bases:
        if b.eigenfunctions.shape[1] != grid.size:
            raise DomainError('bases do not share the grid')
    ranks = tuple(b.rank for b in bases)
    off = np.concatenate([[0], np.cumsum(ranks)])
    sigma = np.zeros((off[-1], off[-1]))
    for r in range(R):
        sigma[off[r]:off[r + 1], off[r]:off[r + 1]] = np.diag(bases[r].eigenvalues)
    for r in range(R):
        for rp in range(R):
            if r == rp:
                continue
            if (r, rp) in cross:
                surface = np.asarray(cross[r, rp])
            elif (rp, r) in cross:
                surface = np.asarray(cross[rp, r]).T
            else:
                continue
            if surface.shape != (grid.size, grid.size):
                raise DomainError(f'cross surface ({r}, {rp}) has shape {surface.shape}')
            left = bases[r].eigenfunctions * grid.weights
            right = bases[rp].eigenfunctions * grid.weights
            sigma[off[r]:off[r + 1], off[rp]:off[rp + 1]] = left @ surface @ right.T
    return ScoreCovariance(psd_project(sigma), ranks)


def symmetric_root(matrix):
    values, vectors = linalg.eigh((matrix + matrix.T) / 2)
    if values.size and values.min() < -PSD_TOL * max(1.0, abs(values.max())):
        raise DomainError(f'score covariance is not PSD (min eigenvalue {values.min():.3g})')
    return (vectors * np.sqrt(np.clip(values, 0.0, None))) @ vectors.T


def sample_paths(means, sigma, bases, Q, seed):
    """Draw Q paths mean + sum_k xi_k phi_k per type, xi ~ N(0, sigma).

    `seed` is anything `numpy.random.default_rng` accepts (an int, a
    SeedSequence or a Generator).
    """
    if Q < 1:
        raise DomainError('need at least one path')
    means = np.asarray(means, dtype=float)
    rng = np.random.default_rng(seed)
    root = symmetric_root(sigma.matrix)
    scores = rng.standard_normal((Q, root.shape[0])) @ root
    paths = np.repeat(means[None], Q, axis=0)
    off = np.concatenate([[0], np.cumsum(sigma.ranks)])
    for r, basis in enumerate(bases):
        paths[:, r] += scores[:, off[r]:off[r + 1]] @ basis.eigenfunctions
    return LatentPathSample(paths, scores)


def kl_expand(gammas, grid, energy):
    """Per-type truncated bases and the score covariance of one cluster.

    `gammas` has shape (R, R, G, G) with gammas[r, r'] = Gamma^{r,r'}.
    """
    gammas = np.asarray(gammas, dtype=float)
    R = gammas.shape[0]
    bases = []
    for r in range(R):
        diag = (gammas[r, r] + gammas[r, r].T) / 2
        bases.append(truncate(eigendecompose(diag, grid), energy))
    cross = {(r, rp): gammas[r, rp] for r in range(R) for rp in range(R) if r < rp}
    return bases, assemble_score_cov(cross, bases, grid)
