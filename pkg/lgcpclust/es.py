"""Expectation-Solution fitting of a mixture of single-level log-Gaussian Cox
processes.

E-step: responsibilities from Monte Carlo likelihoods, the latent paths of
every cluster are drawn once per iteration and shared by all accounts, and
each path's Poisson likelihood is approximated by Berman-Turner quadrature
over the events plus the grid points.

S-step: closed form solution of the posterior-weighted estimating equations

    E[A_c](s, t) = pi_c rho_c^r(s) rho_c^r'(t) exp Gamma_c^{r,r'}(s, t)
    E[B_c](t)    = pi_c rho_c^r(t)
    pi_c         = sum_i E[w_ci] / n

with rho_c^r(t) = exp(mu_c^r(t) + Gamma_c^{r,r}(t, t) / 2).  Gamma is solved
first, then mu uses the new Gamma diagonal.
"""
import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from joblib import Parallel, delayed
from scipy.ndimage import distance_transform_edt
from scipy.special import logsumexp
from sklearn.cluster import KMeans

from .errors import (DegenerateClusterError, NumericalError,
                     PreconditionError, DomainError)
from .fpca import kl_expand, psd_project, sample_paths
from .grid import EvalGrid
from .kernels import AccountStats, KernelConfig
from .models import FittedModel, IntensityMoments, MixtureParams, TraceRow

logger = logging.getLogger(__name__)

FLOOR = 1e-12
GAMMA_CLAMP = 10.0
EXP_CLAMP = 30.0
MIN_RESPONSIBILITY = 1e-8
MERGE_TOL = 1e-12
TIE_TOL = 1e-9
DIAG_FLOOR = 1e-6
# iterations without a better likelihood before a restart gives up
PATIENCE = 5


def first_order_intensity(mu, gamma_diag):
    return np.exp(np.asarray(mu) + np.asarray(gamma_diag) / 2)


def second_order_intensity(rho_s, rho_t, gamma):
    return np.outer(rho_s, rho_t) * np.exp(gamma)


def intensity_moments(params):
    first = first_order_intensity(params.means, params.diagonal())
    second = (first[:, :, None, :, None] * first[:, None, :, None, :]
              * np.exp(params.covariances))
    return IntensityMoments(first, second)


@dataclass(frozen=True)
class QuadratureScheme:
    """Merged event and grid nodes of one (account, mark).

    `counts` is the event multiplicity of a node (0 for a pure grid point),
    `responses` is counts / weights.  `cell` and `frac` locate every node on
    the evaluation grid for linear interpolation of paths.
    """
    nodes: np.ndarray
    weights: np.ndarray
    counts: np.ndarray
    responses: np.ndarray
    cell: np.ndarray
    frac: np.ndarray


def build_quadrature(events, grid):
    events = np.sort(np.asarray(events, dtype=float))
    points = np.concatenate([grid.points, events])
    is_event = np.concatenate([np.zeros(grid.size), np.ones(len(events))])
    order = np.argsort(points, kind='stable')
    points, is_event = points[order], is_event[order]
    first = np.concatenate([[True], np.diff(points) > MERGE_TOL * grid.T])
    group = np.cumsum(first) - 1
    nodes = points[first]
    counts = np.bincount(group, weights=is_event, minlength=len(nodes))
    gaps = np.diff(nodes)
    weights = np.zeros(len(nodes))
    weights[:-1] += gaps / 2
    weights[1:] += gaps / 2
    cell, frac = grid.locate(nodes)
    return QuadratureScheme(nodes, weights, counts, counts / weights, cell, frac)


def account_schemes(matrix, grid):
    """Quadrature schemes of every account, using slot 0."""
    return [[build_quadrature(ts, grid) for ts in matrix.cell(i, 0).times]
            for i in range(matrix.n)]


def loglik_pp_hat(schemes, paths):
    """Quadrature log-likelihood of one account under each path.

    `paths` has shape (..., R, G); the result has shape (...).
    """
    paths = np.asarray(paths, dtype=float)
    total = np.zeros(paths.shape[:-2])
    for r, q in enumerate(schemes):
        x = (paths[..., r, q.cell] * (1 - q.frac)
             + paths[..., r, q.cell + 1] * q.frac)
        x = np.clip(x, -EXP_CLAMP, EXP_CLAMP)
        total += x @ q.counts - np.exp(x) @ q.weights
    return total


def mc_likelihood(schemes, sample):
    """log of the Monte Carlo average of exp(loglik_pp_hat) over the paths."""
    ll = loglik_pp_hat(schemes, sample.paths)
    return logsumexp(ll) - np.log(len(ll))


class ClusterDraw(NamedTuple):
    sample: object
    bases: list
    sigma: object


def path_seed(seed, key, c):
    return np.random.SeedSequence(seed, spawn_key=tuple(key) + (c,))


def draw_paths(params, grid, samples, energy, seed, key):
    draws = []
    for c in range(params.C):
        bases, sigma = kl_expand(params.covariances[c], grid, energy)
        sample = sample_paths(params.means[c], sigma, bases, samples,
                              path_seed(seed, key, c))
        draws.append(ClusterDraw(sample, bases, sigma))
    return draws


def redraw_paths(means, bases, sigmas, samples, seed, key):
    """Paths from stored bases, identical to the ones drawn during fitting."""
    return [ClusterDraw(sample_paths(means[c], sigmas[c], bases[c], samples,
                                     path_seed(seed, key, c)),
                        bases[c], sigmas[c])
            for c in range(len(means))]


def account_logliks(schemes, draws, workers=1):
    """log f(S_i | c) for every account and cluster, shape (n, C)."""
    def run(chunk):
        return np.array([[mc_likelihood(schemes[i], d.sample) for d in draws]
                         for i in chunk]).reshape(len(chunk), len(draws))

    n = len(schemes)
    if workers <= 1 or n < 2 * workers:
        return run(range(n))
    chunks = np.array_split(np.arange(n), workers)
    parts = Parallel(n_jobs=workers, prefer='threads')(delayed(run)(c) for c in chunks)
    return np.vstack(parts)


def responsibilities(log_f, weights):
    """Posterior rows and per-account observed log-likelihoods."""
    with np.errstate(divide='ignore'):
        joint = np.log(weights)[None, :] + log_f
    norm = logsumexp(joint, axis=1)
    bad = np.flatnonzero(~np.isfinite(norm))
    if bad.size:
        raise NumericalError(f'account {int(bad[0])} has zero likelihood under every cluster')
    posterior = np.exp(joint - norm[:, None])
    posterior /= posterior.sum(axis=1, keepdims=True)
    return posterior, norm


class EStepResult(NamedTuple):
    posterior: np.ndarray
    log_f: np.ndarray
    loglik: float
    draws: list


def e_step(schemes, params, grid, samples, energy, seed, key, workers=1):
    draws = draw_paths(params, grid, samples, energy, seed, key)
    log_f = account_logliks(schemes, draws, workers)
    posterior, row_ll = responsibilities(log_f, params.weights)
    return EStepResult(posterior, log_f, float(row_ll.sum()), draws)


def fill_nearest(values, valid):
    """Replace invalid entries by their nearest valid neighbour."""
    if valid.all():
        return values
    if not valid.any():
        return np.zeros_like(values)
    idx = distance_transform_edt(~valid, return_distances=False, return_indices=True)
    return values[tuple(idx)]


def repair_covariance(gamma, floor=DIAG_FLOOR):
    """Nearest PSD covariance of shape (R, R, G, G), read as one RG x RG
    matrix, with every variance at least `floor`.
    """
    R, _, G, _ = gamma.shape
    block = psd_project(gamma.transpose(0, 2, 1, 3).reshape(R * G, R * G))
    idx = np.arange(R * G)
    block[idx, idx] += np.clip(floor - block[idx, idx], 0.0, None)
    return block.reshape(R, G, R, G).transpose(0, 2, 1, 3)


def solve_estimating_equations(weight, EA, EB, floor=FLOOR, clamp=GAMMA_CLAMP, repair=False):
    """Closed form (mu, Gamma) of one cluster from E[A] (R, R, G, G) and E[B] (R, G).

    With `repair` Gamma is replaced by its nearest valid covariance before
    mu is solved, so the first order equation still holds exactly.
    """
    R = EB.shape[0]
    gamma = np.zeros_like(EA)
    for r in range(R):
        for rp in range(R):
            denom = np.outer(EB[r], EB[rp])
            valid = (EA[r, rp] > floor) & (denom > floor * floor)
            valid &= (EB[r] > floor)[:, None] & (EB[rp] > floor)[None, :]
            with np.errstate(divide='ignore', invalid='ignore'):
                raw = np.log(weight * EA[r, rp] / denom)
            gamma[r, rp] = fill_nearest(np.where(valid, raw, 0.0), valid)
    gamma = (gamma + gamma.transpose(1, 0, 3, 2)) / 2
    gamma = np.clip(gamma, -clamp, clamp)
    if repair:
        gamma = repair_covariance(gamma)
    mu = np.zeros_like(EB)
    for r in range(R):
        valid = EB[r] > floor
        with np.errstate(divide='ignore'):
            raw = np.log(EB[r] / weight) - np.diag(gamma[r, r]) / 2
        mu[r] = fill_nearest(np.where(valid, raw, 0.0), valid)
    return mu, gamma


def s_step(posterior, stats, floor=FLOOR, repair=True):
    n, C = posterior.shape
    totals = posterior.sum(axis=0)
    for c in np.flatnonzero(totals < MIN_RESPONSIBILITY):
        raise DegenerateClusterError(int(c) + 1, f'total responsibility {totals[c]:.3g}')
    weights = totals / n
    weights = weights / weights.sum()
    G = stats.grid.size
    means = np.zeros((C, stats.R, G))
    covariances = np.zeros((C, stats.R, stats.R, G, G))
    for c in range(C):
        w = posterior[:, c]
        means[c], covariances[c] = solve_estimating_equations(
            weights[c], stats.pair(w), stats.point(w), floor, repair=repair)
    return MixtureParams(weights, means, covariances)


def select_bandwidth(bandwidths, logliks):
    """The bandwidth of maximum likelihood, ties go to the larger one."""
    logliks = np.asarray(logliks, dtype=float)
    best = logliks.max()
    tied = logliks >= best - TIE_TOL * max(1.0, abs(best))
    return max(h for h, t in zip(bandwidths, tied) if t)


def effective_parameters(C, ranks):
    """(C-1) weights, one dof per retained component of each mean curve and
    the free entries of every cluster's score covariance.
    """
    k = C - 1
    for cluster_ranks in ranks:
        p = sum(cluster_ranks)
        k += p + p * (p + 1) // 2
    return k


def bic(model, matrix):
    ranks = [[b.rank for b in row] for row in model.bases]
    k = effective_parameters(model.C, ranks)
    return -2 * model.loglik + k * np.log(matrix.n)


def initial_labels(stats, C, random_state, n_init=10):
    """k-means on the concatenated smoothed curves of every account."""
    if stats.n < C:
        raise PreconditionError(f'{stats.n} accounts cannot form {C} clusters')
    if C == 1:
        return np.zeros(stats.n, dtype=int)
    features = stats.points().reshape(stats.n, -1) * stats.n
    km = KMeans(n_clusters=C, n_init=n_init, random_state=random_state)
    return km.fit_predict(features)


def one_hot(labels, C):
    posterior = np.zeros((len(labels), C))
    posterior[np.arange(len(labels)), labels] = 1.0
    return posterior


class Iterate(NamedTuple):
    iteration: int
    params: MixtureParams
    result: EStepResult
    bandwidth: float


class SingleLevelFitter:
    """Holds the precomputed statistics of one dataset for repeated fits."""

    def __init__(self, matrix, config):
        if matrix.m != 1:
            raise PreconditionError(f'single-level fitting needs m=1, got m={matrix.m}')
        self.matrix, self.config = matrix, config
        self.grid = EvalGrid(matrix.T, config.grid_size)
        self.candidates = [AccountStats(matrix, self.grid,
                                        KernelConfig(config.kernel, h, matrix.T))
                           for h in config.bandwidths(matrix.T)]
        self.schemes = account_schemes(matrix, self.grid)

    def e_step(self, params, key):
        cfg = self.config
        return e_step(self.schemes, params, self.grid, cfg.samples, cfg.energy,
                      cfg.seed, key, cfg.workers)

    def fit(self, C):
        if C < 1:
            raise DomainError(f'cluster count {C} < 1')
        best, failure = None, None
        for restart in range(self.config.restarts):
            try:
                model = self.fit_once(C, restart)
            except DegenerateClusterError as e:
                logger.warning('restart %d failed: %s', restart, e.error['description'])
                failure = e
                continue
            if best is None or model.loglik > best.loglik:
                best = model
        if best is None:
            raise failure
        return best

    def fit_once(self, C, restart):
        """One ES run from a k-means start.

        Every iteration of a restart reuses the same random numbers for its
        path draws, so likelihoods of successive iterates are comparable.
        The run returns its best iterate. It stops at convergence or after
        PATIENCE iterations without improvement, and a cluster emptying out
        ends it early.
        """
        cfg = self.config
        start = self.candidates[(len(self.candidates) // 2 + restart) % len(self.candidates)]
        random_state = int(np.random.SeedSequence(cfg.seed, spawn_key=(restart,))
                           .generate_state(1)[0])
        labels = initial_labels(start, C, random_state, cfg.kmeans_init)
        params = s_step(one_hot(labels, C), start)
        key = (restart,)
        current = self.e_step(params, key)
        best = Iterate(0, params, current, start.bandwidth)
        trace = [TraceRow(0, current.loglik, 1.0, start.bandwidth)]
        logger.info('restart %d: initial loglik %.4f', restart, current.loglik)

        stale = 0
        for it in range(1, cfg.max_iter + 1):
            try:
                proposals = [s_step(current.posterior, stats) for stats in self.candidates]
            except DegenerateClusterError as e:
                logger.warning('restart %d iteration %d: %s, keeping iteration %d',
                               restart, it, e.error['description'], best.iteration)
                break
            results = [self.e_step(p, key) for p in proposals]
            bandwidth = select_bandwidth([s.bandwidth for s in self.candidates],
                                         [res.loglik for res in results])
            chosen = [s.bandwidth for s in self.candidates].index(bandwidth)
            delta = float(np.max(np.abs(results[chosen].posterior - current.posterior)))
            params, current = proposals[chosen], results[chosen]
            trace.append(TraceRow(it, current.loglik, delta, bandwidth))
            logger.info('restart %d iteration %d: loglik %.4f delta %.2e h %.4g',
                        restart, it, current.loglik, delta, bandwidth)
            if current.loglik > best.result.loglik:
                best, stale = Iterate(it, params, current, bandwidth), 0
            else:
                stale += 1
            if delta < cfg.tol or stale >= PATIENCE:
                break

        result = best.result
        model = FittedModel(
            params=best.params,
            posterior=result.posterior,
            bandwidth=best.bandwidth,
            bases=[d.bases for d in result.draws],
            sigmas=[d.sigma for d in result.draws],
            trace=trace,
            loglik=result.loglik,
            bic=0.0,
            grid=self.grid,
            seed=cfg.seed,
            path_key=key,
            samples=cfg.samples,
            energy=cfg.energy,
            restart=restart,
            meta={'kernel': cfg.kernel, 'iteration': best.iteration},
        )
        model.bic = float(bic(model, self.matrix))
        return model


def fit(matrix, C, config):
    """Fit a C-cluster single-level mixture to an m=1 matrix."""
    return SingleLevelFitter(matrix, config).fit(C)


def predict_posterior(model, matrix, means=None):
    """Responsibilities of the accounts of an m=1 matrix under a frozen model.

    The final E-step's path draws are regenerated from the stored bases, so
    training accounts get back exactly their stored posterior rows.
    """
    if matrix.R != model.R:
        raise DomainError(f'matrix has {matrix.R} marks, model has {model.R}')
    if matrix.T != model.grid.T:
        raise DomainError(f'matrix window T={matrix.T}, model window T={model.grid.T}')
    means = model.params.means if means is None else means
    draws = redraw_paths(means, model.bases, model.sigmas, model.samples,
                         model.seed, model.path_key)
    log_f = account_logliks(account_schemes(matrix, model.grid), draws)
    posterior, _ = responsibilities(log_f, model.params.weights)
    return posterior
