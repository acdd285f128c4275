"""Two step learning when every account is observed on m > 1 slots.

Step I estimates the day level (Y) and residual (Z) covariances from the
four pair estimators; they do not depend on the cluster structure, so the
step runs once.  Step II pools each account's slots and fits the
single-level mixture, whose intensity is m * exp(X~) with

    mu~ = mu + Gamma_y(t, t) / 2 + Gamma_z(t, t) / 2 + log m

The log m term comes from the m-fold superposition; leaving it out shifts
every recovered mean by log m.
"""
import logging

import numpy as np

from .errors import DomainError, InsufficientDataError, PreconditionError
from .es import fit, predict_posterior
from .events import aggregated_matrix
from .grid import EvalGrid
from .kernels import KernelConfig, four_estimators
from .metrics import argmax_labels
from .models import MultilevelFit, NuisanceParams

logger = logging.getLogger(__name__)

RATIO_MIN = 1e-6
RATIO_MAX = 1e6


def _log_ratio(num, den):
    """log(num / den) clamped to [log 1e-6, log 1e6]; 0 where either side vanishes."""
    valid = (num > 0) & (den > 0)
    ratio = np.ones_like(num)
    np.divide(num, den, out=ratio, where=valid)
    return np.log(np.clip(ratio, RATIO_MIN, RATIO_MAX))


def _symmetrize(gamma):
    return (gamma + gamma.transpose(1, 0, 3, 2)) / 2


def estimate_nuisance(matrix, grid, cfg):
    est = four_estimators(matrix, grid, cfg)
    R = matrix.R
    for r in range(R):
        for rp in range(R):
            for name in 'ABCD':
                if not np.any(est[name][r, rp]):
                    raise InsufficientDataError((r + 1, rp + 1),
                                                f'estimator {name} is identically zero')
    A, B, C, D = est['A'], est['B'], est['C'], est['D']
    gamma_y = _log_ratio(C, D)
    gamma_z = _log_ratio(A * D, B * C)
    return NuisanceParams(_symmetrize(gamma_y), _symmetrize(gamma_z))


def back_adjust_means(mu_tilde, nuisance, m):
    """mu = mu~ - Gamma_y(t,t)/2 - Gamma_z(t,t)/2 - log m, per cluster."""
    y, z = nuisance.diagonal()
    return mu_tilde - y / 2 - z / 2 - np.log(m)


def forward_adjust_means(mu, nuisance, m):
    y, z = nuisance.diagonal()
    return mu + y / 2 + z / 2 + np.log(m)


def marginal_intensity(weights, means, covariances, nuisance):
    """rho^r(t) = sum_c pi_c exp(mu + (Gamma_x + Gamma_y + Gamma_z)(t, t) / 2)."""
    idx = np.arange(means.shape[1])
    gx = np.diagonal(covariances[:, idx, idx], axis1=-2, axis2=-1)
    y, z = nuisance.diagonal()
    return np.einsum('c,crg->rg', weights, np.exp(means + (gx + y + z) / 2))


def fit_multilevel(matrix, C, config):
    if matrix.m < 2:
        raise PreconditionError(f'multi-level fitting needs m >= 2, got m={matrix.m}; '
                                'use the single-level fit')
    grid = EvalGrid(matrix.T, config.grid_size)
    cfg = KernelConfig(config.kernel, config.nuisance_bandwidth(matrix.T), matrix.T)
    nuisance = estimate_nuisance(matrix, grid, cfg)
    logger.info('estimated nuisance covariances at h=%.4g', cfg.bandwidth)
    model = fit(aggregated_matrix(matrix), C, config)
    model.slots = matrix.m
    means = back_adjust_means(model.params.means, nuisance, matrix.m)
    return MultilevelFit(nuisance, model, means, matrix.m)


def fit_any(matrix, C, config):
    """Single-level fit for m=1, two step multi-level fit otherwise."""
    if matrix.m == 1:
        return fit(matrix, C, config)
    return fit_multilevel(matrix, C, config)


def fitted_model(result):
    return result.model if isinstance(result, MultilevelFit) else result


def sweep_clusters(matrix, cluster_values, config):
    """Fit every C and pick the one of smallest BIC.

    Returns (best fit, {C: fit}).
    """
    fits = {}
    for C in cluster_values:
        fits[C] = fit_any(matrix, C, config)
        logger.info('C=%d: bic %.4f', C, fitted_model(fits[C]).bic)
    best = min(fits, key=lambda C: fitted_model(fits[C]).bic)
    return fits[best], fits


def predict_membership(result, matrix):
    """Posterior rows and hard labels (1-based) of new accounts."""
    model = fitted_model(result)
    if matrix.R != model.R:
        raise DomainError(f'new rows have {matrix.R} marks, the fit has {model.R}')
    # the pooled mean absorbed log m of the training slots
    slots = result.m if isinstance(result, MultilevelFit) else 1
    means = model.params.means + np.log(matrix.m / slots)
    posterior = predict_posterior(model, aggregated_matrix(matrix), means)
    return posterior, argmax_labels(posterior)
