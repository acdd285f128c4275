import numpy as np
import pytest

from lgcpclust.config import FitConfig
from lgcpclust.errors import DomainError, InsufficientDataError, PreconditionError
from lgcpclust.grid import EvalGrid
from lgcpclust.kernels import KernelConfig
from lgcpclust.metrics import align_labels, argmax_labels, purity
from lgcpclust.models import FittedModel, MultilevelFit, NuisanceParams
from lgcpclust.multilevel import (_log_ratio, back_adjust_means, estimate_nuisance,
                                  fit_any, fit_multilevel, fitted_model,
                                  forward_adjust_means,
                                  marginal_intensity, predict_membership,
                                  sweep_clusters)
from lgcpclust.simgen import nuisance_truth, simulate_dataset
from helpers import matrix_from_cells, poisson_matrix, small_config


def random_nuisance(R, G, seed):
    rng = np.random.default_rng(seed)
    return NuisanceParams(rng.normal(0, 0.1, (R, R, G, G)), rng.normal(0, 0.1, (R, R, G, G)))


def test_log_ratio():
    ones = np.ones((3, 3))
    assert not _log_ratio(ones, ones).any()
    assert np.allclose(_log_ratio(np.full(2, np.e), np.ones(2)), 1.0)
    assert _log_ratio(np.array([0.0]), np.array([1.0]))[0] == 0.0
    assert _log_ratio(np.array([1e12]), np.array([1.0]))[0] == pytest.approx(np.log(1e6))


def test_estimate_nuisance():
    grid = EvalGrid(2.0, 11)
    cfg = KernelConfig('epanechnikov', 0.8, 2.0)
    matrix = poisson_matrix(6, 4, 2, 4.0, seed=0)
    nuisance = estimate_nuisance(matrix, grid, cfg)
    assert nuisance.gamma_y.shape == (2, 2, 11, 11)
    assert np.allclose(nuisance.gamma_y, nuisance.gamma_y.transpose(1, 0, 3, 2))
    assert np.allclose(nuisance.gamma_z, nuisance.gamma_z.transpose(1, 0, 3, 2))

    # account order does not matter
    shuffled = matrix.subset([3, 1, 5, 0, 2, 4])
    again = estimate_nuisance(shuffled, grid, cfg)
    assert np.max(np.abs(again.gamma_y - nuisance.gamma_y)) < 1e-12

    # mark 2 never fires
    cells = [[[[0.5, 1.5], []] for _ in range(2)] for _ in range(2)]
    with pytest.raises(InsufficientDataError) as e:
        estimate_nuisance(matrix_from_cells(cells, R=2), grid, cfg)
    assert e.value.pair == (1, 2)


@pytest.mark.slow
def test_estimate_nuisance_without_random_effects():
    grid = EvalGrid(2.0, 21)
    cfg = KernelConfig('epanechnikov', 0.4, 2.0)
    ys, zs = [], []
    for seed in range(10):
        nuisance = estimate_nuisance(poisson_matrix(50, 20, 1, 5.0, seed), grid, cfg)
        ys.append(nuisance.gamma_y[0, 0])
        zs.append(nuisance.gamma_z[0, 0])
    interior = slice(5, 16)
    assert np.all(np.abs(np.mean(ys, axis=0)[interior, interior]) < 0.15)
    assert np.all(np.abs(np.mean(zs, axis=0)[interior, interior]) < 0.15)


def test_mean_adjustment():
    nuisance = random_nuisance(2, 7, seed=1)
    mu_tilde = np.random.default_rng(2).normal(0, 1, (3, 2, 7))
    mu = back_adjust_means(mu_tilde, nuisance, 20)
    assert np.max(np.abs(forward_adjust_means(mu, nuisance, 20) - mu_tilde)) < 1e-12

    zero = NuisanceParams(np.zeros((2, 2, 7, 7)), np.zeros((2, 2, 7, 7)))
    assert np.array_equal(back_adjust_means(mu_tilde, zero, 1), mu_tilde)
    assert np.allclose(back_adjust_means(mu_tilde, zero, 20), mu_tilde - np.log(20))


def test_marginal_intensity():
    G = 5
    zero = NuisanceParams(np.zeros((1, 1, G, G)), np.zeros((1, 1, G, G)))
    means = np.stack([np.zeros((1, G)), np.ones((1, G))])
    rho = marginal_intensity(np.array([0.5, 0.5]), means, np.zeros((2, 1, 1, G, G)), zero)
    assert np.allclose(rho, (1 + np.e) / 2)

    nuisance = NuisanceParams(np.full((1, 1, G, G), 0.2), np.full((1, 1, G, G), 0.4))
    rho = marginal_intensity(np.array([1.0]), means[:1], np.full((1, 1, 1, G, G), 0.4), nuisance)
    assert np.allclose(rho, np.exp(0.5))


def test_fit_multilevel_rejects_single_slot():
    with pytest.raises(PreconditionError):
        fit_multilevel(poisson_matrix(4, 1, 1, 2.0, seed=0), 1, small_config(seed=0))


@pytest.fixture(scope='module')
def multilevel_data():
    return simulate_dataset(2, 15, 4, 1, seed=3, grid_size=21)


@pytest.fixture(scope='module')
def multilevel_fit(multilevel_data):
    return fit_any(multilevel_data.matrix, 2, small_config(seed=1))


def test_fit_multilevel(multilevel_data, multilevel_fit):
    result = multilevel_fit
    assert isinstance(result, MultilevelFit)
    assert result.m == 4
    assert result.model.slots == 4
    assert result.covariances is result.model.params.covariances
    assert np.allclose(forward_adjust_means(result.means, result.nuisance, 4),
                       result.model.params.means, atol=1e-12)


def test_predict_membership(multilevel_data, multilevel_fit):
    matrix = multilevel_data.matrix
    posterior, labels = predict_membership(multilevel_fit, matrix)
    assert np.array_equal(posterior, multilevel_fit.model.posterior)
    assert np.array_equal(labels, argmax_labels(multilevel_fit.model.posterior))

    empty = matrix_from_cells([[[[]] for _ in range(4)]], R=1)
    posterior, labels = predict_membership(multilevel_fit, empty)
    assert posterior.sum() == pytest.approx(1.0)
    assert labels[0] in (1, 2)

    with pytest.raises(DomainError):
        predict_membership(multilevel_fit, poisson_matrix(2, 4, 2, 1.0, seed=0))


def test_fit_any_single_level():
    result = fit_any(poisson_matrix(10, 1, 1, 3.0, seed=4), 1, small_config(seed=0, max_iter=2))
    assert isinstance(result, FittedModel)
    assert result.slots == 1


def test_sweep_clusters():
    matrix = poisson_matrix(12, 1, 1, 3.0, seed=6)
    best, fits = sweep_clusters(matrix, range(1, 3), small_config(seed=0, max_iter=3))
    assert sorted(fits) == [1, 2]
    assert best.bic == min(f.bic for f in fits.values())



@pytest.fixture(scope='module')
def slot_purities():
    """Purity of one-slot and twenty-slot fits on matched seeds."""
    scores = {1: [], 20: []}
    for seed in range(10):
        for m in scores:
            data = simulate_dataset(2, 100, m, 2, seed)
            result = fit_any(data.matrix, 2, FitConfig(seed=seed))
            scores[m].append(purity(argmax_labels(fitted_model(result).posterior), data.labels))
    return {m: np.array(s) for m, s in scores.items()}


@pytest.mark.slow
def test_multilevel_fit_recovers_two_clusters(slot_purities):
    assert slot_purities[20].mean() >= 0.85


@pytest.mark.slow
def test_more_slots_separate_clusters_better(slot_purities):
    assert np.sum(slot_purities[20] > slot_purities[1]) >= 8


@pytest.mark.slow
def test_bic_selects_two_clusters():
    wins = 0
    for seed in range(10):
        data = simulate_dataset(2, 100, 1, 2, seed)
        best, _ = sweep_clusters(data.matrix, range(2, 5), FitConfig(seed=seed))
        wins += best.C == 2
    assert wins >= 7


@pytest.mark.slow
def test_estimate_nuisance_recovers_day_variance():
    grid = EvalGrid(2.0, 41)
    cfg = KernelConfig('epanechnikov', 0.1, 2.0)
    diagonals = []
    for seed in range(10):
        data = simulate_dataset(1, 20, 100, 1, seed, grid_size=41)
        diagonals.append(np.diag(estimate_nuisance(data.matrix, grid, cfg).gamma_y[0, 0]))
    truth, _ = nuisance_truth(grid)
    relative = np.abs(np.mean(diagonals, axis=0) - truth) / truth
    assert np.all(relative[4:37] < 0.3)


@pytest.mark.slow
def test_predict_membership_on_held_out_accounts():
    agreement = []
    for seed in range(10):
        data = simulate_dataset(2, 50, 20, 2, seed)
        order = np.random.default_rng(seed).permutation(data.matrix.n)
        train, held_out = np.sort(order[:80]), np.sort(order[80:])
        result = fit_any(data.matrix.subset(train), 2, FitConfig(seed=seed))
        _, labels = predict_membership(result, data.matrix.subset(held_out))
        truth = data.labels[held_out]
        agreement.append(np.mean(align_labels(labels, truth) == truth))
    assert np.mean(agreement) >= 0.8
