"""Clustering scores.  Labels are 1-based integer vectors."""
import logging
from dataclasses import dataclass

import numpy as np
from sklearn.metrics.cluster import contingency_matrix

from .errors import DomainError

logger = logging.getLogger(__name__)


def argmax_labels(posterior):
    """Row argmax, ties go to the lowest cluster index."""
    return np.argmax(np.asarray(posterior), axis=1) + 1


def purity(pred, truth):
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise DomainError(f'{len(pred)} predicted labels for {len(truth)} true labels')
    if pred.size == 0:
        raise DomainError('no labels to score')
    table = contingency_matrix(pred, truth)
    return float(table.max(axis=1).sum() / pred.size)


def align_labels(labels, reference):
    """Relabel `labels` to best match `reference` by greedy maximum overlap.

    Clusters of `labels` left without a partner keep fresh labels above
    every reference label.
    """
    labels, reference = np.asarray(labels), np.asarray(reference)
    ours, theirs = np.unique(labels), np.unique(reference)
    table = contingency_matrix(labels, reference).astype(float)
    mapping = {}
    while len(mapping) < min(len(ours), len(theirs)):
        a, b = np.unravel_index(np.argmax(table), table.shape)
        mapping[ours[a]] = theirs[b]
        table[a, :] = -1
        table[:, b] = -1
    spare = int(theirs.max())
    for label in ours:
        if label not in mapping:
            spare += 1
            mapping[label] = spare
    return np.array([mapping[x] for x in labels])


@dataclass
class TrialSet:
    """K label vectors over all n accounts; `test` marks the held-out ones."""
    labels: np.ndarray
    test: np.ndarray = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        if self.labels.ndim != 2 or self.labels.shape[0] < 2:
            raise DomainError('clustering consistency needs at least two trials')
        if self.test is not None:
            self.test = np.asarray(self.test, dtype=bool)
            if self.test.shape != self.labels.shape:
                raise DomainError('test masks do not match the label layout')
            if not self.test.any(axis=1).all() or self.test.all(axis=1).any():
                raise DomainError('every trial needs both fitted and held-out accounts')

    @property
    def K(self):
        return self.labels.shape[0]


def clustering_consistency(trials, align=True):
    """min over trials k of the fraction of same-cluster pairs (i, i') of
    trial k with c^k_i equal to c^{k'}_{i'}, averaged over the other trials.

    Pairs are ordered with i != i'.  With `align` every trial is first
    relabelled against trial 1.
    """
    labels = trials.labels
    if align:
        labels = np.stack([labels[0]] + [align_labels(l, labels[0]) for l in labels[1:]])
    K = trials.K
    scores = []
    for k in range(K):
        _, inverse, sizes = np.unique(labels[k], return_inverse=True, return_counts=True)
        # every i' pairs with the other members of its trial-k cluster
        partners = sizes[inverse] - 1
        pairs = partners.sum()
        if pairs == 0:
            raise DomainError(f'trial {k + 1} has no same-cluster pairs')
        agree = sum((partners * (labels[k] == labels[kp])).sum()
                    for kp in range(K) if kp != k)
        scores.append(agree / ((K - 1) * pairs))
    return float(min(scores))


def held_out_agreement(trials):
    """Share of (k, k', i) with i held out in trial k and fitted in trial k'
    whose two labels agree after relabelling against trial 1.
    """
    if trials.test is None:
        raise DomainError('trials carry no held-out masks')
    labels = trials.labels
    labels = np.stack([labels[0]] + [align_labels(l, labels[0]) for l in labels[1:]])
    agree = total = 0
    for k in range(trials.K):
        for kp in range(trials.K):
            if kp == k:
                continue
            both = trials.test[k] & ~trials.test[kp]
            agree += int((labels[k, both] == labels[kp, both]).sum())
            total += int(both.sum())
    if total == 0:
        raise DomainError('no account is held out in one trial and fitted in another')
    return agree / total


def metrics_report(metric, value, K=None, seeds=(), **extra):
    report = {'metric': metric, 'value': value, 'K': K, 'seeds': list(seeds)}
    report.update(extra)
    return report


def consistency_trials(matrix, C, K, config, train_fraction=0.8):
    """K random train/held-out splits; each trial fits on the training
    accounts and predicts the rest.

    Returns a TrialSet with labels for every account in every trial.
    """
    from .multilevel import fit_any, fitted_model, predict_membership

    if K < 2:
        raise DomainError(f'clustering consistency needs K >= 2 trials, got {K}')
    n_train = int(round(train_fraction * matrix.n))
    if not 0 < n_train < matrix.n:
        raise DomainError(f'cannot split {matrix.n} accounts {train_fraction:.0%} / rest')
    labels = np.zeros((K, matrix.n), dtype=int)
    test = np.zeros((K, matrix.n), dtype=bool)
    for k in range(K):
        rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(7, k)))
        order = rng.permutation(matrix.n)
        train, held_out = np.sort(order[:n_train]), np.sort(order[n_train:])
        trial_config = config.update(seed=config.seed + k)
        result = fit_any(matrix.subset(train), C, trial_config)
        labels[k, train] = argmax_labels(fitted_model(result).posterior)
        _, labels[k, held_out] = predict_membership(result, matrix.subset(held_out))
        test[k, held_out] = True
        logger.info('trial %d/%d done', k + 1, K)
    return TrialSet(labels, test)
