"""Repeated simulate, fit and score runs over a grid of cluster counts and
slot counts.  Repetition j of every cell uses seed + j for both the data and
the fit, so cells of one sweep are compared on matched seeds.
"""
import logging
from typing import NamedTuple

import numpy as np

from .errors import DomainError
from .metrics import argmax_labels, purity
from .multilevel import fit_any, fitted_model
from .simgen import simulate_dataset

logger = logging.getLogger(__name__)

CLUSTERS = (2, 3, 4, 5)
SLOTS = (1, 20, 100)
MARKS = 5
TABLE_HEADER = 'clusters,slots,purity_mean,purity_sd'


class ExperimentRow(NamedTuple):
    clusters: int
    slots: int
    mean: float
    sd: float
    purities: tuple

    def format(self):
        return {'clusters': self.clusters, 'slots': self.slots, 'mean': self.mean,
                'sd': self.sd, 'purities': list(self.purities)}


def run_cell(C, m, R, n_per_cluster, repetitions, config):
    scores = []
    for j in range(repetitions):
        seed = config.seed + j
        data = simulate_dataset(C, n_per_cluster, m, R, seed, config.grid_size,
                                workers=config.workers)
        result = fit_any(data.matrix, C, config.update(seed=seed))
        scores.append(purity(argmax_labels(fitted_model(result).posterior), data.labels))
        logger.info('C=%d m=%d repetition %d/%d: purity %.4f',
                    C, m, j + 1, repetitions, scores[-1])
    scores = np.array(scores)
    sd = float(scores.std(ddof=1)) if repetitions > 1 else 0.0
    return ExperimentRow(C, m, float(scores.mean()), sd, tuple(scores.tolist()))


def run_experiment(clusters, slots, R, n_per_cluster, repetitions, config):
    """One row per (C, m), clusters outermost."""
    if repetitions < 1:
        raise DomainError(f'need at least one repetition, got {repetitions}')
    if not clusters or not slots:
        raise DomainError('empty experiment grid')
    return [run_cell(C, m, R, n_per_cluster, repetitions, config)
            for C in clusters for m in slots]


def experiment_report(rows, R, n_per_cluster, repetitions, seed):
    return {
        'marks': R,
        'n_per_cluster': n_per_cluster,
        'repetitions': repetitions,
        'seeds': [seed + j for j in range(repetitions)],
        'rows': [row.format() for row in rows],
    }


def write_table(path, rows):
    table = np.array([[r.clusters, r.slots, r.mean, r.sd] for r in rows], dtype=float)
    np.savetxt(path, table.reshape(-1, 4), fmt=['%d', '%d', '%.17g', '%.17g'],
               delimiter=',', header=TABLE_HEADER, comments='')
