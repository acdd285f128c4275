"""Model files and plot data.

A model file is one JSON document::

    {"format": "lgcpclust-model", "version": 1, "header": {...},
     "params": {...}, ..., "multilevel": {...}}

the "multilevel" key only being present for multi-level fits.  Floats are
written with full repr precision, so a loaded model equals the saved one
bit for bit.
"""
import json
import logging
import os
from collections import Counter

import numpy as np

from .errors import FormatError
from .es import intensity_moments
from .kernels import write_grid
from .models import FittedModel, MultilevelFit, NuisanceParams
from .multilevel import marginal_intensity

logger = logging.getLogger(__name__)

MODEL_FORMAT = 'lgcpclust-model'
MODEL_VERSION = 1


def model_document(result):
    return {'format': MODEL_FORMAT, 'version': MODEL_VERSION, **result.format()}


def dumps_model(result):
    return json.dumps(model_document(result))


def save_model(result, path):
    with open(path, 'w') as f:
        f.write(dumps_model(result))
    logger.info('saved %r to %s', result, path)


def loads_model(text):
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(e.pos, e.msg)
    if not isinstance(d, dict) or d.get('format') != MODEL_FORMAT:
        raise FormatError(0, 'not an lgcpclust model file')
    if d.get('version') != MODEL_VERSION:
        raise FormatError(0, f'unsupported model version {d.get("version")}')
    try:
        if 'multilevel' in d:
            return MultilevelFit.from_dict(d)
        return FittedModel.from_dict(d)
    except KeyError as e:
        raise FormatError(0, f'missing key {e.args[0]!r}')
    except (TypeError, ValueError) as e:
        raise FormatError(0, f'malformed model: {e}')


def load_model(path):
    with open(path) as f:
        return loads_model(f.read())


def mean_curves(result):
    """Account-level means, back-adjusted for multi-level fits."""
    if isinstance(result, MultilevelFit):
        return result.means
    return result.params.means


def variance_curves(result):
    model = result.model if isinstance(result, MultilevelFit) else result
    return model.params.diagonal()


def intensity_curves(result):
    """First order intensity of one slot per cluster, (C, R, G)."""
    if isinstance(result, MultilevelFit):
        # pooled rows carry m slots
        return intensity_moments(result.model.params).first / result.m
    return intensity_moments(result.params).first


def marginal_curves(result):
    """Cluster-averaged intensity of one slot, (R, G)."""
    if isinstance(result, MultilevelFit):
        return marginal_intensity(result.model.params.weights, result.means,
                                  result.covariances, result.nuisance)
    params = result.params
    return marginal_intensity(params.weights, params.means, params.covariances,
                              NuisanceParams.zeros(params.R, result.grid.size))


def write_curve(path, t, values):
    np.savetxt(path, np.column_stack([t, values]), fmt='%.17g',
               delimiter=',', header='t,value', comments='')


def export_curves(result, out_dir):
    """CSV curves per (cluster, mark): mean, variance and intensity; one
    marginal intensity CSV per mark; one covariance surface per
    (cluster, mark pair) as a plain-text grid.

    Returns the written paths.
    """
    model = result.model if isinstance(result, MultilevelFit) else result
    t = model.grid.points
    curves = (('mean', mean_curves(result)), ('var', variance_curves(result)),
              ('rho', intensity_curves(result)))
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for c in range(model.C):
        for r in range(model.R):
            for name, values in curves:
                path = os.path.join(out_dir, f'{name}_c{c + 1}_r{r + 1}.csv')
                write_curve(path, t, values[c, r])
                written.append(path)
    marginal = marginal_curves(result)
    for r in range(model.R):
        path = os.path.join(out_dir, f'rho_r{r + 1}.csv')
        write_curve(path, t, marginal[r])
        written.append(path)
    for c in range(model.C):
        for r in range(model.R):
            for rp in range(model.R):
                path = os.path.join(out_dir, f'cov_c{c + 1}_r{r + 1}_r{rp + 1}.txt')
                with open(path, 'w') as f:
                    write_grid(f, model.params.covariances[c, r, rp], model.grid,
                               model.bandwidth, marks=(r + 1, rp + 1))
                written.append(path)
    logger.info('wrote %d curve files to %s', len(written), out_dir)
    return written


def read_sweep_report(path):
    with open(path) as f:
        try:
            report = json.load(f)
        except json.JSONDecodeError as e:
            raise FormatError(e.pos, f'{path}: {e.msg}')
    if 'selected' not in report:
        raise FormatError(0, f'{path}: not a sweep report')
    return report


def write_cluster_histogram(path, reports):
    """Counts of the BIC-selected cluster number over several sweeps."""
    counts = Counter(int(r['selected']) for r in reports)
    with open(path, 'w') as f:
        f.write('clusters,count\n')
        for C in sorted(counts):
            f.write(f'{C},{counts[C]}\n')
    return counts
