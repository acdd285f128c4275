"""The batch command line.  Every command is deterministic given --seed."""
import json
import logging
import os

import click
import numpy as np

from . import config
from .errors import NUMERICAL, USAGE, LgcpError
from .events import load_events
from .experiment import CLUSTERS, MARKS, SLOTS, experiment_report, run_experiment, write_table
from .metrics import (argmax_labels, clustering_consistency, consistency_trials,
                      held_out_agreement, metrics_report, purity)
from .multilevel import fit_any, fitted_model, predict_membership, sweep_clusters
from .simgen import read_labels, simulate_dataset, write_dataset
from .store import (export_curves, load_model, read_sweep_report, save_model,
                    write_cluster_histogram)

logger = logging.getLogger(__name__)


class ClusterRange(click.ParamType):
    """A cluster count `3` or an inclusive range `2..6`."""
    name = 'clusters'

    def convert(self, value, param, ctx):
        if isinstance(value, range):
            return value
        text = str(value).strip()
        try:
            if '..' in text:
                lo, hi = (int(x) for x in text.split('..'))
            else:
                lo = hi = int(text)
        except ValueError:
            self.fail(f'{value!r} is neither an integer nor a range like 2..6', param, ctx)
        if lo < 1 or hi < lo:
            self.fail(f'{value!r} is not a non-empty range of positive integers', param, ctx)
        return range(lo, hi + 1)


class FractionList(click.ParamType):
    name = 'fractions'

    def convert(self, value, param, ctx):
        if isinstance(value, tuple):
            return value
        try:
            return tuple(float(x) for x in str(value).split(','))
        except ValueError:
            self.fail(f'{value!r} is not a comma separated list of numbers', param, ctx)


class CountList(click.ParamType):
    name = 'counts'

    def convert(self, value, param, ctx):
        if isinstance(value, tuple):
            return value
        try:
            counts = tuple(int(x) for x in str(value).split(','))
        except ValueError:
            self.fail(f'{value!r} is not a comma separated list of integers', param, ctx)
        if min(counts) < 1:
            self.fail(f'{value!r} holds a count below 1', param, ctx)
        return counts


def fit_options(settings):
    """The options shared by every command that fits a model."""
    options = [
        click.option('--seed', type=int, required=True, help='master random seed'),
        click.option('--kernel', type=click.Choice(['epanechnikov', 'gaussian']),
                     default='epanechnikov', show_default=True),
        click.option('--bandwidths', type=FractionList(),
                     default=','.join(str(f) for f in config.BANDWIDTH_FRACTIONS),
                     show_default=True, help='candidate bandwidths as fractions of T/2'),
        click.option('--nuisance-fraction', type=float, default=None,
                     help='day/residual bandwidth as a fraction of T/2 [largest candidate]'),
        click.option('--grid-size', type=click.IntRange(min=3), default=config.GRID_SIZE,
                     show_default=True),
        click.option('--samples', type=click.IntRange(min=1), default=config.SAMPLES,
                     show_default=True, help='Monte Carlo paths per cluster'),
        click.option('--energy', type=click.FloatRange(0, 1, min_open=True), default=0.95,
                     show_default=True),
        click.option('--tol', type=float, default=1e-4, show_default=True),
        click.option('--max-iter', type=click.IntRange(min=1), default=200, show_default=True),
        click.option('--restarts', type=click.IntRange(min=1), default=3, show_default=True,
                     help='k-means starts, the best likelihood wins'),
        click.option('--workers', type=click.IntRange(min=1), default=settings['WORKERS'],
                     show_default=True),
    ]

    def decorator(f):
        for option in reversed(options):
            f = option(f)
        return f
    return decorator


def make_fit_config(seed, kernel, bandwidths, nuisance_fraction, grid_size, samples,
                    energy, tol, max_iter, restarts, workers):
    return config.FitConfig(
        seed=seed, kernel=kernel, bandwidth_fractions=tuple(bandwidths),
        nuisance_fraction=nuisance_fraction, grid_size=grid_size, samples=samples,
        energy=energy, tol=tol, max_iter=max_iter, restarts=restarts, workers=workers)


def read_matrix(path):
    with open(path, 'rb') as f:
        return load_events(f)


def emit_json(payload, path=None):
    text = json.dumps(payload, indent=2)
    if path:
        with open(path, 'w') as f:
            f.write(text + '\n')
    else:
        click.echo(text)


def register_commands(cli, settings):

    @cli.command()
    @click.option('--clusters', type=click.IntRange(min=1), required=True)
    @click.option('--n-per', type=click.IntRange(min=1), required=True,
                  help='accounts per cluster')
    @click.option('--days', type=click.IntRange(min=1), default=1, show_default=True)
    @click.option('--marks', type=click.IntRange(min=1), default=2, show_default=True)
    @click.option('--seed', type=int, required=True)
    @click.option('--grid-size', type=click.IntRange(min=3), default=config.GRID_SIZE,
                  show_default=True)
    @click.option('--workers', type=click.IntRange(min=1), default=settings['WORKERS'])
    @click.option('--out', 'out_dir', type=click.Path(file_okay=False), default='.',
                  show_default=True)
    def simulate(clusters, n_per, days, marks, seed, grid_size, workers, out_dir):
        """Write events.tsv, labels.tsv and truth.json of a synthetic dataset."""
        dataset = simulate_dataset(clusters, n_per, days, marks, seed, grid_size,
                                   workers=workers)
        os.makedirs(out_dir, exist_ok=True)
        paths = [os.path.join(out_dir, name)
                 for name in ('events.tsv', 'labels.tsv', 'truth.json')]
        write_dataset(dataset, *paths)
        click.echo('\n'.join(paths))

    @cli.command()
    @click.argument('events', type=click.Path(exists=True, dir_okay=False))
    @click.option('--clusters', type=ClusterRange(), required=True,
                  help='a cluster count or an inclusive range like 2..6')
    @click.option('--model', 'model_path', type=click.Path(dir_okay=False), required=True)
    @click.option('--report', 'report_path', type=click.Path(dir_okay=False))
    @fit_options(settings)
    def fit(events, clusters, model_path, report_path, **options):
        """Fit the mixture; a range of cluster counts is selected by BIC."""
        matrix = read_matrix(events)
        fit_config = make_fit_config(**options)
        best, fits = sweep_clusters(matrix, clusters, fit_config)
        model = fitted_model(best)
        save_model(best, model_path)
        emit_json({
            'selected': model.C,
            'multilevel': matrix.m > 1,
            'bic': {str(C): fitted_model(r).bic for C, r in fits.items()},
            'loglik': {str(C): fitted_model(r).loglik for C, r in fits.items()},
            'bandwidth': model.bandwidth,
            'iterations': len(model.trace) - 1,
            'seed': fit_config.seed,
        }, report_path)

    @cli.command()
    @click.argument('events', type=click.Path(exists=True, dir_okay=False))
    @click.option('--clusters', type=click.IntRange(min=1), required=True)
    @click.option('--labels', 'labels_path', type=click.Path(exists=True, dir_okay=False),
                  help='true labels (account<TAB>cluster); reports purity')
    @click.option('--trials', type=int, default=2, show_default=True,
                  help='K for the clustering consistency protocol')
    @click.option('--out', 'out_path', type=click.Path(dir_okay=False))
    @fit_options(settings)
    @click.pass_context
    def evaluate(ctx, events, clusters, labels_path, trials, out_path, **options):
        """Purity against true labels, else K-trial clustering consistency."""
        matrix = read_matrix(events)
        fit_config = make_fit_config(**options)
        if labels_path:
            truth = read_labels(labels_path)
            if len(truth) != matrix.n:
                raise click.BadParameter(f'{len(truth)} labels for {matrix.n} accounts',
                                         ctx=ctx, param_hint='--labels')
            pred = argmax_labels(fitted_model(fit_any(matrix, clusters, fit_config)).posterior)
            report = metrics_report('purity', purity(pred, truth), seeds=[fit_config.seed],
                                    clusters=clusters, n=matrix.n)
        else:
            if trials < 2:
                raise click.BadParameter('clustering consistency needs at least 2 trials',
                                         ctx=ctx, param_hint='--trials')
            trial_set = consistency_trials(matrix, clusters, trials, fit_config)
            report = metrics_report(
                'consistency', clustering_consistency(trial_set), K=trials,
                seeds=[fit_config.seed + k for k in range(trials)],
                clusters=clusters, n=matrix.n,
                held_out_agreement=held_out_agreement(trial_set))
        emit_json(report, out_path)

    @cli.command()
    @click.argument('events', type=click.Path(exists=True, dir_okay=False))
    @click.option('--model', 'model_path', type=click.Path(exists=True, dir_okay=False),
                  required=True)
    @click.option('--out', 'out_path', type=click.Path(dir_okay=False))
    def predict(events, model_path, out_path):
        """Cluster labels and posterior rows of new accounts."""
        result = load_model(model_path)
        posterior, labels = predict_membership(result, read_matrix(events))
        lines = [f'{i}\t{label}\t' + '\t'.join(repr(float(p)) for p in row)
                 for i, (label, row) in enumerate(zip(labels, posterior))]
        text = '\n'.join(lines) + '\n'
        if out_path:
            with open(out_path, 'w') as f:
                f.write(text)
        else:
            click.echo(text, nl=False)

    @cli.command('export-curves')
    @click.option('--model', 'model_path', type=click.Path(exists=True, dir_okay=False),
                  required=True)
    @click.option('--out', 'out_dir', type=click.Path(file_okay=False), required=True)
    @click.option('--sweep', 'sweeps', type=click.Path(exists=True, dir_okay=False),
                  multiple=True, help='fit reports to histogram the selected C of')
    def export(model_path, out_dir, sweeps):
        """Mean and variance curves as t,value CSV files."""
        written = export_curves(load_model(model_path), out_dir)
        if sweeps:
            path = os.path.join(out_dir, 'clusters_histogram.csv')
            write_cluster_histogram(path, [read_sweep_report(p) for p in sweeps])
            written.append(path)
        click.echo('\n'.join(written))

    @cli.command()
    @click.option('--clusters', type=ClusterRange(),
                  default=f'{CLUSTERS[0]}..{CLUSTERS[-1]}', show_default=True)
    @click.option('--days', type=CountList(), default=','.join(map(str, SLOTS)),
                  show_default=True, help='slot counts to simulate')
    @click.option('--marks', type=click.IntRange(min=1), default=MARKS, show_default=True)
    @click.option('--n-per', type=click.IntRange(min=1), default=500, show_default=True,
                  help='accounts per cluster')
    @click.option('--repetitions', type=click.IntRange(min=1), default=10, show_default=True)
    @click.option('--out', 'table_path', type=click.Path(dir_okay=False),
                  help='CSV of mean and sd purity per cell')
    @click.option('--report', 'report_path', type=click.Path(dir_okay=False))
    @fit_options(settings)
    def experiment(clusters, days, marks, n_per, repetitions, table_path, report_path,
                   **options):
        """Purity of repeated simulate-and-fit runs for every cluster and slot count."""
        fit_config = make_fit_config(**options)
        rows = run_experiment(clusters, days, marks, n_per, repetitions, fit_config)
        if table_path:
            write_table(table_path, rows)
        emit_json(experiment_report(rows, marks, n_per, repetitions, fit_config.seed),
                  report_path)


def register_error_handlers(cli):

    def error_handler(ctx, error):
        click.echo(json.dumps({
            'success': False,
            'code': error.error['code'],
            'description': error.error['description'],
            }), err=True)
        ctx.exit(error.exit_code)

    def io_error_handler(ctx, error):
        click.echo(json.dumps({
            'success': False,
            'code': 'io_error',
            'description': f'{error.filename}: {error.strerror}',
            }), err=True)
        ctx.exit(USAGE)

    def numerical_handler(ctx, error):
        logger.exception('numerical failure')
        click.echo(json.dumps({
            'success': False,
            'code': 'numerical_failure',
            'description': str(error),
            }), err=True)
        ctx.exit(NUMERICAL)

    cli.register_error_handler(LgcpError, error_handler)
    cli.register_error_handler(OSError, io_error_handler)
    cli.register_error_handler(np.linalg.LinAlgError, numerical_handler)
