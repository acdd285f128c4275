from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .fpca import FpcaBasis, ScoreCovariance
from .grid import EvalGrid

SIMPLEX_TOL = 1e-9


def _array(values, shape=None):
    a = np.asarray(values, dtype=float)
    return a if shape is None else a.reshape(shape)


@dataclass
class MixtureParams:
    """Cluster weights (C,), mean curves (C, R, G) and cross covariance
    surfaces (C, R, R, G, G) with covariances[c, r, r'] = Gamma^{r,r'}_c.
    """
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    def __post_init__(self):
        C, R, G = self.means.shape
        if self.weights.shape != (C,) or self.covariances.shape != (C, R, R, G, G):
            raise DomainError('mixture parameter shapes disagree')
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1) > SIMPLEX_TOL:
            raise DomainError(f'cluster weights {self.weights} are not on the simplex')

    @property
    def C(self):
        return self.means.shape[0]

    @property
    def R(self):
        return self.means.shape[1]

    def diagonal(self):
        """Gamma^{r,r}_c(t, t), shape (C, R, G)."""
        idx = np.arange(self.R)
        return np.diagonal(self.covariances[:, idx, idx], axis1=-2, axis2=-1)

    def permute(self, order):
        order = list(order)
        return MixtureParams(self.weights[order], self.means[order], self.covariances[order])

    def __repr__(self):
        return f'<MixtureParams C={self.C} R={self.R} weights={np.round(self.weights, 3).tolist()}>'

    def format(self):
        return {
            'weights': self.weights.tolist(),
            'means': self.means.tolist(),
            'covariances': self.covariances.tolist(),
        }

    @classmethod
    def from_dict(cls, d, C, R, G):
        return cls(_array(d['weights'], (C,)),
                   _array(d['means'], (C, R, G)),
                   _array(d['covariances'], (C, R, R, G, G)))


@dataclass
class IntensityMoments:
    """First order curves (C, R, G) and second order surfaces (C, R, R, G, G)."""
    first: np.ndarray
    second: np.ndarray


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    loglik: float
    delta: float
    bandwidth: float

    def format(self):
        return {'iteration': self.iteration, 'loglik': self.loglik,
                'delta': self.delta, 'bandwidth': self.bandwidth}


@dataclass
class FittedModel:
    params: MixtureParams
    posterior: np.ndarray
    bandwidth: float
    bases: list
    sigmas: list
    trace: list
    loglik: float
    bic: float
    grid: EvalGrid
    seed: int
    # spawn key of the final E-step's path draws
    path_key: tuple
    samples: int
    energy: float
    slots: int = 1
    restart: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def C(self):
        return self.params.C

    @property
    def R(self):
        return self.params.R

    def __repr__(self):
        return (f'<FittedModel C={self.C} R={self.R} h={self.bandwidth:.4g} '
                f'loglik={self.loglik:.4f} bic={self.bic:.4f}>')

    def format(self):
        return {
            'header': {
                'C': self.C, 'R': self.R, 'G': self.grid.size, 'T': self.grid.T,
                'h': self.bandwidth, 'seed': self.seed, 'samples': self.samples,
                'energy': self.energy, 'slots': self.slots, 'restart': self.restart,
            },
            'params': self.params.format(),
            'bases': [[b.format() for b in row] for row in self.bases],
            'sigmas': [s.format() for s in self.sigmas],
            'posterior': self.posterior.tolist(),
            'trace': [t.format() for t in self.trace],
            'loglik': self.loglik,
            'bic': self.bic,
            'path_key': list(self.path_key),
            'meta': self.meta,
        }

    @classmethod
    def from_dict(cls, d):
        h = d['header']
        C, R, G = h['C'], h['R'], h['G']
        posterior = _array(d['posterior'])
        return cls(
            params=MixtureParams.from_dict(d['params'], C, R, G),
            posterior=posterior.reshape(-1, C),
            bandwidth=h['h'],
            bases=[[FpcaBasis.from_dict(b) for b in row] for row in d['bases']],
            sigmas=[ScoreCovariance.from_dict(s) for s in d['sigmas']],
            trace=[TraceRow(**t) for t in d['trace']],
            loglik=d['loglik'],
            bic=d['bic'],
            grid=EvalGrid(h['T'], G),
            seed=h['seed'],
            path_key=tuple(d['path_key']),
            samples=h['samples'],
            energy=h['energy'],
            slots=h['slots'],
            restart=h['restart'],
            meta=d.get('meta', {}),
        )


@dataclass
class NuisanceParams:
    """Day level and residual covariances, each (R, R, G, G)."""
    gamma_y: np.ndarray
    gamma_z: np.ndarray

    @classmethod
    def zeros(cls, R, G):
        return cls(np.zeros((R, R, G, G)), np.zeros((R, R, G, G)))

    def diagonal(self):
        """(Gamma_y^{r,r}(t,t), Gamma_z^{r,r}(t,t)), each (R, G)."""
        idx = np.arange(self.gamma_y.shape[0])
        return (np.diagonal(self.gamma_y[idx, idx], axis1=-2, axis2=-1),
                np.diagonal(self.gamma_z[idx, idx], axis1=-2, axis2=-1))

    def format(self):
        return {'gamma_y': self.gamma_y.tolist(), 'gamma_z': self.gamma_z.tolist()}

    @classmethod
    def from_dict(cls, d, R, G):
        return cls(_array(d['gamma_y'], (R, R, G, G)), _array(d['gamma_z'], (R, R, G, G)))


@dataclass
class MultilevelFit:
    """Single-level fit on pooled rows plus the back-adjusted means."""
    nuisance: NuisanceParams
    model: FittedModel
    means: np.ndarray
    m: int

    @property
    def covariances(self):
        return self.model.params.covariances

    @property
    def C(self):
        return self.model.C

    @property
    def R(self):
        return self.model.R

    def __repr__(self):
        return f'<MultilevelFit m={self.m} {self.model!r}>'

    def format(self):
        d = self.model.format()
        d['multilevel'] = {
            'm': self.m,
            'nuisance': self.nuisance.format(),
            'means': self.means.tolist(),
        }
        return d

    @classmethod
    def from_dict(cls, d):
        model = FittedModel.from_dict(d)
        ml = d['multilevel']
        G = model.grid.size
        return cls(NuisanceParams.from_dict(ml['nuisance'], model.R, G), model,
                   _array(ml['means'], (model.C, model.R, G)), ml['m'])
