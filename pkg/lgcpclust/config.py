from os import environ
from dataclasses import dataclass, replace
from dotenv import load_dotenv, find_dotenv, dotenv_values

from .errors import DomainError

ENV_FILE = find_dotenv(usecwd=True)
if ENV_FILE:
    load_dotenv(ENV_FILE)

LOG_LEVEL = environ.get('LGCP_LOG_LEVEL', 'INFO')
WORKERS = int(environ.get('LGCP_WORKERS', 1))
GRID_SIZE = int(environ.get('LGCP_GRID_SIZE', 51))
SAMPLES = int(environ.get('LGCP_SAMPLES', 500))

# fractions of T/2
BANDWIDTH_FRACTIONS = (0.05, 0.1, 0.2, 0.4)


@dataclass(frozen=True)
class FitConfig:
    seed: int
    kernel: str = 'epanechnikov'
    bandwidth_fractions: tuple = BANDWIDTH_FRACTIONS
    # None means the largest bandwidth candidate
    nuisance_fraction: float = None
    grid_size: int = GRID_SIZE
    samples: int = SAMPLES
    energy: float = 0.95
    tol: float = 1e-4
    max_iter: int = 200
    restarts: int = 3
    workers: int = WORKERS
    kmeans_init: int = 10

    def __post_init__(self):
        if self.seed is None:
            raise DomainError('a seed is required')
        if not self.bandwidth_fractions:
            raise DomainError('at least one bandwidth candidate is required')
        if any(not 0 < f < 1 for f in self.bandwidth_fractions):
            raise DomainError('bandwidth fractions must lie in (0, 1)')
        if self.grid_size < 3:
            raise DomainError(f'grid size {self.grid_size} < 3')
        if self.samples < 1:
            raise DomainError('need at least one Monte Carlo sample')
        if not 0 < self.energy <= 1:
            raise DomainError(f'energy {self.energy} not in (0, 1]')
        if self.tol <= 0 or self.max_iter < 1 or self.restarts < 1:
            raise DomainError('tol, max_iter and restarts must be positive')
        if self.workers < 1:
            raise DomainError('workers must be positive')

    def bandwidths(self, T):
        return tuple(sorted(f * T / 2 for f in self.bandwidth_fractions))

    def nuisance_bandwidth(self, T):
        if self.nuisance_fraction is None:
            return max(self.bandwidths(T))
        return self.nuisance_fraction * T / 2

    def update(self, **kwargs):
        return replace(self, **kwargs)


def read_config_file(path):
    """Flat key=value file, keys normalised to python identifiers."""
    values = dotenv_values(path)
    return {k.strip().lower().replace('-', '_'): v
            for k, v in values.items() if v is not None}
