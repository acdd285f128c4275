from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class EvalGrid:
    T: float
    size: int = 51

    def __post_init__(self):
        if self.T <= 0:
            raise DomainError(f'window length T={self.T} must be positive')
        if self.size < 2:
            raise DomainError(f'grid size {self.size} < 2')

    @cached_property
    def points(self):
        return np.linspace(0.0, self.T, self.size)

    @property
    def spacing(self):
        return self.T / (self.size - 1)

    @cached_property
    def weights(self):
        """Trapezoid weights, they sum to T."""
        w = np.full(self.size, self.spacing)
        w[[0, -1]] *= 0.5
        return w

    def integrate(self, values, axis=-1):
        return np.tensordot(values, self.weights, axes=([axis], [0]))

    def locate(self, x):
        """Cell index k and fraction f with x = (1-f)*p[k] + f*p[k+1]."""
        x = np.asarray(x, dtype=float)
        k = np.clip(np.floor(x / self.spacing).astype(int), 0, self.size - 2)
        f = np.clip(x / self.spacing - k, 0.0, 1.0)
        return k, f

    def format(self):
        return {'T': self.T, 'size': self.size}
