"""Coefficient vectors of the discrete unknowns."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class State:
    """Membrane coefficients ``x`` (18 per cell) and multiplier coefficients ``l``."""

    x: np.ndarray
    l: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "l", np.asarray(self.l, dtype=float))

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.l])

    @classmethod
    def from_vector(cls, z, n_membrane: int) -> "State":
        z = np.asarray(z, dtype=float)
        return cls(z[:n_membrane].copy(), z[n_membrane:].copy())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.l)))

    def scaled(self, factor: float) -> "State":
        return State(self.x * factor, self.l.copy())
