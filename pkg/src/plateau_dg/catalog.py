"""Elasticity tensors and initial guesses used in the experiments.

Tensor index convention for ``C_ijkl``: i, k are ambient components (0..2),
j, l are parametric derivative directions (0..1), and ``(C grad X)_ij =
C_ijkl dX_k/du_l``. A Kronecker delta between an ambient and a parametric
index is 1 iff the numbers coincide, so ``delta_ij`` is the 3x2 matrix with
ones at (0, 0) and (1, 1).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict

import numpy as np

from .boundary import perimeter
from .mesh import Mesh
from .spaces import P2_NODES, DofLayout
from .state import State

TENSORS = ("identity", "aniso_trace", "aniso_shear")
GUESSES = ("disc", "ellipse", "paraboloid", "pringle", "shoehorn")

_I32 = np.zeros((3, 2))
_I32[0, 0] = _I32[1, 1] = 1.0
# delta_ik delta_jl as a (3, 2, 3, 2) array
_EYE = np.einsum("ik,jl->ijkl", np.eye(3), np.eye(2))
# delta_ij delta_kl
_TRACE = np.einsum("ij,kl->ijkl", _I32, _I32)


class DegenerateGuessError(ValueError):
    """The guess has zero perimeter and cannot be rescaled."""


@dataclass(frozen=True)
class ElasticityField:
    kind: str

    def __post_init__(self):
        if self.kind not in TENSORS:
            raise ValueError(f"unknown tensor {self.kind!r}; choose from {', '.join(TENSORS)}")

    @property
    def is_constant(self) -> bool:
        return self.kind == "identity"

    def coefficients(self, points) -> np.ndarray:
        """Tensor at each point, shape (..., 3, 2, 3, 2)."""
        p = np.asarray(points, dtype=float)
        shape = p.shape[:-1]
        if self.kind == "identity":
            return np.broadcast_to(_EYE, shape + _EYE.shape).copy()
        u = p[..., 0][..., None, None, None, None]
        if self.kind == "aniso_trace":
            return np.abs(u) * _TRACE + 2.0 * _EYE
        return _TRACE + 2.0 * (1.0 + 10.0 * np.sin(u) ** 2) * _EYE

    def matrix(self, point) -> np.ndarray:
        """6x6 matrix of the operator on row-major flattened 3x2 matrices."""
        return self.coefficients(point).reshape(6, 6)


def apply_tensor(field: ElasticityField, point, G) -> np.ndarray:
    G = np.asarray(G, dtype=float)
    return np.einsum("ijkl,kl->ij", field.coefficients(point), G)


def _disc(r, t):
    return -r * np.sin(t), r * np.cos(t), 0.0 * r


def _ellipse(r, t):
    return r * np.sin(t), r * np.cos(t), r * np.sin(t)


def _paraboloid(r, t):
    return r * np.cos(t), r * np.sin(t), -(r**2)


def _pringle(r, t):
    return r * np.cos(t), -r * np.sin(t), r**2 * np.sin(t) ** 2


def _shoehorn(r, t):
    return r * np.cos(t), -r * np.sin(t), r * np.sin(t) + np.sin(0.5 * np.pi * r) * np.cos(2 * t)


_GUESS_FUNCS: Dict[str, Callable] = {
    "disc": _disc,
    "ellipse": _ellipse,
    "paraboloid": _paraboloid,
    "pringle": _pringle,
    "shoehorn": _shoehorn,
}


def guess_field(name: str, rho, theta) -> np.ndarray:
    """Evaluate a catalog guess in polar coordinates; output shape (..., 3)."""
    try:
        func = _GUESS_FUNCS[name]
    except KeyError:
        raise ValueError(f"unknown guess {name!r}; choose from {', '.join(GUESSES)}") from None
    rho = np.asarray(rho, dtype=float)
    theta = np.asarray(theta, dtype=float)
    return np.stack(np.broadcast_arrays(*func(rho, theta)), axis=-1)


def cell_node_coordinates(mesh: Mesh) -> np.ndarray:
    """Physical positions of the six P2 nodes of every cell, shape (n_cells, 6, 2)."""
    p = mesh.vertices[mesh.triangles]
    jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
    return p[:, None, 0, :] + np.einsum("cij,nj->cni", jac, P2_NODES)


def interpolate_function(mesh: Mesh, func) -> np.ndarray:
    """Nodal P2 interpolation of ``func(u, v) -> (..., 3)`` into the membrane space."""
    nodes = cell_node_coordinates(mesh)
    values = np.asarray(func(nodes[..., 0], nodes[..., 1]), dtype=float)
    return values.reshape(-1)


def interpolate_guess(mesh: Mesh, layout: DofLayout, name: str):
    def polar(u, v):
        return guess_field(name, np.hypot(u, v), np.mod(np.arctan2(v, u), 2 * np.pi))

    x = interpolate_function(mesh, polar)
    return State(x, np.zeros(layout.multiplier_total))


def rescale_to_perimeter(state, mesh: Mesh, layout: DofLayout, target: float = 2 * np.pi):
    """Scale the membrane coefficients so the boundary curve has length ``target``."""
    length = perimeter(state.x, mesh, layout)
    if not length > 0.0:
        raise DegenerateGuessError("initial guess has zero perimeter")
    return State(state.x * (target / length), state.l.copy())
