"""Reference elements, quadrature rules and global DOF numbering.

Local node order on the reference triangle {x, y >= 0, x + y <= 1}:
vertices 0, 1, 2 at (0,0), (1,0), (0,1), then edge midpoints 3 = mid(0,1),
4 = mid(1,2), 5 = mid(2,0). Local edge k joins vertices k and k+1 and carries
midpoint node 3 + k.

Membrane DOFs are numbered node-block by node-block with the three ambient
components inside each block::

    global = 18 * cell + 3 * node + component

so ``x.reshape(n_cells, 6, 3)`` gives the nodal values cell by cell.

Segment nodes are ordered (t=0, t=1, t=1/2). Multiplier DOFs follow the
counterclockwise boundary loop: vertex k -> 2k, midpoint of edge k -> 2k + 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

import numpy as np
from scipy.special import roots_jacobi

from .mesh import Mesh

P2_NODES = np.array(
    [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]]
)
SEGMENT_NODES = np.array([0.0, 1.0, 0.5])
EDGE_NODES = np.array([[0, 1, 3], [1, 2, 4], [2, 0, 5]])


def p2_triangle_basis(points):
    """Quadratic Lagrange basis on the reference triangle.

    Accepts a single point ``(x, y)`` or an array of shape (..., 2). Returns
    ``values`` of shape (..., 6) and ``gradients`` of shape (..., 6, 2).
    Points outside the reference triangle are extrapolated.
    """
    p = np.asarray(points, dtype=float)
    x, y = p[..., 0], p[..., 1]
    l0 = 1.0 - x - y
    values = np.stack(
        [
            l0 * (2 * l0 - 1),
            x * (2 * x - 1),
            y * (2 * y - 1),
            4 * l0 * x,
            4 * x * y,
            4 * y * l0,
        ],
        axis=-1,
    )
    dx = np.stack(
        [1 - 4 * l0, 4 * x - 1, np.zeros_like(x), 4 * (l0 - x), 4 * y, -4 * y], axis=-1
    )
    dy = np.stack(
        [1 - 4 * l0, np.zeros_like(x), 4 * y - 1, -4 * x, 4 * x, 4 * (l0 - y)], axis=-1
    )
    return values, np.stack([dx, dy], axis=-1)


def p2_segment_basis(t):
    """Quadratic Lagrange basis on [0, 1] with nodes (0, 1, 1/2).

    Returns values, first and second derivatives, each of shape (..., 3).
    """
    t = np.asarray(t, dtype=float)
    values = np.stack([(1 - t) * (1 - 2 * t), t * (2 * t - 1), 4 * t * (1 - t)], axis=-1)
    d1 = np.stack([4 * t - 3, 4 * t - 1, 4 - 8 * t], axis=-1)
    d2 = np.stack([np.full_like(t, 4.0), np.full_like(t, 4.0), np.full_like(t, -8.0)], axis=-1)
    return values, d1, d2


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self):
        return len(self.weights)


def triangle_quadrature(degree: int) -> QuadratureRule:
    """Rule on the reference triangle exact for total degree <= ``degree``.

    Degrees 1 and 2 use the centroid and the three-point interior rule; higher
    degrees use a collapsed Gauss-Jacobi product rule (positive weights,
    interior points).
    """
    if int(degree) != degree or not 1 <= degree <= 8:
        raise ValueError(f"triangle quadrature degree must be in 1..8, got {degree}")
    if degree == 1:
        return QuadratureRule(np.array([[1 / 3, 1 / 3]]), np.array([0.5]), 1)
    if degree == 2:
        pts = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]])
        return QuadratureRule(pts, np.full(3, 1 / 6), 2)
    n = int(ceil((degree + 1) / 2))
    # (1 - s) Jacobian of the collapse x = s, y = t (1 - s)
    xs, ws = roots_jacobi(n, 1.0, 0.0)
    xt, wt = np.polynomial.legendre.leggauss(n)
    s, t = 0.5 * (xs + 1), 0.5 * (xt + 1)
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(ws / 4.0, wt / 2.0)
    pts = np.column_stack([S.ravel(), (T * (1 - S)).ravel()])
    return QuadratureRule(pts, W.ravel(), int(degree))


def segment_quadrature(degree: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1] exact for polynomials of degree <= ``degree``."""
    if int(degree) != degree or not 1 <= degree <= 10:
        raise ValueError(f"segment quadrature degree must be in 1..10, got {degree}")
    n = int(ceil((degree + 1) / 2))
    x, w = np.polynomial.legendre.leggauss(n)
    return QuadratureRule(0.5 * (x + 1), 0.5 * w, int(degree))


@dataclass(frozen=True)
class DofLayout:
    n_cells: int
    n_boundary_edges: int
    cell_to_global: np.ndarray
    boundary_to_global: np.ndarray
    # (n_boundary_edges, 3 segment nodes) -> local P2 node of the owning cell
    boundary_cell_nodes: np.ndarray
    boundary_cells: np.ndarray

    membrane_dofs_per_cell: int = 18

    @property
    def membrane_total(self) -> int:
        return 18 * self.n_cells

    @property
    def multiplier_total(self) -> int:
        return 2 * self.n_boundary_edges

    @property
    def total(self) -> int:
        return self.membrane_total + self.multiplier_total

    def membrane_slice(self) -> slice:
        return slice(0, self.membrane_total)

    def multiplier_slice(self) -> slice:
        return slice(self.membrane_total, self.total)

    def trace_dofs(self) -> np.ndarray:
        """Global membrane indices of each boundary trace, shape (n_edges, 3, 3)."""
        nodes = self.boundary_cell_nodes
        cells = self.boundary_cells[:, None]
        return 18 * cells[..., None] + 3 * nodes[..., None] + np.arange(3)


def build_dofmaps(mesh: Mesh) -> DofLayout:
    n_cells = mesh.n_cells
    cell_to_global = np.arange(18 * n_cells).reshape(n_cells, 18)
    nb = len(mesh.boundary_edges)
    k = np.arange(nb)
    boundary_to_global = np.column_stack([2 * k, 2 * ((k + 1) % nb), 2 * k + 1])
    cells = np.array([e.cell for e in mesh.boundary_edges], dtype=int)
    local_edges = np.array([e.local_edge for e in mesh.boundary_edges], dtype=int)
    return DofLayout(
        n_cells=n_cells,
        n_boundary_edges=nb,
        cell_to_global=cell_to_global,
        boundary_to_global=boundary_to_global,
        boundary_cell_nodes=EDGE_NODES[local_edges],
        boundary_cells=cells,
    )
