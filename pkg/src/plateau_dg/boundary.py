"""Derivatives in the angle variable along the boundary trace.

Each boundary edge is pulled back to [0, 1] by the affine map
``theta(t) = theta_1 + t * dtheta`` using the exact endpoint angles, so
``d/dtheta = (1/dtheta) d/dt`` edge by edge. No continuity is imposed across
boundary vertices: a kink of the trace there carries no bending energy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .mesh import Mesh, MeshGeometryError
from .spaces import DofLayout, p2_segment_basis, segment_quadrature

# boundary integrands are at most degree 6 in t
BOUNDARY_QUADRATURE_DEGREE = 7


@dataclass(frozen=True)
class BoundaryTrace:
    """Trace coefficients of a membrane field, one 3x3 block per boundary edge.

    ``coefficients[e, s, c]`` is component ``c`` at segment node ``s``
    (t = 0, 1, 1/2) of edge ``e``.
    """

    coefficients: np.ndarray
    theta_ranges: np.ndarray

    @property
    def dtheta(self) -> np.ndarray:
        return self.theta_ranges[:, 1] - self.theta_ranges[:, 0]

    def __len__(self):
        return len(self.coefficients)


def theta_ranges(mesh: Mesh) -> np.ndarray:
    return np.array([e.theta_range for e in mesh.boundary_edges], dtype=float)


def boundary_trace(x: np.ndarray, mesh: Mesh, layout: DofLayout) -> BoundaryTrace:
    x = np.asarray(x)
    coeffs = x[layout.trace_dofs()]
    return BoundaryTrace(coeffs, theta_ranges(mesh))


def tangential_derivatives(block, dtheta: float, t) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Value, first and second angle derivatives of one edge trace at ``t``.

    ``block`` has shape (3 segment nodes, 3 components). For an array ``t``
    the outputs have shape (len(t), 3).
    """
    if not dtheta > 0.0:
        raise MeshGeometryError(f"boundary edge has non-positive angular width {dtheta}")
    block = np.asarray(block, dtype=float)
    n, dn, ddn = p2_segment_basis(t)
    return n @ block, (dn @ block) / dtheta, (ddn @ block) / dtheta**2


def speed_at_quadrature(trace: BoundaryTrace, degree: int = BOUNDARY_QUADRATURE_DEGREE):
    """``|d_theta X|`` at each boundary quadrature point, shape (n_edges, n_q)."""
    rule = segment_quadrature(degree)
    _, dn, _ = p2_segment_basis(rule.points)
    d = np.einsum("qs,esc->eqc", dn, trace.coefficients) / trace.dtheta[:, None, None]
    return np.linalg.norm(d, axis=-1), rule


def perimeter(x, mesh: Mesh, layout: DofLayout) -> float:
    """Length of the boundary curve, ``int |d_theta X| dtheta`` by quadrature."""
    trace = boundary_trace(_membrane(x), mesh, layout)
    speed, rule = speed_at_quadrature(trace)
    return float(np.sum(speed * rule.weights * trace.dtheta[:, None]))


def unit_speed_violation(x, mesh: Mesh, layout: DofLayout) -> Tuple[float, float]:
    """``max | |d_theta X| - 1 |`` over quadrature points, and the L2 norm of
    ``|d_theta X|^2 - 1`` over the boundary."""
    trace = boundary_trace(_membrane(x), mesh, layout)
    speed, rule = speed_at_quadrature(trace)
    max_violation = float(np.max(np.abs(speed - 1.0)))
    l2 = np.sqrt(np.sum((speed**2 - 1.0) ** 2 * rule.weights * trace.dtheta[:, None]))
    return max_violation, float(l2)


def _membrane(x):
    # accept a State or a bare membrane vector
    return getattr(x, "x", x)
