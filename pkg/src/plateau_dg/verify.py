"""Constraint checks, finite-difference oracles and shape diagnostics."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .boundary import boundary_trace, perimeter, unit_speed_violation
from .catalog import ElasticityField
from .forms import _CellGeometry, augmented_energy, get_operators, residual
from .mesh import Mesh
from .spaces import DofLayout, p2_triangle_basis, segment_quadrature
from .state import State

logger = logging.getLogger(__name__)

# artifact defaults, not derived from any model property
PERIMETER_TOL = 1e-3
SPEED_TOL = 1e-2


@dataclass(frozen=True)
class ShapeReport:
    perimeter: float
    max_speed_violation: float
    circularity: float
    planarity: float
    plane_normal: np.ndarray
    plane_offset: float
    self_intersection_hint: bool

    @property
    def constraints_ok(self) -> bool:
        return abs(self.perimeter - 2 * np.pi) <= PERIMETER_TOL and self.max_speed_violation < SPEED_TOL

    def as_dict(self):
        return {
            "perimeter": self.perimeter,
            "max_speed_violation": self.max_speed_violation,
            "circularity": self.circularity,
            "planarity": self.planarity,
            "plane_normal_x": float(self.plane_normal[0]),
            "plane_normal_y": float(self.plane_normal[1]),
            "plane_normal_z": float(self.plane_normal[2]),
            "plane_offset": self.plane_offset,
            "self_intersection_hint": self.self_intersection_hint,
        }


def boundary_points(x, mesh: Mesh, layout: DofLayout) -> np.ndarray:
    """Trace values at each edge start and midpoint, in loop order, shape (2E, 3)."""
    coeffs = boundary_trace(getattr(x, "x", x), mesh, layout).coefficients
    return coeffs[:, [0, 2], :].reshape(-1, 3)


def best_fit_plane(points: np.ndarray):
    """Least-squares plane through ``points``: (centroid, unit normal, max distance).

    The normal is oriented along the vector area of the closed polyline so
    that a counterclockwise curve in the xy-plane gets +z.
    """
    c = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - c)
    normal = vt[2]
    area = 0.5 * np.sum(np.cross(points, np.roll(points, -1, axis=0)), axis=0)
    if normal @ area < 0.0:
        normal = -normal
    normal = normal / np.linalg.norm(normal)
    dist = float(np.max(np.abs((points - c) @ normal)))
    return c, normal, dist


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return d1 * d2 < 0.0 and d3 * d4 < 0.0


def polyline_self_intersects(points2d: np.ndarray) -> bool:
    """Proper crossing of any two non-adjacent segments of the closed polyline."""
    n = len(points2d)
    ends = np.roll(points2d, -1, axis=0)
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_cross(points2d[i], ends[i], points2d[j], ends[j]):
                return True
    return False


def constraint_report(state, problem, mesh: Mesh, layout: DofLayout) -> ShapeReport:
    x = getattr(state, "x", state)
    pts = boundary_points(x, mesh, layout)
    c, normal, planarity = best_fit_plane(pts)
    radii = np.linalg.norm(pts - c, axis=1)
    # in-plane basis for the crossing test
    e1 = np.linalg.svd(pts - c)[2][0]
    e2 = np.cross(normal, e1)
    flat = np.column_stack([(pts - c) @ e1, (pts - c) @ e2])
    return ShapeReport(
        perimeter=perimeter(x, mesh, layout),
        max_speed_violation=unit_speed_violation(x, mesh, layout)[0],
        circularity=float(np.std(radii)),
        planarity=planarity,
        plane_normal=normal,
        plane_offset=float(c @ normal),
        self_intersection_hint=polyline_self_intersects(flat),
    )


def fd_gradient_check(
    state: State,
    problem,
    mesh: Mesh,
    layout: DofLayout,
    h: float = 1e-6,
    n_coords: int = 100,
    seed: int = 0,
    abs_floor: float = 1e-8,
) -> float:
    """Largest error between residual entries and central differences of the energy.

    Coordinates are drawn at random from both blocks (at least a quarter from
    each when they are large enough). Entries whose gradient and difference
    quotient are both below ``abs_floor`` are compared absolutely, which
    guards the 0/0 case; the rest are compared relative to ``max(|g|, |fd|)``.
    """
    ops = get_operators(problem, mesh, layout)
    rng = np.random.default_rng(seed)
    z = state.vector
    n, total = layout.membrane_total, layout.total
    k = min(max(int(n_coords), 1), total)
    k_l = min(layout.multiplier_total, max(k // 4, 1))
    idx = np.concatenate(
        [
            rng.choice(n, size=min(k - k_l, n), replace=False),
            n + rng.choice(layout.multiplier_total, size=k_l, replace=False),
        ]
    )
    g = residual(state, problem, mesh, layout, ops=ops)

    def energy(vec):
        return augmented_energy(State.from_vector(vec, n), problem, mesh, layout, ops=ops).total

    worst = 0.0
    for i in idx:
        zp, zm = z.copy(), z.copy()
        zp[i] += h
        zm[i] -= h
        fd = (energy(zp) - energy(zm)) / (2 * h)
        scale = max(abs(g[i]), abs(fd))
        err = abs(g[i] - fd) if scale < abs_floor else abs(g[i] - fd) / scale
        worst = max(worst, err)
    return float(worst)


@dataclass(frozen=True)
class TractionProfile:
    theta: np.ndarray  # (n,)
    values: np.ndarray  # (n, 3)

    @property
    def samples(self):
        return list(zip(self.theta.tolist(), [tuple(v) for v in self.values]))


def traction_profile(state, problem, mesh: Mesh, layout: DofLayout, degree: int = 7) -> TractionProfile:
    """Cumulative integral of ``(C grad X) nu`` along the boundary in loop order.

    One sample per boundary vertex plus the closing point, starting at 0 on
    the first edge of the loop. The flux is taken from the owning cell.
    """
    x = np.asarray(getattr(state, "x", state), dtype=float).reshape(-1, 6, 3)
    field = ElasticityField(getattr(problem, "tensor", "identity"))
    geom = _CellGeometry(mesh)
    rule = segment_quadrature(degree)
    edges = mesh.boundary_edges
    cells = np.array([e.cell for e in edges])
    a = mesh.vertices[[e.endpoints[0] for e in edges]]
    b = mesh.vertices[[e.endpoints[1] for e in edges]]
    phys = a[:, None, :] + rule.points[None, :, None] * (b - a)[:, None, :]
    ref = geom.to_reference(cells, phys)
    _, dphi = p2_triangle_basis(ref)  # (E, Q, 6, 2)
    grad_ref = np.einsum("eqnr,enc->eqcr", dphi, x[cells])
    grad = np.einsum("eqcr,erl->eqcl", grad_ref, geom.inv[cells])
    C = field.coefficients(phys)
    flux = np.einsum("eqijkl,eqkl->eqij", C, grad)
    nu = np.array([e.outward_normal for e in edges])
    length = np.array([e.length for e in edges])
    per_edge = np.einsum("eqij,ej,q->ei", flux, nu, rule.weights) * length[:, None]
    values = np.vstack([np.zeros(3), np.cumsum(per_edge, axis=0)])
    theta = np.array([edges[0].theta_range[0]] + [e.theta_range[1] for e in edges])
    # unwrap so samples increase by the edge widths
    theta = theta[0] + np.concatenate([[0.0], np.cumsum([e.dtheta for e in edges])])
    return TractionProfile(theta, values)
