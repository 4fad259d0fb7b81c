"""Discrete augmented energy, its gradient (the residual) and Hessian (Jacobian).

The energy of a state (X, l) is

    int_bd |d2_theta X|^2 + mu/2 int_D C grad X : grad X + int_bd l (|d_theta X|^2 - 1)
    - mu sum_e int_e {C grad X} : [X] + sum_e alpha/(2 h_e) int_e |[X]|^2
    + eps/2 int_D |X|^2

with ``[X] = (X+ - X-) (x) n+`` and ``{F} = (F+ + F-)/2`` on interior edges.
Every term except the multiplier coupling is quadratic in X; those are
assembled once into sparse matrices (``Operators``) whose sum is the constant
part of the Jacobian. Energies of the jump and bending parts are evaluated
from pointwise operators instead of ``x^T A x / 2`` to avoid cancellation.
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .boundary import BOUNDARY_QUADRATURE_DEGREE, theta_ranges
from .catalog import ElasticityField
from .mesh import InteriorEdge, Mesh
from .spaces import (
    DofLayout,
    p2_segment_basis,
    p2_triangle_basis,
    segment_quadrature,
    triangle_quadrature,
)
from .state import State

logger = logging.getLogger(__name__)

__all__ = [
    "State",
    "EnergyBreakdown",
    "Operators",
    "assemble_operators",
    "augmented_energy",
    "residual",
    "jacobian",
    "apply_jump_average",
]


class NonFiniteStateError(ValueError):
    """State coefficients contain NaN or infinity."""


@dataclass(frozen=True)
class EnergyBreakdown:
    bending: float
    membrane: float
    constraint: float
    sipg_consistency: float
    sipg_penalty: float
    anchor: float
    total: float

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def apply_jump_average(edge: InteriorEdge, plus_trace, minus_trace, plus_flux, minus_flux):
    """Jump ``(X+ - X-) (x) n+`` and flux average ``(F+ + F-)/2`` at one point."""
    n = np.asarray(edge.normal, dtype=float)
    jump = np.outer(np.asarray(plus_trace, float) - np.asarray(minus_trace, float), n)
    average = 0.5 * (np.asarray(plus_flux, float) + np.asarray(minus_flux, float))
    return jump, average


def _map_chunks(func: Callable, n: int, threads: int):
    """Apply ``func(index_array)`` over ``range(n)`` in chunks; results keep input order."""
    if threads <= 1 or n < 2 * threads:
        return [func(np.arange(n))]
    chunks = np.array_split(np.arange(n), threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, chunks))


def _coo(rows, cols, vals, n):
    return sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)).tocsr()


class _CellGeometry:
    def __init__(self, mesh: Mesh):
        p = mesh.vertices[mesh.triangles]
        self.origin = p[:, 0]
        self.jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
        self.det = np.linalg.det(self.jac)
        self.inv = np.linalg.inv(self.jac)

    def to_reference(self, cells, points):
        """Reference coordinates of physical ``points`` (..., 2) inside ``cells``."""
        d = points - self.origin[cells][:, None, :]
        return np.einsum("cij,cqj->cqi", self.inv[cells], d)


@dataclass
class Operators:
    """Constant matrices and boundary data for one (mesh, layout, problem)."""

    membrane: sp.csr_matrix
    sipg_consistency: sp.csr_matrix
    sipg_penalty: sp.csr_matrix
    bending: sp.csr_matrix
    anchor: sp.csr_matrix
    jump_op: sp.csr_matrix  # x -> X+ - X- at edge quadrature points
    flux_op: sp.csr_matrix  # x -> {C grad X} n+ at the same points
    jump_weights: np.ndarray  # alpha * w_q per row
    edge_weights: np.ndarray  # h_e * w_q per row
    bend_op: sp.csr_matrix  # x -> d^2 X / dt^2 per boundary edge
    trace_dofs: np.ndarray  # (n_bdry, 9) global membrane indices, (node, comp) order
    multiplier_dofs: np.ndarray  # (n_bdry, 3)
    dtheta: np.ndarray
    weights: np.ndarray  # boundary quadrature weights on [0, 1]
    dn: np.ndarray  # (n_q, 3) segment basis t-derivatives at quadrature points
    m: np.ndarray  # (n_q, 3) segment basis values at quadrature points
    n_membrane: int
    n_multiplier: int

    @property
    def quadratic(self) -> sp.csr_matrix:
        if not hasattr(self, "_quadratic"):
            self._quadratic = (
                self.membrane + self.sipg_consistency + self.sipg_penalty + self.bending + self.anchor
            ).tocsr()
        return self._quadratic


def _membrane_blocks(geom, mesh, field, mu, eps, degree, cells):
    rule = triangle_quadrature(degree)
    phi, dphi = p2_triangle_basis(rule.points)
    grads = np.einsum("qaj,cjk->cqak", dphi, geom.inv[cells])
    wdet = rule.weights[None, :] * np.abs(geom.det[cells])[:, None]
    if field.is_constant:
        stiff = np.einsum("cq,cqaj,cqbj->cab", wdet, grads, grads)
        local = np.einsum("cab,ik->caibk", stiff, np.eye(3))
    else:
        xq = geom.origin[cells][:, None, :] + np.einsum("cij,qj->cqi", geom.jac[cells], rule.points)
        C = field.coefficients(xq)
        local = np.einsum("cq,cqaj,cqijkl,cqbl->caibk", wdet, grads, C, grads)
    mass = np.einsum("cq,qa,qb->cab", wdet, phi, phi)
    local_mass = np.einsum("cab,ik->caibk", mass, np.eye(3))
    n = len(cells)
    return mu * local.reshape(n, 18, 18), eps * local_mass.reshape(n, 18, 18)


def _edge_operators(geom, mesh, field, edges, edge_ids):
    """Rows (edge, quad point, component) of the jump ``X+ - X-`` and of the
    normal flux average ``{C grad X} n+``, as COO triplets."""
    rule = segment_quadrature(BOUNDARY_QUADRATURE_DEGREE)
    ends = np.array([edges[i].endpoints for i in edge_ids])
    cells = np.array([edges[i].cells for i in edge_ids])
    normals = np.array([edges[i].normal for i in edge_ids])
    pa, pb = mesh.vertices[ends[:, 0]], mesh.vertices[ends[:, 1]]
    xq = pa[:, None, :] + rule.points[None, :, None] * (pb - pa)[:, None, :]
    C = field.coefficients(xq)  # (E, Q, 3, 2, 3, 2)
    Cn = np.einsum("eqpjil,ej->eqpil", C, normals)
    n_e, n_q = xq.shape[:2]
    row = (np.arange(n_e)[:, None, None] * n_q + np.arange(n_q)[None, :, None]) * 3 + np.arange(3)

    j_rows, j_cols, j_vals, f_rows, f_cols, f_vals = [], [], [], [], [], []
    for side, sign in ((0, 1.0), (1, -1.0)):
        c = cells[:, side]
        phi, dphi = p2_triangle_basis(geom.to_reference(c, xq))
        grads = np.einsum("eqaj,ejk->eqak", dphi, geom.inv[c])
        col = 18 * c[:, None, None] + 3 * np.arange(6)[None, :, None] + np.arange(3)  # (E, a, i)
        # jump component p picks up phi_a from dof (a, p)
        j_rows.append(np.broadcast_to(row[:, :, None, :], (n_e, n_q, 6, 3)))
        j_cols.append(np.broadcast_to(col[:, None, :, :], (n_e, n_q, 6, 3)))
        j_vals.append(np.broadcast_to(sign * phi[..., None], (n_e, n_q, 6, 3)))
        # flux row p, dof (a, i): 1/2 sum_l (C n)_pil dphi_a/dx_l
        fv = 0.5 * np.einsum("eqpil,eqal->eqpai", Cn, grads)
        f_rows.append(np.broadcast_to(row[:, :, :, None, None], fv.shape))
        f_cols.append(np.broadcast_to(col[:, None, None, :, :], fv.shape))
        f_vals.append(fv)
    cat = lambda parts: np.concatenate([np.ravel(p) for p in parts])
    return (cat(j_rows), cat(j_cols), cat(j_vals)), (cat(f_rows), cat(f_cols), cat(f_vals))


def assemble_operators(problem, mesh: Mesh, layout: DofLayout, threads: int = 1) -> Operators:
    field = ElasticityField(problem.tensor)
    mu, alpha, eps = float(problem.mu), float(problem.alpha), float(problem.epsilon)
    geom = _CellGeometry(mesh)
    n = layout.membrane_total
    degree = 4 if field.is_constant else 6

    parts = _map_chunks(
        lambda cells: _membrane_blocks(geom, mesh, field, mu, eps, degree, cells), mesh.n_cells, threads
    )
    mem = np.concatenate([p[0] for p in parts])
    mass = np.concatenate([p[1] for p in parts])
    dofs = layout.cell_to_global
    rows = np.repeat(dofs[:, :, None], 18, axis=2)
    cols = np.repeat(dofs[:, None, :], 18, axis=1)
    membrane = _coo(rows, cols, mem, n)
    anchor = _coo(rows, cols, mass, n)

    edges = mesh.interior_edges
    rule = segment_quadrature(BOUNDARY_QUADRATURE_DEGREE)
    n_rows = len(edges) * len(rule) * 3
    jump_op = sp.csr_matrix((n_rows, n))
    flux_op = sp.csr_matrix((n_rows, n))
    if edges:
        parts = _map_chunks(lambda ids: (ids, _edge_operators(geom, mesh, field, edges, ids)), len(edges), threads)
        trip = {"j": ([], [], []), "f": ([], [], [])}
        for ids, (jt, ft) in parts:
            shift = ids[0] * len(rule) * 3
            for key, t in (("j", jt), ("f", ft)):
                trip[key][0].append(t[0] + shift)
                trip[key][1].append(t[1])
                trip[key][2].append(t[2])
        build = lambda t: sp.coo_matrix(
            (np.concatenate(t[2]), (np.concatenate(t[0]), np.concatenate(t[1]))), shape=(n_rows, n)
        ).tocsr()
        jump_op, flux_op = build(trip["j"]), build(trip["f"])
    h = np.array([e.length for e in edges], dtype=float)
    w_pen = alpha * np.repeat(np.tile(rule.weights, len(edges)), 3)
    w_edge = np.repeat((h[:, None] * rule.weights[None, :]).ravel(), 3)
    sipg_p = (jump_op.T @ sp.diags(w_pen) @ jump_op).tocsr()
    cross = jump_op.T @ sp.diags(w_edge) @ flux_op
    sipg_c = (-mu * (cross + cross.T)).tocsr()

    thetas = theta_ranges(mesh)
    dtheta = thetas[:, 1] - thetas[:, 0]
    tdofs = layout.trace_dofs().reshape(-1, 9)
    _, _, d2 = p2_segment_basis(0.0)
    # E_bend = sum_e |sum_s N_s'' X_s|^2 / dtheta^3 = x^T A x / 2
    bend_local = (2.0 / dtheta**3)[:, None, None] * np.kron(np.outer(d2, d2), np.eye(3))[None]
    # second t-derivative of each trace, rows (edge, component)
    bend_op = sp.coo_matrix(
        (
            np.broadcast_to(np.repeat(d2, 3)[None], tdofs.shape).ravel(),
            (np.repeat(np.arange(len(tdofs) * 3).reshape(-1, 1, 3), 3, axis=1).ravel(), tdofs.ravel()),
        ),
        shape=(len(tdofs) * 3, n),
    ).tocsr()
    rows = np.repeat(tdofs[:, :, None], 9, axis=2)
    cols = np.repeat(tdofs[:, None, :], 9, axis=1)
    bending = _coo(rows, cols, bend_local, n)

    m, dn, _ = p2_segment_basis(rule.points)
    return Operators(
        membrane=membrane,
        sipg_consistency=sipg_c,
        sipg_penalty=sipg_p,
        bending=bending,
        anchor=anchor,
        jump_op=jump_op,
        flux_op=flux_op,
        jump_weights=w_pen,
        edge_weights=w_edge,
        bend_op=bend_op,
        trace_dofs=tdofs,
        multiplier_dofs=layout.boundary_to_global,
        dtheta=dtheta,
        weights=rule.weights,
        dn=dn,
        m=m,
        n_membrane=n,
        n_multiplier=layout.multiplier_total,
    )


_CACHE: "OrderedDict[tuple, tuple]" = OrderedDict()
_CACHE_SIZE = 4


def get_operators(problem, mesh: Mesh, layout: DofLayout, threads: int = 1) -> Operators:
    """Cached :func:`assemble_operators` keyed on the objects and the problem parameters."""
    key = (id(mesh), id(layout), float(problem.mu), float(problem.alpha), float(problem.epsilon), problem.tensor)
    hit = _CACHE.get(key)
    if hit is not None and hit[0] is mesh and hit[1] is layout:
        _CACHE.move_to_end(key)
        return hit[2]
    ops = assemble_operators(problem, mesh, layout, threads=threads)
    _CACHE[key] = (mesh, layout, ops)
    while len(_CACHE) > _CACHE_SIZE:
        _CACHE.popitem(last=False)
    return ops


def _check(state: State, ops: Operators) -> None:
    if state.x.shape != (ops.n_membrane,) or state.l.shape != (ops.n_multiplier,):
        raise ValueError(
            f"state sizes ({state.x.size}, {state.l.size}) do not match layout "
            f"({ops.n_membrane}, {ops.n_multiplier})"
        )
    if not state.is_finite():
        raise NonFiniteStateError("state contains non-finite coefficients")


def _boundary_terms(state: State, ops: Operators):
    X = state.x[ops.trace_dofs].reshape(-1, 3, 3)
    a = np.einsum("qs,esc->eqc", ops.dn, X)  # dX/dt
    lq = state.l[ops.multiplier_dofs] @ ops.m.T  # (E, Q)
    s2 = np.einsum("eqc,eqc->eq", a, a) / ops.dtheta[:, None] ** 2
    return a, lq, s2


def _quad(A, x):
    return 0.5 * float(x @ (A @ x))


def augmented_energy(state: State, problem, mesh: Mesh, layout: DofLayout, ops: Optional[Operators] = None):
    ops = ops or get_operators(problem, mesh, layout)
    _check(state, ops)
    x = state.x
    _, lq, s2 = _boundary_terms(state, ops)
    constraint = float(np.sum(ops.weights * ops.dtheta[:, None] * lq * (s2 - 1.0)))
    # jump and bending parts from pointwise values: x^T A x cancels badly when
    # alpha or 1/dtheta^3 is large and the field is nearly continuous
    jump = ops.jump_op @ x
    d2 = (ops.bend_op @ x).reshape(-1, 3)
    parts = dict(
        bending=float(np.sum(np.sum(d2 * d2, axis=1) / ops.dtheta**3)),
        membrane=_quad(ops.membrane, x),
        constraint=constraint,
        sipg_consistency=-float(problem.mu) * float(np.sum(ops.edge_weights * jump * (ops.flux_op @ x))),
        sipg_penalty=0.5 * float(np.sum(ops.jump_weights * jump * jump)),
        anchor=_quad(ops.anchor, x),
    )
    return EnergyBreakdown(total=float(sum(parts.values())), **parts)


def residual(state: State, problem, mesh: Mesh, layout: DofLayout, ops: Optional[Operators] = None) -> np.ndarray:
    """Gradient of the augmented energy: membrane block then multiplier block."""
    ops = ops or get_operators(problem, mesh, layout)
    _check(state, ops)
    a, lq, s2 = _boundary_terms(state, ops)
    w = ops.weights[None, :]
    gx = np.einsum("eq,qs,eqc->esc", (2.0 / ops.dtheta[:, None]) * w * lq, ops.dn, a)
    gl = np.einsum("eq,qr->er", w * ops.dtheta[:, None] * (s2 - 1.0), ops.m)
    rx = ops.quadratic @ state.x + np.bincount(
        ops.trace_dofs.ravel(), gx.ravel(), minlength=ops.n_membrane
    )
    rl = np.bincount(ops.multiplier_dofs.ravel(), gl.ravel(), minlength=ops.n_multiplier)
    return np.concatenate([rx, rl])


def jacobian(state: State, problem, mesh: Mesh, layout: DofLayout, ops: Optional[Operators] = None) -> sp.csr_matrix:
    """Exact derivative of :func:`residual`; the multiplier-multiplier block is zero."""
    ops = ops or get_operators(problem, mesh, layout)
    _check(state, ops)
    a, lq, _ = _boundary_terms(state, ops)
    nx, nl = ops.n_membrane, ops.n_multiplier
    w = ops.weights[None, :]
    scale = (2.0 / ops.dtheta[:, None]) * w  # (E, Q)

    hxx = np.einsum("eq,qs,qt->est", scale * lq, ops.dn, ops.dn)
    hxx = np.einsum("est,cd->esctd", hxx, np.eye(3)).reshape(-1, 9, 9)
    rows = np.repeat(ops.trace_dofs[:, :, None], 9, axis=2)
    cols = np.repeat(ops.trace_dofs[:, None, :], 9, axis=1)
    H = sp.coo_matrix((hxx.ravel(), (rows.ravel(), cols.ravel())), shape=(nx, nx))

    b = np.einsum("eq,qr,qs,eqc->ersc", scale, ops.m, ops.dn, a).reshape(-1, 3, 9)
    brow = np.repeat(ops.multiplier_dofs[:, :, None], 9, axis=2)
    bcol = np.repeat(ops.trace_dofs[:, None, :], 3, axis=1)
    B = sp.coo_matrix((b.ravel(), (brow.ravel(), bcol.ravel())), shape=(nl, nx))

    return sp.bmat([[ops.quadratic + H, B.T], [B, None]], format="csr")
