"""Triangulations of the unit disc.

A :class:`Mesh` carries the vertex/triangle arrays plus the two edge families
needed downstream: interior edges (shared by two cells, used by the interior
penalty terms) and boundary edges ordered counterclockwise around the circle
(used by the boundary calculus in the angle variable).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np
from scipy.spatial import Delaunay

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi

# Boundary vertices within this distance of the unit circle are projected onto it.
PROJECTION_TOL = 1e-6
ON_CIRCLE_TOL = 1e-8


class MeshError(Exception):
    """Base class for invalid meshes."""


class MshParseError(MeshError):
    """Malformed MSH document."""


class MeshTopologyError(MeshError):
    """Non-manifold edges, holes, or several boundary loops."""


class MeshGeometryError(MeshError):
    """Degenerate cells or boundary vertices off the unit circle."""


@dataclass(frozen=True)
class InteriorEdge:
    cells: Tuple[int, int]
    endpoints: Tuple[int, int]
    normal: np.ndarray
    length: float

    def flipped(self) -> "InteriorEdge":
        """Same edge seen from the other cell: cells swapped, normal negated."""
        return InteriorEdge(
            cells=(self.cells[1], self.cells[0]),
            endpoints=self.endpoints,
            normal=-self.normal,
            length=self.length,
        )


@dataclass(frozen=True)
class BoundaryEdge:
    cell: int
    endpoints: Tuple[int, int]
    theta_range: Tuple[float, float]
    outward_normal: np.ndarray
    length: float
    # local edge number inside ``cell``: edge k joins local vertices k and k+1
    local_edge: int = 0

    @property
    def dtheta(self) -> float:
        return self.theta_range[1] - self.theta_range[0]


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    interior_edges: List[InteriorEdge] = field(repr=False)
    boundary_edges: List[BoundaryEdge] = field(repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.interior_edges) + len(self.boundary_edges)

    @cached_property
    def cell_areas(self) -> np.ndarray:
        return signed_areas(self.vertices, self.triangles)

    @property
    def area(self) -> float:
        return float(self.cell_areas.sum())

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        """Boundary vertex indices in loop order (start vertex of each edge)."""
        return np.array([e.endpoints[0] for e in self.boundary_edges], dtype=int)

    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_cells


def signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p0 = vertices[triangles[:, 0]]
    e1 = vertices[triangles[:, 1]] - p0
    e2 = vertices[triangles[:, 2]] - p0
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _edge_incidence(triangles: np.ndarray):
    """Map sorted vertex pair -> list of (cell, local edge)."""
    incidence: dict = {}
    for c, tri in enumerate(triangles):
        for k in range(3):
            a, b = int(tri[k]), int(tri[(k + 1) % 3])
            key = (a, b) if a < b else (b, a)
            incidence.setdefault(key, []).append((c, k))
    return incidence


def build_mesh(vertices: np.ndarray, triangles: np.ndarray) -> Mesh:
    """Assemble a :class:`Mesh` from raw arrays and check every invariant.

    Triangles are reoriented counterclockwise. Boundary vertices closer than
    ``PROJECTION_TOL`` to the unit circle are radially projected onto it;
    farther ones are rejected.
    """
    vertices = np.array(vertices, dtype=float)[:, :2].copy()
    triangles = np.array(triangles, dtype=int).reshape(-1, 3).copy()
    if len(triangles) == 0:
        raise MeshTopologyError("mesh has no triangles")

    areas = signed_areas(vertices, triangles)
    if np.any(np.abs(areas) <= 1e-14):
        bad = int(np.argmin(np.abs(areas)))
        raise MeshGeometryError(f"triangle {bad} has zero area")
    flip = areas < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]

    incidence = _edge_incidence(triangles)
    interior_raw = []
    boundary_raw = []
    for key in sorted(incidence):
        owners = incidence[key]
        if len(owners) > 2:
            raise MeshTopologyError(f"edge {key} is shared by {len(owners)} triangles")
        if len(owners) == 2:
            (cp, _), (cm, _) = sorted(owners)
            interior_raw.append((key, cp, cm))
        else:
            c, k = owners[0]
            a, b = int(triangles[c, k]), int(triangles[c, (k + 1) % 3])
            boundary_raw.append((c, k, a, b))

    _check_single_loop(boundary_raw)
    bverts = sorted({v for _, _, a, b in boundary_raw for v in (a, b)})
    radii = np.linalg.norm(vertices[bverts], axis=1)
    off = np.abs(radii - 1.0)
    if np.any(off > PROJECTION_TOL):
        worst = bverts[int(np.argmax(off))]
        raise MeshGeometryError(
            f"boundary vertex {worst} at {vertices[worst].tolist()} is off the unit "
            f"circle by {off.max():.3e}"
        )
    vertices[bverts] /= radii[:, None]

    # edge geometry only after the projection
    interior = [_make_interior_edge(vertices, triangles, key, cp, cm) for key, cp, cm in interior_raw]

    boundary = _order_boundary_loop(vertices, boundary_raw)
    mesh = Mesh(vertices, triangles, interior, boundary)
    if mesh.euler_characteristic() != 1:
        raise MeshTopologyError(
            f"Euler characteristic V-E+T = {mesh.euler_characteristic()}, expected 1"
        )
    return mesh


def _make_interior_edge(vertices, triangles, key, plus_cell, minus_cell) -> InteriorEdge:
    a, b = key
    d = vertices[b] - vertices[a]
    length = float(np.hypot(d[0], d[1]))
    normal = np.array([d[1], -d[0]]) / length
    opposite = [v for v in triangles[plus_cell] if v not in key][0]
    # point away from the third vertex of T+
    if np.dot(vertices[opposite] - vertices[a], normal) > 0:
        normal = -normal
    return InteriorEdge((int(plus_cell), int(minus_cell)), (int(a), int(b)), normal, length)


def _check_single_loop(boundary_raw) -> None:
    nxt = {}
    for _, _, a, b in boundary_raw:
        if a in nxt:
            raise MeshTopologyError(f"boundary vertex {a} starts two boundary edges")
        nxt[a] = b
    start = next(iter(nxt))
    v, count = start, 0
    while True:
        v = nxt.get(v)
        count += 1
        if v is None:
            raise MeshTopologyError("boundary edges do not close into a loop")
        if v == start or count > len(nxt):
            break
    if count != len(nxt):
        raise MeshTopologyError(
            f"boundary splits into several loops ({count} of {len(nxt)} edges in the first); "
            "the mesh has a hole"
        )


def _order_boundary_loop(vertices, boundary_raw) -> List[BoundaryEdge]:
    nxt = {}
    for c, k, a, b in boundary_raw:
        if a in nxt:
            raise MeshTopologyError(f"boundary vertex {a} starts two boundary edges")
        nxt[a] = (c, k, b)
    angles = np.mod(np.arctan2(vertices[:, 1], vertices[:, 0]), TWO_PI)
    start = min(nxt, key=lambda v: (angles[v], v))

    loop = []
    v = start
    while True:
        c, k, b = nxt[v]
        loop.append((c, k, v, b))
        v = b
        if v == start or len(loop) > len(nxt):
            break
    if len(loop) != len(nxt):
        raise MeshTopologyError(
            f"boundary splits into several loops ({len(loop)} of {len(nxt)} edges in the first)"
        )

    edges = []
    theta = float(angles[start])
    for c, k, a, b in loop:
        width = float(np.mod(angles[b] - angles[a], TWO_PI))
        if not 0.0 < width < np.pi:
            raise MeshGeometryError(
                f"boundary edge ({a}, {b}) has angular width {width:.3e}; "
                "the boundary must run counterclockwise"
            )
        d = vertices[b] - vertices[a]
        length = float(np.hypot(d[0], d[1]))
        normal = np.array([d[1], -d[0]]) / length
        edges.append(
            BoundaryEdge(
                cell=int(c),
                endpoints=(int(a), int(b)),
                theta_range=(theta, theta + width),
                outward_normal=normal,
                length=length,
                local_edge=int(k),
            )
        )
        theta += width
    return edges


def boundary_loop(mesh: Mesh) -> List[BoundaryEdge]:
    """Boundary edges in counterclockwise order with unwrapped angle ranges.

    The ranges partition ``[theta0, theta0 + 2*pi)``; the edge closing the loop
    ends at ``theta0 + 2*pi``.
    """
    return list(mesh.boundary_edges)


def generate_disc_mesh(n_boundary: int, refinement_ratio: float = 0.5) -> Mesh:
    """Graded triangulation of the unit disc from concentric vertex rings.

    Boundary vertices sit at angles ``2*pi*k/n_boundary``. The target cell size
    grows linearly from ``2*pi/n_boundary`` on the circle to that value divided
    by ``refinement_ratio`` at the origin.
    """
    if int(n_boundary) != n_boundary or n_boundary < 8:
        raise ValueError(f"n_boundary must be an integer >= 8, got {n_boundary}")
    if not 0.0 < refinement_ratio <= 1.0:
        raise ValueError(f"refinement_ratio must lie in (0, 1], got {refinement_ratio}")
    n_boundary = int(n_boundary)

    h_edge = TWO_PI / n_boundary
    h_center = h_edge / refinement_ratio

    def size(r):
        return h_center + (h_edge - h_center) * r

    k = np.arange(n_boundary)
    points = [np.column_stack([np.cos(TWO_PI * k / n_boundary), np.sin(TWO_PI * k / n_boundary)])]
    r = 1.0
    ring = 0
    while True:
        r -= 0.5 * np.sqrt(3.0) * size(r)
        if r < 0.5 * size(r):
            break
        ring += 1
        n = max(int(round(TWO_PI * r / size(r))), 5)
        phase = 0.5 * ring * TWO_PI / n
        t = phase + TWO_PI * np.arange(n) / n
        points.append(r * np.column_stack([np.cos(t), np.sin(t)]))
    points.append(np.zeros((1, 2)))
    vertices = np.vstack(points)

    tri = Delaunay(vertices)
    triangles = tri.simplices
    keep = np.abs(signed_areas(vertices, triangles)) > 1e-12
    mesh = build_mesh(vertices, triangles[keep])
    logger.debug(
        "generated disc mesh: %d vertices, %d cells, %d boundary edges",
        mesh.n_vertices, mesh.n_cells, len(mesh.boundary_edges),
    )
    return mesh


# -- MSH v2.2 -----------------------------------------------------------------

def _sections(lines: Sequence[str]):
    """Split an MSH document into ``{name: [body lines]}``."""
    sections = {}
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        if not line:
            i += 1
            continue
        if not line.startswith("$"):
            raise MshParseError(f"line {i + 1}: expected a section header, got {line!r}")
        name = line[1:]
        end = "$End" + name
        body = []
        i += 1
        while i < len(lines) and lines[i].strip() != end:
            body.append(lines[i])
            i += 1
        if i == len(lines):
            raise MshParseError(f"section ${name} is not closed by {end}")
        sections[name] = body
        i += 1
    return sections


def read_msh(path) -> Mesh:
    """Read an ASCII MSH 2.2 file; only 3-node triangles (type 2) are used.

    Topology is rebuilt from the triangle connectivity; physical tags and line
    elements are ignored. Nodes not referenced by any triangle are dropped.
    """
    text = Path(path).read_text()
    sections = _sections(text.splitlines())
    for required in ("MeshFormat", "Nodes", "Elements"):
        if required not in sections:
            raise MshParseError(f"missing ${required} section")

    fmt = sections["MeshFormat"][0].split() if sections["MeshFormat"] else []
    if len(fmt) < 2 or not fmt[0].startswith("2.") or fmt[1] != "0":
        raise MshParseError(f"unsupported MeshFormat {' '.join(fmt)!r}; need ASCII 2.2")

    try:
        body = sections["Nodes"]
        n_nodes = int(body[0])
        ids, coords = [], []
        for line in body[1 : 1 + n_nodes]:
            parts = line.split()
            ids.append(int(parts[0]))
            coords.append((float(parts[1]), float(parts[2])))
        if len(ids) != n_nodes:
            raise MshParseError(f"$Nodes declares {n_nodes} nodes, found {len(ids)}")

        body = sections["Elements"]
        n_elem = int(body[0])
        tris = []
        for line in body[1 : 1 + n_elem]:
            parts = [int(p) for p in line.split()]
            etype, ntags = parts[1], parts[2]
            if etype == 2:
                tris.append(parts[3 + ntags : 6 + ntags])
    except (ValueError, IndexError) as exc:
        raise MshParseError(f"malformed node or element record: {exc}") from exc

    if not tris:
        raise MeshTopologyError("no triangle elements (type 2) in file")
    index = {nid: i for i, nid in enumerate(ids)}
    try:
        tris = np.array([[index[n] for n in t] for t in tris], dtype=int)
    except KeyError as exc:
        raise MshParseError(f"element references unknown node {exc}") from exc

    used = np.unique(tris)
    renumber = -np.ones(len(ids), dtype=int)
    renumber[used] = np.arange(len(used))
    vertices = np.array(coords)[used]
    return build_mesh(vertices, renumber[tris])


def write_msh(mesh_or_arrays, path) -> None:
    """Write vertices/triangles as ASCII MSH 2.2 (no tags)."""
    if isinstance(mesh_or_arrays, Mesh):
        vertices, triangles = mesh_or_arrays.vertices, mesh_or_arrays.triangles
    else:
        vertices, triangles = mesh_or_arrays
    lines = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes", str(len(vertices))]
    for i, p in enumerate(vertices):
        lines.append(f"{i + 1} {float(p[0])!r} {float(p[1])!r} 0")
    lines += ["$EndNodes", "$Elements", str(len(triangles))]
    for i, t in enumerate(triangles):
        lines.append(f"{i + 1} 2 0 {t[0] + 1} {t[1] + 1} {t[2] + 1}")
    lines.append("$EndElements")
    Path(path).write_text("\n".join(lines) + "\n")


def fan_mesh(n: int = 4) -> Mesh:
    """Disc polygon with ``n`` boundary vertices fanned around the origin."""
    t = TWO_PI * np.arange(n) / n
    vertices = np.vstack([np.zeros((1, 2)), np.column_stack([np.cos(t), np.sin(t)])])
    triangles = [[0, 1 + k, 1 + (k + 1) % n] for k in range(n)]
    return build_mesh(vertices, triangles)
