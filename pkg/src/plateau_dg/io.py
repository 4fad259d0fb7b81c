"""VTU and CSV writers for run artifacts."""

from __future__ import annotations

import csv
import os
from typing import Mapping

import numpy as np

from .catalog import cell_node_coordinates
from .mesh import Mesh
from .spaces import DofLayout

VTK_QUADRATIC_TRIANGLE = 22


def _fmt(v: float) -> str:
    return repr(float(v))


def write_vtu(state, mesh: Mesh, layout: DofLayout, path) -> None:
    """ASCII unstructured grid with six duplicated points per cell.

    Points sit at the parametric node positions (z = 0); the membrane field is
    attached as point data ``displacement`` together with its ``magnitude``.
    VTK's quadratic triangle uses the same node order as the local P2 element.
    """
    x = np.asarray(getattr(state, "x", state), dtype=float).reshape(layout.n_cells, 6, 3)
    nodes = cell_node_coordinates(mesh).reshape(-1, 2)
    disp = x.reshape(-1, 3)
    n_pts, n_cells = len(nodes), layout.n_cells
    lines = [
        '<?xml version="1.0"?>',
        '<VTKFile type="UnstructuredGrid" version="0.1" byte_order="LittleEndian">',
        "  <UnstructuredGrid>",
        f'    <Piece NumberOfPoints="{n_pts}" NumberOfCells="{n_cells}">',
        "      <Points>",
        '        <DataArray type="Float64" NumberOfComponents="3" format="ascii">',
    ]
    lines += [f"          {_fmt(u)} {_fmt(v)} 0.0" for u, v in nodes]
    lines += [
        "        </DataArray>",
        "      </Points>",
        "      <Cells>",
        '        <DataArray type="Int64" Name="connectivity" format="ascii">',
    ]
    lines += ["          " + " ".join(str(6 * c + k) for k in range(6)) for c in range(n_cells)]
    lines += [
        "        </DataArray>",
        '        <DataArray type="Int64" Name="offsets" format="ascii">',
        "          " + " ".join(str(6 * (c + 1)) for c in range(n_cells)),
        "        </DataArray>",
        '        <DataArray type="UInt8" Name="types" format="ascii">',
        "          " + " ".join([str(VTK_QUADRATIC_TRIANGLE)] * n_cells),
        "        </DataArray>",
        "      </Cells>",
        '      <PointData Vectors="displacement" Scalars="magnitude">',
        '        <DataArray type="Float64" Name="displacement" NumberOfComponents="3" format="ascii">',
    ]
    lines += ["          " + " ".join(_fmt(c) for c in row) for row in disp]
    lines += [
        "        </DataArray>",
        '        <DataArray type="Float64" Name="magnitude" format="ascii">',
    ]
    lines += ["          " + _fmt(m) for m in np.linalg.norm(disp, axis=1)]
    lines += [
        "        </DataArray>",
        "      </PointData>",
        "    </Piece>",
        "  </UnstructuredGrid>",
        "</VTKFile>",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_iteration_log(report, path) -> None:
    """CSV ``iter,residual_norm,step_length,termination_reason``.

    Row 0 is the initial residual (empty step). Only the last row carries the
    termination reason.
    """
    norms = report.residual_norms
    steps = [""] + [_fmt(s) for s in report.step_lengths]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "residual_norm", "step_length", "termination_reason"])
        for i, r in enumerate(norms):
            last = i == len(norms) - 1
            w.writerow([i, _fmt(r), steps[i], report.termination_reason if last else ""])


def write_summary(path, sections: Mapping[str, Mapping[str, object]]) -> None:
    """Plain ``section,key,value`` CSV."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["section", "key", "value"])
        for name, items in sections.items():
            for key, value in items.items():
                if isinstance(value, (float, np.floating)):
                    value = _fmt(value)
                w.writerow([name, key, value])


def ensure_dir(path) -> None:
    os.makedirs(path, exist_ok=True)
