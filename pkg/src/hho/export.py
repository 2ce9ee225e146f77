"""Plain-text output: VTU unstructured grids and CSV tables.

Both writers format floats with ``repr`` precision so that repeated runs
with the same inputs produce identical bytes.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .hho_core import BrokenPolynomial
from .mesh import simplicial_submesh
from .polycalc import eval_monomials

VTK_TRIANGLE = 5


def _fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def write_vtu(path, points, triangles, cell_data: dict | None = None) -> Path:
    """ASCII VTU file with triangle cells and one cell-data array per field."""
    path = Path(path)
    pts = np.asarray(points, dtype=float)
    tris = np.asarray(triangles, dtype=np.int64)
    nc = len(tris)
    lines = ['<?xml version="1.0"?>',
             '<VTKFile type="UnstructuredGrid" version="0.1" byte_order="LittleEndian">',
             "  <UnstructuredGrid>",
             f'    <Piece NumberOfPoints="{len(pts)}" NumberOfCells="{nc}">',
             "      <Points>",
             '        <DataArray type="Float64" NumberOfComponents="3" format="ascii">']
    lines += [f"          {_fmt(x)} {_fmt(y)} 0.0" for x, y in pts]
    lines += ["        </DataArray>", "      </Points>", "      <Cells>",
              '        <DataArray type="Int64" Name="connectivity" format="ascii">']
    lines += ["          " + " ".join(str(int(i)) for i in t) for t in tris]
    lines += ["        </DataArray>", '        <DataArray type="Int64" Name="offsets" format="ascii">',
              "          " + " ".join(str(3 * (i + 1)) for i in range(nc)),
              "        </DataArray>", '        <DataArray type="UInt8" Name="types" format="ascii">',
              "          " + " ".join([str(VTK_TRIANGLE)] * nc),
              "        </DataArray>", "      </Cells>"]
    if cell_data:
        lines.append("      <CellData>")
        for name in sorted(cell_data):
            vals = np.asarray(cell_data[name], dtype=float).ravel()
            if len(vals) != nc:
                raise ValueError(f"cell field {name!r} has {len(vals)} values for {nc} cells")
            lines.append(f'        <DataArray type="Float64" Name="{name}" format="ascii">')
            lines.append("          " + " ".join(_fmt(v) for v in vals))
            lines.append("        </DataArray>")
        lines.append("      </CellData>")
    lines += ["    </Piece>", "  </UnstructuredGrid>", "</VTKFile>", ""]
    path.write_text("\n".join(lines))
    return path


def export_fields(path, field: BrokenPolynomial, extra: dict | None = None) -> Path:
    """Sample a broken polynomial (and optional callables) at submesh triangle centroids."""
    mesh = field.mesh
    sub = simplicial_submesh(mesh)
    c = sub.vertices[sub.triangles].mean(1)
    par = sub.parent
    B = eval_monomials(c, mesh.element_centroid[par], mesh.element_diameter[par], field.degree)
    data = {"reconstruction": np.einsum("ti,ti->t", B, field.coeffs[par]),
            "element": par.astype(float)}
    for name, fn in (extra or {}).items():
        data[name] = np.asarray(fn(c), dtype=float) if callable(fn) else np.asarray(fn, dtype=float)[par]
    return write_vtu(path, sub.vertices, sub.triangles, data)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(["" if v is None else (_fmt(v) if isinstance(v, (float, np.floating)) else v)
                        for v in r])
    return path
