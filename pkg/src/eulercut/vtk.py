"""Legacy ASCII VTK unstructured-grid output (triangles only) and a matching reader."""
from __future__ import annotations

from pathlib import Path

import numpy as np

VTK_TRIANGLE = 5


def write_vtk(path, points, cells, point_data=None, cell_data=None, title="eulercut"):
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, 3)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(points)} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in points]
    lines.append(f"CELLS {len(cells)} {4 * len(cells)}")
    lines += [f"3 {a} {b} {c}" for a, b, c in cells]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += [str(VTK_TRIANGLE)] * len(cells)
    for header, n, data in (("POINT_DATA", len(points), point_data), ("CELL_DATA", len(cells), cell_data)):
        if not data:
            continue
        lines.append(f"{header} {n}")
        for name, values in data.items():
            values = np.asarray(values).ravel()
            if len(values) != n:
                raise ValueError(f"{header.lower()} '{name}' has {len(values)} values, expected {n}")
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [f"{v:.17g}" for v in values.astype(float)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_vtk(path) -> dict:
    """Parse a file written by `write_vtk`."""
    tokens = Path(path).read_text().split("\n")
    out = {"points": None, "cells": None, "point_data": {}, "cell_data": {}}
    i = 0
    section = None
    while i < len(tokens):
        line = tokens[i].strip()
        parts = line.split()
        if not parts:
            i += 1
            continue
        key = parts[0]
        if key == "POINTS":
            n = int(parts[1])
            pts = np.array([tokens[i + 1 + j].split() for j in range(n)], dtype=float).reshape(n, 3)
            out["points"] = pts[:, :2]
            i += n + 1
        elif key == "CELLS":
            n = int(parts[1])
            c = np.array([tokens[i + 1 + j].split() for j in range(n)], dtype=np.int64).reshape(n, 4)
            out["cells"] = c[:, 1:]
            i += n + 1
        elif key == "CELL_TYPES":
            i += int(parts[1]) + 1
        elif key in ("POINT_DATA", "CELL_DATA"):
            section = ("point_data" if key == "POINT_DATA" else "cell_data", int(parts[1]))
            i += 1
        elif key == "SCALARS":
            name = parts[1]
            n = section[1]
            vals = np.array([float(tokens[i + 2 + j]) for j in range(n)])
            out[section[0]][name] = vals
            i += n + 2
        else:
            i += 1
    return out


def export_state(path, mesh, u=None, phi_lin=None, active=None, elem_class=None):
    """Active elements of the background mesh with solution and level set at the vertices.

    Deformations keep mesh vertices fixed, so vertex coordinates are the
    deformed point positions.
    """
    cells = mesh.triangles if active is None else mesh.triangles[np.asarray(active, dtype=bool)]
    pdata = {}
    if u is not None:
        pdata["solution"] = u.coeffs[:mesh.n_vertices]
    if phi_lin is not None:
        pdata["levelset"] = phi_lin
    cdata = {}
    if elem_class is not None:
        ec = elem_class if active is None else elem_class[np.asarray(active, dtype=bool)]
        cdata["element_class"] = ec
    write_vtk(path, mesh.vertices, cells, pdata, cdata if len(cells) else None)
