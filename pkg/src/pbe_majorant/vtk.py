"""Legacy ASCII VTK export of a triangle mesh with point and cell fields."""
from __future__ import annotations

from pathlib import Path
from typing import Mapping

import numpy as np

from .mesh import Mesh

VTK_TRIANGLE = 5


def _block(name: str, values: np.ndarray) -> list[str]:
    values = np.asarray(values, dtype=float)
    if values.ndim == 2:
        vec = np.zeros((len(values), 3))
        vec[:, :values.shape[1]] = values
        return [f"VECTORS {name} double"] + [f"{a:.12g} {b:.12g} {c:.12g}" for a, b, c in vec]
    return [f"SCALARS {name} double 1", "LOOKUP_TABLE default"] + [f"{x:.12g}" for x in values]


def write_vtk(path, mesh: Mesh, point_data: Mapping[str, np.ndarray] | None = None,
              cell_data: Mapping[str, np.ndarray] | None = None, title: str = "pbe_majorant") -> Path:
    """Write an UNSTRUCTURED_GRID file; field names must not contain spaces."""
    path = Path(path)
    nv, nt = mesh.n_vertices, mesh.n_triangles
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {nv} double"]
    lines += [f"{x:.15g} {y:.15g} 0" for x, y in mesh.vertices]
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {nt}")
    lines += [str(VTK_TRIANGLE)] * nt
    for header, data, n in (("POINT_DATA", point_data, nv), ("CELL_DATA", cell_data, nt)):
        if not data:
            continue
        lines.append(f"{header} {n}")
        for name, values in data.items():
            if " " in name:
                raise ValueError(f"VTK field name {name!r} contains a space")
            if len(values) != n:
                raise ValueError(f"field {name!r} has {len(values)} entries, expected {n}")
            lines += _block(name, values)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_vtk_counts(path) -> tuple[int, int]:
    """(points, cells) declared in a legacy VTK file; used for round-trip checks."""
    npts = ncells = -1
    for line in Path(path).read_text().splitlines():
        if line.startswith("POINTS"):
            npts = int(line.split()[1])
        elif line.startswith("CELLS"):
            ncells = int(line.split()[1])
    return npts, ncells
