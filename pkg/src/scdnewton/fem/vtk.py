# -*- test-case-name: scdnewton.test.test_fem -*-
# Copyright (c) 2024 The scdnewton developers
# See the LICENSE file for more information

"""
Legacy VTK (ASCII unstructured grid) export
"""

from __future__ import annotations

from collections.abc import Mapping

import numpy as np

from scdnewton.fem.mesh import Mesh

VTK_HEXAHEDRON = 12


def write_vtk(
    path: str,
    mesh: Mesh,
    displacement: np.ndarray | None = None,
    point_fields: Mapping[str, np.ndarray] | None = None,
    title: str = "scdnewton",
) -> None:
    """
    Write points, hexahedra and nodal data.

    @param displacement: optional (N, 3) vector field
    @param point_fields: integer scalar fields of length N
    """
    cells = mesh.hexahedra
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write(f"{title}\n")
        f.write("ASCII\n")
        f.write("DATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {mesh.node_count} double\n")
        np.savetxt(f, mesh.coords, fmt="%.17g")
        f.write(f"CELLS {cells.shape[0]} {9 * cells.shape[0]}\n")
        np.savetxt(f, np.hstack([np.full((cells.shape[0], 1), 8), cells]), fmt="%d")
        f.write(f"CELL_TYPES {cells.shape[0]}\n")
        np.savetxt(f, np.full(cells.shape[0], VTK_HEXAHEDRON), fmt="%d")
        if displacement is None and not point_fields:
            return
        f.write(f"POINT_DATA {mesh.node_count}\n")
        if displacement is not None:
            f.write("VECTORS displacement double\n")
            np.savetxt(f, np.asarray(displacement, dtype=float).reshape(-1, 3), fmt="%.17g")
        for name, values in (point_fields or {}).items():
            f.write(f"SCALARS {name} int 1\n")
            f.write("LOOKUP_TABLE default\n")
            np.savetxt(f, np.asarray(values, dtype=int).reshape(-1), fmt="%d")
