# -*- test-case-name: scdnewton.test.test_fem -*-
# Copyright (c) 2024 The scdnewton developers
# See the LICENSE file for more information

"""
Hexahedral meshes of the benchmark body

    {(x1, x2, x3) : 0 <= x1 <= 2, 0 <= x2 <= 1, d(x1, x2) <= x3 <= 1}

resting on the rigid foundation x3 <= 0. Node (i, j, k) has the id
i + (nx1 + 1) (j + (nx2 + 1) k); each node column is cut into nx3 equal
layers between the bottom d(x1, x2) and the top x3 = 1.

Degrees of freedom of the reduced model: the clamped plane x1 = 0 is
eliminated, the p contact nodes (bottom layer, i >= 1) come first and every
node contributes the block (u1, u2, u3).
"""

from __future__ import annotations

import math

import attrs
import numpy as np

from twisted.python import log

GEOMETRIES = ("d1", "d2", "d3")


def mesh_sizes(lev: int) -> tuple[int, int, int, int, int]:
    """
    (nx1, nx2, nx3, p, n) for a discretization level
    """
    if lev < 1:
        raise ValueError(f"lev must be at least 1, got {lev}")
    scale = 2.0 ** (lev / 2.0)
    nx1 = math.ceil(4.0 * scale)
    nx2 = nx3 = math.ceil(2.0 * scale)
    p = nx1 * (nx2 + 1)
    n = 3 * nx1 * (nx2 + 1) * (nx3 + 1)
    return nx1, nx2, nx3, p, n


def geometry_value(which: str, x1: np.ndarray | float, x2: np.ndarray | float) -> np.ndarray:
    """
    Height d(x1, x2) of the body's lower surface above the foundation
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if which == "d1":
        return np.full(np.broadcast(x1, x2).shape, 0.01)
    if which == "d2":
        bump = 0.01 - 0.015 * np.sqrt(0.5 * (x1 - 1.0) ** 2 + 2.0 * (x2 - 0.5) ** 2)
        return np.maximum(bump, 0.0025)
    if which == "d3":
        return 0.01 + 0.005 * (np.sin(2.0 * np.pi * x1) + np.cos(2.0 * np.pi * x2))
    raise ValueError(f"unknown geometry {which!r}")


@attrs.frozen
class MeshSpec:
    lev: int = attrs.field(validator=attrs.validators.ge(1))
    geometry: str = attrs.field(default="d1", validator=attrs.validators.in_(GEOMETRIES))

    @property
    def sizes(self) -> tuple[int, int, int, int, int]:
        return mesh_sizes(self.lev)

    @property
    def nx1(self) -> int:
        return self.sizes[0]

    @property
    def nx2(self) -> int:
        return self.sizes[1]

    @property
    def nx3(self) -> int:
        return self.sizes[2]

    @property
    def p(self) -> int:
        return self.sizes[3]

    @property
    def n(self) -> int:
        return self.sizes[4]


@attrs.frozen(eq=False)
class Mesh:
    """
    Nodes, trilinear hexahedra (VTK vertex order) and the boundary parts
    the model needs.
    """

    spec: MeshSpec
    coords: np.ndarray
    parametric: np.ndarray
    hexahedra: np.ndarray
    top_faces: np.ndarray
    right_faces: np.ndarray
    dirichlet_nodes: np.ndarray
    contact_nodes: np.ndarray
    free_nodes: np.ndarray

    @property
    def node_count(self) -> int:
        return int(self.coords.shape[0])

    @property
    def reduced_dofs(self) -> np.ndarray:
        """
        Global dof index (3 node + component) of every reduced dof
        """
        return (3 * self.free_nodes[:, None] + np.arange(3)[None, :]).ravel()

    @property
    def gap(self) -> np.ndarray:
        """
        Initial distance of every contact node to the foundation
        """
        return self.coords[self.contact_nodes, 2].copy()

    def gap_shift(self) -> np.ndarray:
        """
        The reduced vector with the gap in the normal slot of every contact
        node and zeros elsewhere
        """
        shift = np.zeros(3 * self.free_nodes.shape[0])
        shift[2 : 3 * self.contact_nodes.shape[0] : 3] = self.gap
        return shift

    def expand(self, reduced: np.ndarray) -> np.ndarray:
        """
        Nodal (N, 3) field from a reduced vector, zero on the clamped plane
        """
        field = np.zeros(3 * self.node_count)
        field[self.reduced_dofs] = reduced
        return field.reshape(-1, 3)

    def restrict(self, field: np.ndarray) -> np.ndarray:
        return np.asarray(field, dtype=float).reshape(-1)[self.reduced_dofs]


def node_id(spec: MeshSpec, i: np.ndarray | int, j: np.ndarray | int, k: np.ndarray | int) -> np.ndarray:
    return np.asarray(i) + (spec.nx1 + 1) * (np.asarray(j) + (spec.nx2 + 1) * np.asarray(k))


def build_mesh(spec: MeshSpec) -> Mesh:
    nx1, nx2, nx3 = spec.nx1, spec.nx2, spec.nx3
    k, j, i = np.meshgrid(np.arange(nx3 + 1), np.arange(nx2 + 1), np.arange(nx1 + 1), indexing="ij")
    i, j, k = i.ravel(), j.ravel(), k.ravel()

    s = np.stack([2.0 * i / nx1, j / nx2, k / nx3], axis=1)
    bottom = geometry_value(spec.geometry, s[:, 0], s[:, 1])
    coords = np.stack([s[:, 0], s[:, 1], bottom + (1.0 - bottom) * s[:, 2]], axis=1)

    ek, ej, ei = np.meshgrid(np.arange(nx3), np.arange(nx2), np.arange(nx1), indexing="ij")
    ei, ej, ek = ei.ravel(), ej.ravel(), ek.ravel()
    corners = ((0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0), (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1))
    hexahedra = np.stack(
        [node_id(spec, ei + a, ej + b, ek + c) for a, b, c in corners], axis=1
    )

    fj, fi = np.meshgrid(np.arange(nx2), np.arange(nx1), indexing="ij")
    fi, fj = fi.ravel(), fj.ravel()
    top_faces = np.stack(
        [
            node_id(spec, fi, fj, nx3),
            node_id(spec, fi + 1, fj, nx3),
            node_id(spec, fi + 1, fj + 1, nx3),
            node_id(spec, fi, fj + 1, nx3),
        ],
        axis=1,
    )
    rk, rj = np.meshgrid(np.arange(nx3), np.arange(nx2), indexing="ij")
    rj, rk = rj.ravel(), rk.ravel()
    right_faces = np.stack(
        [
            node_id(spec, nx1, rj, rk),
            node_id(spec, nx1, rj + 1, rk),
            node_id(spec, nx1, rj + 1, rk + 1),
            node_id(spec, nx1, rj, rk + 1),
        ],
        axis=1,
    )

    ids = np.arange(coords.shape[0])
    dirichlet = ids[i == 0]
    contact = ids[(k == 0) & (i >= 1)]
    others = ids[(k > 0) & (i >= 1)]
    mesh = Mesh(
        spec=spec,
        coords=coords,
        parametric=s,
        hexahedra=hexahedra,
        top_faces=top_faces,
        right_faces=right_faces,
        dirichlet_nodes=dirichlet,
        contact_nodes=contact,
        free_nodes=np.concatenate([contact, others]),
    )
    log.msg(
        eventid="scdnewton.mesh.built",
        format="mesh lev=%(lev)d %(geometry)s: %(nodes)d nodes, %(cells)d hexahedra, p=%(p)d",
        lev=spec.lev,
        geometry=spec.geometry,
        nodes=mesh.node_count,
        cells=hexahedra.shape[0],
        p=contact.shape[0],
    )
    return mesh
