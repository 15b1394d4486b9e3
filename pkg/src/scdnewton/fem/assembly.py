# -*- test-case-name: scdnewton.test.test_fem -*-
# Copyright (c) 2024 The scdnewton developers
# See the LICENSE file for more information

"""
Linear elasticity on trilinear hexahedra and the contact problem data

    0 in A u - l + Q(u),   u = u~ + d

where u~ is the displacement, d carries the gap in the normal slot of every
contact node and Q is the Coulomb product mapping.
"""

from __future__ import annotations

from collections.abc import Sequence

import attrs
import numpy as np
import scipy.sparse as sp

from twisted.python import log

from scdnewton.core.coulomb import product_map
from scdnewton.core.newton import GeProblem
from scdnewton.fem.mesh import Mesh

_GAUSS = 1.0 / np.sqrt(3.0)
# natural coordinates of the eight hexahedron vertices
_HEX_CORNERS = np.array(
    [
        [-1, -1, -1],
        [1, -1, -1],
        [1, 1, -1],
        [-1, 1, -1],
        [-1, -1, 1],
        [1, -1, 1],
        [1, 1, 1],
        [-1, 1, 1],
    ],
    dtype=float,
)
_QUAD_CORNERS = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float)


class InvalidMaterial(Exception):
    """
    Young's modulus or Poisson's ratio outside the admissible range
    """


class DegenerateElement(Exception):
    """
    Non-positive Jacobian determinant at a quadrature point
    """

    def __init__(self, element: int, det: float) -> None:
        super().__init__(f"element {element}: Jacobian determinant {det:.3e}")
        self.element = element
        self.det = det


def elasticity_matrix(young: float, nu: float) -> np.ndarray:
    """
    Isotropic Hooke law in Voigt order xx, yy, zz, xy, yz, zx with
    engineering shear strains
    """
    if not young > 0:
        raise InvalidMaterial(f"E must be positive, got {young}")
    if not 0.0 < nu < 0.5:
        raise InvalidMaterial(f"nu must lie in (0, 0.5), got {nu}")
    lam = young * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = young / (2.0 * (1.0 + nu))
    d = np.zeros((6, 6))
    d[:3, :3] = lam
    d[np.arange(3), np.arange(3)] += 2.0 * mu
    d[np.arange(3, 6), np.arange(3, 6)] = mu
    return d


def _hex_shape_gradients() -> np.ndarray:
    """
    (8 points, 3, 8 nodes) reference gradients at the 2x2x2 Gauss points
    """
    points = _GAUSS * _HEX_CORNERS
    c = _HEX_CORNERS
    grads = np.empty((8, 3, 8))
    for g, (xi, eta, zeta) in enumerate(points):
        grads[g, 0] = c[:, 0] * (1 + c[:, 1] * eta) * (1 + c[:, 2] * zeta) / 8.0
        grads[g, 1] = c[:, 1] * (1 + c[:, 0] * xi) * (1 + c[:, 2] * zeta) / 8.0
        grads[g, 2] = c[:, 2] * (1 + c[:, 0] * xi) * (1 + c[:, 1] * eta) / 8.0
    return grads


def strain_displacement(grads: np.ndarray) -> np.ndarray:
    """
    B matrices (..., 6, 24) from physical shape gradients (..., 3, 8)
    """
    shape = grads.shape[:-2]
    b = np.zeros(shape + (6, 8, 3))
    dx, dy, dz = grads[..., 0, :], grads[..., 1, :], grads[..., 2, :]
    b[..., 0, :, 0] = dx
    b[..., 1, :, 1] = dy
    b[..., 2, :, 2] = dz
    b[..., 3, :, 0] = dy
    b[..., 3, :, 1] = dx
    b[..., 4, :, 1] = dz
    b[..., 4, :, 2] = dy
    b[..., 5, :, 0] = dz
    b[..., 5, :, 2] = dx
    return b.reshape(shape + (6, 24))


def element_stiffness(coords: np.ndarray, young: float, nu: float) -> np.ndarray:
    """
    Stiffness matrices of trilinear hexahedra by 2x2x2 Gauss quadrature.

    @param coords: (E, 8, 3) vertex coordinates in VTK hexahedron order
    @return: (E, 24, 24), dof 3 a + c is component c of vertex a
    @raise DegenerateElement: if a Jacobian determinant is not positive
    """
    coords = np.asarray(coords, dtype=float).reshape(-1, 8, 3)
    d = elasticity_matrix(young, nu)
    ref = _hex_shape_gradients()
    jac = np.einsum("gia,eaj->egij", ref, coords)
    det = np.linalg.det(jac)
    bad = np.argwhere(det <= 0.0)
    if bad.size:
        e, g = bad[0]
        raise DegenerateElement(int(e), float(det[e, g]))
    grads = np.linalg.solve(jac, np.broadcast_to(ref, jac.shape[:2] + ref.shape[1:]))
    b = strain_displacement(grads)
    ke = np.einsum("egia,ij,egjb,eg->eab", b, d, b, det)
    return 0.5 * (ke + np.transpose(ke, (0, 2, 1)))


def surface_load(coords: np.ndarray, faces: np.ndarray, traction: Sequence[float]) -> np.ndarray:
    """
    Consistent nodal forces (N, 3) of a constant traction on bilinear faces
    """
    traction = np.asarray(traction, dtype=float)
    forces = np.zeros((coords.shape[0], 3))
    if not len(faces) or not np.any(traction):
        return forces
    x = coords[faces]
    c = _QUAD_CORNERS
    weights = np.zeros((faces.shape[0], 4))
    for s, t in _GAUSS * c:
        shape = (1 + c[:, 0] * s) * (1 + c[:, 1] * t) / 4.0
        ds = c[:, 0] * (1 + c[:, 1] * t) / 4.0
        dt = c[:, 1] * (1 + c[:, 0] * s) / 4.0
        area = np.linalg.norm(
            np.cross(np.einsum("a,fai->fi", ds, x), np.einsum("a,fai->fi", dt, x)), axis=1
        )
        weights += area[:, None] * shape[None, :]
    np.add.at(forces, faces.ravel(), weights.ravel()[:, None] * traction[None, :])
    return forces


def assemble_stiffness(mesh: Mesh, young: float, nu: float) -> sp.csr_matrix:
    """
    Global stiffness on all 3 N dofs, before any elimination
    """
    ke = element_stiffness(mesh.coords[mesh.hexahedra], young, nu)
    dofs = (3 * mesh.hexahedra[:, :, None] + np.arange(3)[None, None, :]).reshape(-1, 24)
    rows = np.repeat(dofs, 24, axis=1).ravel()
    cols = np.tile(dofs, (1, 24)).ravel()
    size = 3 * mesh.node_count
    # COO to CSR sums duplicates in a fixed order
    return sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(size, size)).tocsr()


@attrs.frozen(eq=False)
class ContactModel:
    """
    Reduced stiffness A, shifted load l = l~ + A d and gap shift d; the
    first 3 p dofs are the contact node blocks (u1, u2, u3).
    """

    mesh: Mesh
    stiffness: sp.csr_matrix
    load: np.ndarray
    load_tilde: np.ndarray
    gap_shift: np.ndarray
    friction: float

    @property
    def contact_count(self) -> int:
        return int(self.mesh.contact_nodes.shape[0])

    @property
    def n(self) -> int:
        return int(self.stiffness.shape[0])

    def ge_problem(self, m3minus_selection: str = "sticking") -> GeProblem:
        """
        f(u) = A u - l with the constant Jacobian A, and the Coulomb
        product mapping on the contact blocks
        """
        a = self.stiffness
        load = self.load
        q = product_map(self.contact_count, self.n - 3 * self.contact_count, self.friction, m3minus_selection)
        return GeProblem(f_eval=lambda u: a @ u - load, f_jacobian=lambda u: a, q=q)

    def displacement(self, u: np.ndarray) -> np.ndarray:
        """
        Nodal displacement u - d as an (N, 3) field
        """
        return self.mesh.expand(np.asarray(u, dtype=float) - self.gap_shift)


def assemble(
    mesh: Mesh,
    young: float,
    nu: float,
    p_top: Sequence[float],
    p_right: Sequence[float],
    friction: float,
) -> ContactModel:
    """
    Stiffness and loads of the contact problem on a mesh.

    Tractions p_top act on the face x3 = 1 and p_right on x1 = 2; the plane
    x1 = 0 is clamped and eliminated.
    """
    full = assemble_stiffness(mesh, young, nu)
    forces = surface_load(mesh.coords, mesh.top_faces, p_top) + surface_load(
        mesh.coords, mesh.right_faces, p_right
    )
    dofs = mesh.reduced_dofs
    stiffness = full[dofs][:, dofs].tocsr()
    stiffness.sort_indices()
    load_tilde = forces.ravel()[dofs]
    shift = mesh.gap_shift()
    model = ContactModel(
        mesh=mesh,
        stiffness=stiffness,
        load=load_tilde + stiffness @ shift,
        load_tilde=load_tilde,
        gap_shift=shift,
        friction=friction,
    )
    log.msg(
        eventid="scdnewton.model.assembled",
        format="assembled n=%(n)d, p=%(p)d, nnz=%(nnz)d",
        n=model.n,
        p=model.contact_count,
        nnz=int(stiffness.nnz),
    )
    return model
