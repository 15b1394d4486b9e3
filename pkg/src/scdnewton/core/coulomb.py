# -*- test-case-name: scdnewton.test.test_coulomb -*-
# Copyright (c) 2024 The scdnewton developers
# See the LICENSE file for more information

"""
Coulomb friction on a rigid foundation.

A contact node carries the displacement v = (v1, v2, v3), the tangential
force g in R^2 and the normal reaction theta <= 0. The cell mapping Q~ has
the graph

    v3 >= 0, theta <= 0, v3 theta = 0, g in -F theta d||v12||

and the full contact mapping is the product of p cells with a zero mapping
on the remaining degrees of freedom. All cell kernels work on stacked
(p, 3) arrays.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Sequence

import attrs
import numpy as np
from zope.interface import implementer

from scdnewton.core.scd import GRAPH_TOL, GraphViolation, IScdMapping, graph_tolerance
from scdnewton.core.subspaces import SubspaceBasis, stack_block_arrays

M3MINUS_SELECTIONS = ("sticking", "sliding")


class WrongStratum(Exception):
    """
    Limit subspaces were requested at a point where the cell is smooth
    """


class Stratum(enum.Enum):
    L = "L"
    M1 = "M1"
    M2 = "M2"
    M3plus = "M3p"
    M3minus = "M3m"
    M4 = "M4"

    @property
    def state(self) -> str:
        """
        Mechanical contact state: no_contact, sliding or sticking
        """
        return MECHANICAL_STATE[self]


STRATA: tuple[Stratum, ...] = tuple(Stratum)
STRATUM_INDEX: dict[Stratum, int] = {s: i for i, s in enumerate(STRATA)}
MECHANICAL_STATE: dict[Stratum, str] = {
    Stratum.L: "no_contact",
    Stratum.M1: "sliding",
    Stratum.M2: "sliding",
    Stratum.M3plus: "sticking",
    Stratum.M3minus: "sticking",
    Stratum.M4: "sticking",
}

_L, _M1, _M2, _M3P, _M3M, _M4 = range(6)


@attrs.frozen(eq=False)
class CellGraphPoint:
    """
    A point (v, g, theta) of gph Q~
    """

    v: np.ndarray
    g: np.ndarray
    theta: float

    @property
    def y(self) -> np.ndarray:
        """
        The image component (g, theta) as a 3-vector
        """
        return np.array([self.g[0], self.g[1], self.theta])

    @classmethod
    def from_pair(cls, x: np.ndarray, y: np.ndarray) -> CellGraphPoint:
        return cls(np.asarray(x, dtype=float), np.asarray(y[:2], dtype=float), float(y[2]))


def resolvent_lipschitz(friction: float) -> float:
    """
    Lipschitz constant of w -> gamma (gamma I + Q~)^-1 (w)
    """
    return math.sqrt(2.0 * (1.0 + friction**2))


def resolve_cells(gamma: float, w: np.ndarray, friction: float) -> tuple[np.ndarray, np.ndarray]:
    """
    Closed-form (gamma I + Q~)^-1 on every row of a (p, 3) array.

    @return: (v, y) with y = w - gamma v = (g, theta) per row
    """
    w = np.asarray(w, dtype=float).reshape(-1, 3)
    w12 = w[:, :2]
    w3 = w[:, 2]
    theta = np.minimum(w3, 0.0)
    bound = -friction * theta
    norm12 = np.linalg.norm(w12, axis=1)
    sliding = norm12 > bound
    scale = np.zeros_like(norm12)
    scale[sliding] = (1.0 - bound[sliding] / norm12[sliding]) / gamma

    v = np.empty_like(w)
    v[:, :2] = scale[:, None] * w12
    v[:, 2] = np.maximum(w3, 0.0) / gamma
    y = np.empty_like(w)
    y[:, :2] = w12 - gamma * v[:, :2]
    y[:, 2] = theta
    return v, y


def cell_resolvent(gamma: float, w: np.ndarray, friction: float) -> CellGraphPoint:
    v, y = resolve_cells(gamma, w, friction)
    return CellGraphPoint.from_pair(v[0], y[0])


def classify_cells(v: np.ndarray, y: np.ndarray, friction: float) -> np.ndarray:
    """
    Stratum codes (indices into STRATA) for stacked graph points.

    @raise GraphViolation: with the index of the first offending block
    """
    v = np.asarray(v, dtype=float).reshape(-1, 3)
    y = np.asarray(y, dtype=float).reshape(-1, 3)
    g = y[:, :2]
    theta = y[:, 2]
    v3 = v[:, 2]
    tol = GRAPH_TOL * (1.0 + np.sqrt((v * v).sum(axis=1) + (y * y).sum(axis=1)))
    slip = np.linalg.norm(v[:, :2], axis=1)
    gnorm = np.linalg.norm(g, axis=1)
    bound = -friction * theta

    moving = slip > tol
    direction = np.zeros_like(g)
    direction[moving] = v[moving, :2] / slip[moving, None]
    law = np.where(
        moving,
        np.linalg.norm(g - bound[:, None] * direction, axis=1),
        np.maximum(gnorm - bound, 0.0),
    )
    checks = (
        ("v3 >= 0", -v3),
        ("theta <= 0", theta),
        ("v3 theta = 0", np.minimum(np.maximum(v3, 0.0), np.maximum(-theta, 0.0))),
        ("g in -F theta d|v12|", law),
    )
    for relation, residual in checks:
        bad = np.flatnonzero(residual > tol)
        if bad.size:
            i = int(bad[0])
            raise GraphViolation(relation, float(residual[i]), block=i)

    codes = np.empty(v.shape[0], dtype=int)
    separated = v3 > tol
    strong = ~separated & (theta < -tol)
    weak = ~separated & ~strong
    codes[separated] = _L
    codes[strong & moving] = _M1
    codes[strong & ~moving & (gnorm < bound - tol)] = _M3P
    codes[strong & ~moving & (gnorm >= bound - tol)] = _M3M
    codes[weak & moving] = _M2
    codes[weak & ~moving] = _M4
    return codes


def classify(p: CellGraphPoint, friction: float) -> Stratum:
    return STRATA[int(classify_cells(p.v, p.y, friction)[0])]


def sliding_blocks(
    direction: np.ndarray, alpha: np.ndarray, friction: float, dual: bool
) -> tuple[np.ndarray, np.ndarray]:
    """
    Scaled sliding bases for stacked directions w (unit 2-vectors) and
    weights alpha in [0, 1].

    Primal:  X = [[(1-a) I + a ww^T, 0], [0, 0]],  Y = [[a (I - ww^T), -F w], [0, 1]]
    Adjoint: W = [[(1-a) I + a ww^T, 0], [F w^T, 0]],  U = [[a (I - ww^T), 0], [0, 1]]

    At a sliding point alpha = -F theta / (|v12| - F theta) and w = v12 / |v12|;
    alpha = 0 and alpha = 1 give the weak-contact and weak-sticking limits.
    """
    direction = np.asarray(direction, dtype=float).reshape(-1, 2)
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    outer = direction[:, :, None] * direction[:, None, :]
    eye2 = np.eye(2)[None, :, :]
    a = np.zeros((direction.shape[0], 3, 3))
    b = np.zeros_like(a)
    a[:, :2, :2] = (1.0 - alpha)[:, None, None] * eye2 + alpha[:, None, None] * outer
    b[:, :2, :2] = alpha[:, None, None] * (eye2 - outer)
    b[:, 2, 2] = 1.0
    if dual:
        a[:, 2, :2] = friction * direction
    else:
        b[:, :2, 2] = -friction * direction
    return a, b


def cell_blocks(
    v: np.ndarray,
    y: np.ndarray,
    codes: np.ndarray,
    friction: float,
    dual: bool,
    m3minus_selection: str = "sticking",
) -> tuple[np.ndarray, np.ndarray]:
    """
    Selected (p, 3, 3) basis blocks for classified cells
    """
    v = np.asarray(v, dtype=float).reshape(-1, 3)
    y = np.asarray(y, dtype=float).reshape(-1, 3)
    p = v.shape[0]
    a = np.zeros((p, 3, 3))
    b = np.zeros((p, 3, 3))
    free = np.isin(codes, (_L, _M2, _M4))
    a[free] = np.eye(3)
    stuck = np.isin(codes, (_M3P, _M3M))
    if m3minus_selection == "sliding":
        stuck = codes == _M3P
        weak = np.flatnonzero(codes == _M3M)
        if weak.size:
            g = y[weak, :2]
            a[weak], b[weak] = sliding_blocks(
                g / np.linalg.norm(g, axis=1)[:, None], np.ones(weak.size), friction, dual
            )
    elif m3minus_selection != "sticking":
        raise ValueError(f"unknown m3minus_selection {m3minus_selection!r}")
    b[stuck] = np.eye(3)

    slide = np.flatnonzero(codes == _M1)
    if slide.size:
        slip = np.linalg.norm(v[slide, :2], axis=1)
        pressure = -friction * y[slide, 2]
        a[slide], b[slide] = sliding_blocks(
            v[slide, :2] / slip[:, None], pressure / (slip + pressure), friction, dual
        )
    return a, b


def cell_subspace(
    p: CellGraphPoint, friction: float, dual: bool, m3minus_selection: str = "sticking"
) -> SubspaceBasis:
    codes = classify_cells(p.v, p.y, friction)
    a, b = cell_blocks(p.v, p.y, codes, friction, dual, m3minus_selection)
    return SubspaceBasis(a[0], b[0])


def enumerate_limit_subspaces(
    p: CellGraphPoint, friction: float, samples: int, dual: bool = False
) -> list[SubspaceBasis]:
    """
    Every limit subspace at a weak-contact or weak-sticking point; the
    (alpha, w) family at the origin is sampled on a uniform grid with
    `samples` values of alpha in [0, 1] and `samples` angles.

    @raise WrongStratum: at points of L, M1 or M3+
    """
    if samples < 1:
        raise ValueError("samples must be positive")
    stratum = classify(p, friction)
    free = SubspaceBasis(np.eye(3), np.zeros((3, 3)))
    stuck = SubspaceBasis(np.zeros((3, 3)), np.eye(3))

    def family(directions: np.ndarray, alphas: np.ndarray) -> list[SubspaceBasis]:
        a, b = sliding_blocks(directions, alphas, friction, dual)
        return [SubspaceBasis(ai, bi) for ai, bi in zip(a, b)]

    if stratum is Stratum.M2:
        slip = p.v[:2] / np.linalg.norm(p.v[:2])
        return [free, *family(slip[None, :], np.zeros(1))]
    if stratum is Stratum.M3minus:
        g = p.g / np.linalg.norm(p.g)
        return [stuck, *family(g[None, :], np.ones(1))]
    if stratum is Stratum.M4:
        alphas = np.linspace(0.0, 1.0, samples)
        angles = 2.0 * np.pi * np.arange(samples) / samples
        grid_alpha, grid_angle = np.meshgrid(alphas, angles, indexing="ij")
        directions = np.stack([np.cos(grid_angle.ravel()), np.sin(grid_angle.ravel())], axis=1)
        return [free, stuck, *family(directions, grid_alpha.ravel())]
    raise WrongStratum(f"{stratum.value} has a single subspace, use cell_subspace")


def census(codes: Sequence[int] | np.ndarray) -> dict[str, int]:
    """
    Stratum counts in the fixed order L, M1, M2, M3p, M3m, M4
    """
    counts = np.bincount(np.asarray(codes, dtype=int), minlength=len(STRATA))
    return {s.value: int(counts[i]) for i, s in enumerate(STRATA)}


@implementer(IScdMapping)
class CoulombProductMap:
    """
    Q(u) = Q~(u^1) x ... x Q~(u^p) x {0}: p contact cells stored first,
    followed by tail_dim unconstrained degrees of freedom.
    """

    def __init__(
        self, p: int, tail_dim: int, friction: float, m3minus_selection: str = "sticking"
    ) -> None:
        if p < 0 or tail_dim < 0:
            raise ValueError("p and tail_dim must be nonnegative")
        if friction <= 0:
            raise ValueError("friction must be positive")
        if m3minus_selection not in M3MINUS_SELECTIONS:
            raise ValueError(f"unknown m3minus_selection {m3minus_selection!r}")
        self.p = p
        self.tail_dim = tail_dim
        self.friction = friction
        self.m3minus_selection = m3minus_selection

    def dim(self) -> int:
        return 3 * self.p + self.tail_dim

    def cells(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float)[: 3 * self.p].reshape(self.p, 3)

    def resolvent(self, gamma: float, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        out = w / gamma
        if self.p:
            v, _ = resolve_cells(gamma, self.cells(w), self.friction)
            out[: 3 * self.p] = v.ravel()
        return out

    def graph_residual(self, x: np.ndarray, y: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(np.linalg.norm(x - self.resolvent(1.0, x + np.asarray(y, dtype=float))))

    def classify(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        tail = y[3 * self.p :]
        # rounding in z = w - gamma d scales with the whole point
        if tail.size and np.abs(tail).max() > graph_tolerance(x, y):
            raise GraphViolation("y = 0 off the contact cells", float(np.abs(tail).max()))
        return classify_cells(self.cells(x), self.cells(y), self.friction)

    def strata(self, x: np.ndarray, y: np.ndarray) -> list[Stratum]:
        return [STRATA[c] for c in self.classify(x, y)]

    def census(self, x: np.ndarray, y: np.ndarray) -> dict[str, int]:
        return census(self.classify(x, y))

    def select_subspace(self, x: np.ndarray, y: np.ndarray, dual: bool) -> SubspaceBasis:
        codes = self.classify(x, y)
        a, b = cell_blocks(
            self.cells(x), self.cells(y), codes, self.friction, dual, self.m3minus_selection
        )
        return stack_block_arrays(a, b, self.tail_dim)


def product_map(
    p: int, tail_dim: int, friction: float, m3minus_selection: str = "sticking"
) -> CoulombProductMap:
    return CoulombProductMap(p, tail_dim, friction, m3minus_selection)
