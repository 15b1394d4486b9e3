# -*- test-case-name: scdnewton.test.test_oracles -*-
# Copyright (c) 2024 The scdnewton developers
# See the LICENSE file for more information

"""
Brute-force checks for SCD mappings, used by the test suite.

Nearby graph points are generated through the resolvent: for a base point
(x, y) of gph Q the vector w = gamma x + y is perturbed and mapped back, so
every sample is an exact graph point.
"""

from __future__ import annotations

from collections.abc import Callable, Iterable, Iterator
from typing import Any

import attrs
import numpy as np
import scipy.sparse as sp

from scdnewton.core.scd import IScdMapping
from scdnewton.core.subspaces import SubspaceBasis, orthonormal_basis

# perturbations are halved at most this often to stay inside the radius
_SHRINK_LIMIT = 60


@attrs.frozen(eq=False)
class TangentSample:
    """
    Unit directions (rows, in R^2n) of differences between the base point
    and graph points at distance at most `radius` from it.
    """

    base_x: np.ndarray
    base_y: np.ndarray
    directions: np.ndarray
    distances: np.ndarray
    radius: float

    def defect(self, basis: SubspaceBasis) -> float:
        """
        Largest distance of a sampled direction from rge(a, b)
        """
        if not len(self.directions):
            return 0.0
        q = orthonormal_basis(basis)
        residual = self.directions.T - q @ (q.T @ self.directions.T)
        return float(np.linalg.norm(residual, axis=0).max())


def _graph_points(
    q: IScdMapping,
    x: np.ndarray,
    y: np.ndarray,
    radius: float,
    count: int,
    gamma: float,
    seed: int,
) -> Iterator[tuple[np.ndarray, np.ndarray, float]]:
    rng = np.random.default_rng(seed)
    w0 = gamma * x + y
    n = x.shape[0]
    for _ in range(count):
        u = rng.standard_normal(n)
        step = radius * rng.uniform(0.1, 1.0) * u / np.linalg.norm(u)
        for _ in range(_SHRINK_LIMIT):
            w = w0 + step
            xs = q.resolvent(gamma, w)
            ys = w - gamma * xs
            dist = float(np.sqrt(np.sum((xs - x) ** 2) + np.sum((ys - y) ** 2)))
            if dist <= radius:
                break
            step = 0.5 * step
        else:
            continue
        if dist > 0.0:
            yield xs, ys, dist


def sample_graph_directions(
    q: IScdMapping,
    x: np.ndarray,
    y: np.ndarray,
    radius: float,
    count: int,
    gamma: float = 1.0,
    seed: int = 0,
) -> TangentSample:
    """
    Sample up to `count` normalized differences (x' - x, y' - y) over graph
    points (x', y') within `radius` of the base point.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rows = []
    distances = []
    for xs, ys, dist in _graph_points(q, x, y, radius, count, gamma, seed):
        rows.append(np.concatenate([xs - x, ys - y]) / dist)
        distances.append(dist)
    directions = np.array(rows) if rows else np.zeros((0, 2 * x.shape[0]))
    return TangentSample(x, y, directions, np.array(distances), radius)


def semismooth_star_ratio(
    q: IScdMapping,
    x: np.ndarray,
    y: np.ndarray,
    radius: float,
    count: int,
    gamma: float = 1.0,
    seed: int = 0,
) -> float:
    """
    max |<x*, x' - x> - <y*, y' - y>| / ||(x', y') - (x, y)|| over sampled
    graph points (x', y') and unit elements (y*, x*) of an orthonormal basis
    of the adjoint subspace selected at (x', y').
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[0]
    worst = 0.0
    for xs, ys, dist in _graph_points(q, x, y, radius, count, gamma, seed):
        basis = orthonormal_basis(q.select_subspace(xs, ys, True))
        bracket = basis[n:].T @ (xs - x) - basis[:n].T @ (ys - y)
        worst = max(worst, float(np.abs(bracket).max()) / dist)
    return worst


def check_inclusion(q: IScdMapping, x: np.ndarray, y: np.ndarray) -> float:
    """
    Residual of y in Q(x); zero exactly on the graph
    """
    return float(q.graph_residual(np.asarray(x, dtype=float), np.asarray(y, dtype=float)))


def tangent_defect(
    q: IScdMapping, x: np.ndarray, y: np.ndarray, direction: np.ndarray, t: float = 1e-6
) -> float:
    """
    Graph residual at (x, y) + t (dx, dy), relative to the step length.

    Close to zero when the direction is tangent to the graph; a one-sided
    direction d has a small defect while -d does not.
    """
    x = np.asarray(x, dtype=float)
    direction = np.asarray(direction, dtype=float)
    n = x.shape[0]
    scale = t * float(np.linalg.norm(direction))
    if scale == 0.0:
        return 0.0
    return check_inclusion(q, x + t * direction[:n], np.asarray(y) + t * direction[n:]) / scale


def find_one_sided_direction(
    q: IScdMapping,
    x: np.ndarray,
    y: np.ndarray,
    candidates: Iterable[np.ndarray],
    t: float = 1e-6,
    tol: float = 1e-6,
) -> np.ndarray | None:
    """
    First candidate d tangent to the graph whose opposite -d is not.

    Such a direction shows that the tangent cone at (x, y) is not a
    subspace, i.e. the graph is not smooth there.
    """
    for d in candidates:
        d = np.asarray(d, dtype=float)
        if tangent_defect(q, x, y, d, t) <= tol and tangent_defect(q, x, y, -d, t) > tol:
            return d
    return None


def jacobian_defect(
    f: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], Any],
    x: np.ndarray,
    step: float = 1e-6,
) -> float:
    """
    Largest entrywise gap between the Jacobian and central differences,
    relative to max(1, max |J|)
    """
    x = np.asarray(x, dtype=float)
    jac = jacobian(x)
    jac = np.asarray(jac.toarray() if sp.issparse(jac) else jac, dtype=float)
    jac = np.atleast_2d(jac)
    fd = np.empty_like(jac)
    for j in range(x.shape[0]):
        e = np.zeros_like(x)
        e[j] = step
        fd[:, j] = (np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2.0 * step)
    return float(np.abs(fd - jac).max() / max(1.0, float(np.abs(jac).max())))
