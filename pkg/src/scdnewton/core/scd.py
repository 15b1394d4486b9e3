# -*- test-case-name: scdnewton.test.test_scd -*-
# Copyright (c) 2024 The scdnewton developers
# See the LICENSE file for more information

"""
The interface every set-valued mapping Q of a generalized equation
0 in f(x) + Q(x) provides to the Newton driver, and reference instances.

The resolvent convention is (gamma I + Q)^-1: v = resolvent(gamma, w)
means w - gamma v lies in Q(v).
"""

from __future__ import annotations

from collections.abc import Callable
from typing import Any

import attrs
import numpy as np
import scipy.sparse as sp
from zope.interface import Interface, implementer

from scdnewton.core.subspaces import SubspaceBasis

# Newton iterations allowed in a smooth resolvent solve
SMOOTH_MAX_ITERS = 100
# tolerance on the smooth resolvent equation, relative to 1 + ||w||
SMOOTH_RTOL = 1e-13
# absolute slack on graph relations, scaled by 1 + ||(x, y)||
GRAPH_TOL = 1e-10


class GraphViolation(Exception):
    """
    A point handed to a mapping is not on its graph
    """

    def __init__(self, relation: str, residual: float, block: int | None = None) -> None:
        where = "" if block is None else f" (block {block})"
        super().__init__(f"violated {relation}{where}: residual {residual:.3e}")
        self.relation = relation
        self.residual = residual
        self.block = block


class NoConvergence(Exception):
    """
    The inner Newton solve of a smooth resolvent did not converge
    """


class IScdMapping(Interface):
    """
    A set-valued mapping with the SCD property and a single-valued resolvent
    """

    def dim() -> int:
        """
        Dimension n of the space the mapping acts on
        """

    def resolvent(gamma: float, w: np.ndarray) -> np.ndarray:
        """
        Evaluate (gamma I + Q)^-1 (w)
        """

    def graph_residual(x: np.ndarray, y: np.ndarray) -> float:
        """
        Nonnegative residual, zero iff y in Q(x)
        """

    def select_subspace(x: np.ndarray, y: np.ndarray, dual: bool) -> SubspaceBasis:
        """
        One element of S Q(x, y), or of S* Q(x, y) when dual is set.

        Primal bases are (X, Y) pairs, adjoint bases are (Y*, X*) pairs.
        """

    def census(x: np.ndarray, y: np.ndarray) -> dict[str, int]:
        """
        Stratum counts at a graph point; empty for mappings without strata
        """


@attrs.frozen(eq=False)
class GraphPointGE:
    """
    Output of the approximation step: the point ((x_hat, d_hat), (y1, y2)) on
    the graph of the decoupled mapping, plus the Q-side graph point (d_hat, z).
    """

    x_hat: np.ndarray
    d_hat: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    z: np.ndarray
    gamma: float

    @property
    def residual(self) -> float:
        """
        ||(y1, y2)||, the quantity the Newton driver drives to zero
        """
        return float(np.sqrt(np.dot(self.y1, self.y1) + np.dot(self.y2, self.y2)))


def graph_tolerance(x: np.ndarray, y: np.ndarray) -> float:
    return GRAPH_TOL * (1.0 + float(np.sqrt(np.dot(x, x) + np.dot(y, y))))


@implementer(IScdMapping)
class NormalConeOrthant:
    """
    Normal cone to the nonnegative orthant of R^m, acting componentwise.

    At the origin of a component the selected subspace is rge(1, 0), the
    same convention the contact cells use for weak contact.
    """

    def __init__(self, m: int = 1) -> None:
        self.m = m

    def dim(self) -> int:
        return self.m

    def resolvent(self, gamma: float, w: np.ndarray) -> np.ndarray:
        return np.maximum(np.asarray(w, dtype=float), 0.0) / gamma

    def graph_residual(self, x: np.ndarray, y: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(np.linalg.norm(x - np.maximum(x + np.asarray(y, dtype=float), 0.0)))

    def _contact(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        tol = graph_tolerance(x, y)
        if np.any(x < -tol):
            raise GraphViolation("x >= 0", float(-x.min()))
        if np.any(y > tol):
            raise GraphViolation("y <= 0", float(y.max()))
        gap = np.abs(x * y)
        if np.any(gap > tol):
            raise GraphViolation("x y = 0", float(gap.max()))
        return (x <= tol) & (y < -tol)

    def select_subspace(self, x: np.ndarray, y: np.ndarray, dual: bool) -> SubspaceBasis:
        # rge(1, 0) and rge(0, 1) are both self-dual
        active = self._contact(x, y)
        return SubspaceBasis(np.diag((~active).astype(float)), np.diag(active.astype(float)))

    def census(self, x: np.ndarray, y: np.ndarray) -> dict[str, int]:
        return {}


def normal_cone_rplus() -> NormalConeOrthant:
    """
    The normal cone mapping to R_+, dimension 1
    """
    return NormalConeOrthant(1)


def _as_dense(m: Any) -> np.ndarray:
    if sp.issparse(m):
        return np.asarray(m.toarray(), dtype=float)
    return np.atleast_2d(np.asarray(m, dtype=float))


@implementer(IScdMapping)
class SmoothMap:
    """
    A single-valued continuously differentiable mapping seen as an SCD
    mapping. Its graph is a smooth manifold with tangent rge(I, grad f(x)).
    """

    def __init__(
        self,
        f: Callable[[np.ndarray], np.ndarray],
        jacobian: Callable[[np.ndarray], Any],
        n: int,
    ) -> None:
        self.f = f
        self.jacobian = jacobian
        self.n = n

    def dim(self) -> int:
        return self.n

    def resolvent(self, gamma: float, w: np.ndarray) -> np.ndarray:
        """
        Solve gamma v + f(v) = w by damped Newton, started at w / gamma
        """
        w = np.asarray(w, dtype=float)
        v = w / gamma
        tol = SMOOTH_RTOL * (1.0 + float(np.linalg.norm(w)))
        eye = np.eye(self.n)

        def equation(v: np.ndarray) -> np.ndarray:
            return gamma * v + np.asarray(self.f(v), dtype=float) - w

        r = equation(v)
        norm = float(np.linalg.norm(r))
        for _ in range(SMOOTH_MAX_ITERS):
            if norm <= tol:
                return v
            step = np.linalg.solve(gamma * eye + _as_dense(self.jacobian(v)), -r)
            t = 1.0
            while True:
                trial = v + t * step
                r_trial = equation(trial)
                norm_trial = float(np.linalg.norm(r_trial))
                if norm_trial <= (1.0 - 1e-4 * t) * norm or t < 1e-10:
                    break
                t *= 0.5
            v, r, norm = trial, r_trial, norm_trial
        if norm <= tol:
            return v
        raise NoConvergence(
            f"smooth resolvent: residual {norm:.3e} after {SMOOTH_MAX_ITERS} iterations"
        )

    def graph_residual(self, x: np.ndarray, y: np.ndarray) -> float:
        return float(np.linalg.norm(np.asarray(y, dtype=float) - self.f(np.asarray(x, dtype=float))))

    def select_subspace(self, x: np.ndarray, y: np.ndarray, dual: bool) -> SubspaceBasis:
        jac = _as_dense(self.jacobian(np.asarray(x, dtype=float)))
        eye = np.eye(self.n)
        if dual:
            return SubspaceBasis(eye, jac.T.copy())
        return SubspaceBasis(eye, jac)

    def census(self, x: np.ndarray, y: np.ndarray) -> dict[str, int]:
        return {}


def smooth_map(
    f: Callable[[np.ndarray], np.ndarray], jacobian: Callable[[np.ndarray], Any], n: int
) -> SmoothMap:
    return SmoothMap(f, jacobian, n)


def zero_map(n: int) -> SmoothMap:
    """
    Q = {0}; resolvent w / gamma and subspace rge(I, 0)
    """
    zeros = np.zeros((n, n))
    return SmoothMap(lambda v: np.zeros(n), lambda v: zeros, n)
