# -*- test-case-name: scdnewton.test.test_newton -*-
# Copyright (c) 2024 The scdnewton developers
# See the LICENSE file for more information

"""
Newton driver for generalized equations 0 in f(x) + Q(x).

The equation is decoupled into 0 in (f(x) + Q(d), x - d). Every iteration
projects the iterate onto the graph of the decoupled mapping through the
resolvent of Q (approximation step), picks one derivative subspace of Q at
the projected point and solves a reduced n x n linear system for the
direction (Newton step), followed by a non-monotone line search.
"""

from __future__ import annotations

import configparser
from collections.abc import Callable, Iterator
from typing import Any

import attrs
import numpy as np
import scipy.sparse as sp

from twisted.python import log

from scdnewton.core.linalg import (
    SingularFactor,
    Stagnation,
    ZeroPivot,
    direct_solve,
    estimate_gamma,
    ilu_gmres_solve,
)
from scdnewton.core.scd import GraphPointGE, GraphViolation, IScdMapping
from scdnewton.core.subspaces import SubspaceBasis

VARIANTS = ("dual_a", "primal_b")
LINEAR_SOLVERS = ("auto", "direct", "gmres")

# adaptive GMRES tolerances never go below this
MIN_GMRES_TOL = 1e-10
# an inexact direction cut below this step length is recomputed
SHORT_STEP = 0.125
TIGHTEN = 0.01
# components of z this small relative to w are rounding
ROUNDOFF = 4.0 * float(np.finfo(float).eps)


class SolverFailure(Exception):
    """
    Base class of solver failures; carries the trace recorded so far
    """

    def __init__(self, message: str, trace: SolverTrace | None = None) -> None:
        super().__init__(message)
        self.trace = trace


class SingularSystem(SolverFailure):
    """
    The reduced Newton system could not be solved
    """


class LineSearchFailed(SolverFailure):
    """
    No step length in the trial sequence was accepted
    """

    def __init__(
        self, current: float, best: float, trace: SolverTrace | None = None
    ) -> None:
        super().__init__(
            f"line search failed: residual {current:.6e}, best trial {best:.6e}", trace
        )
        self.current = current
        self.best = best


class MaxItersExceeded(SolverFailure):
    """
    The residual did not drop below the tolerance in max_iters iterations
    """


class OffGraph(SolverFailure):
    """
    An approximation step produced a point the mapping rejects as off its graph
    """


@attrs.frozen
class SolverConfig:
    """
    Solver settings; gamma None means five power iterations on the
    Jacobian at the start vector.

    With gmres_adaptive the GMRES tolerance of iteration k is
    min(gmres_tol, max(MIN_GMRES_TOL, ||y_k|| / ||y_0||)), so gmres_tol is
    an upper bound; off, every solve uses gmres_tol.
    """

    gamma: float | None = attrs.field(default=None)
    newton_rel_tol: float = attrs.field(default=1e-12, validator=attrs.validators.gt(0))
    max_iters: int = attrs.field(default=100, validator=attrs.validators.ge(1))
    variant: str = attrs.field(default="dual_a", validator=attrs.validators.in_(VARIANTS))
    linear_solver: str = attrs.field(
        default="auto", validator=attrs.validators.in_(LINEAR_SOLVERS)
    )
    gmres_tol: float = attrs.field(default=0.1, validator=attrs.validators.gt(0))
    gmres_restart: int = attrs.field(default=200, validator=attrs.validators.ge(1))
    gmres_max_inner: int = attrs.field(default=2000, validator=attrs.validators.ge(1))
    gmres_adaptive: bool = True
    direct_max_dim: int = 5000
    line_search: bool = True
    max_trials: int = attrs.field(default=20, validator=attrs.validators.ge(1))
    keep_iterates: bool = False

    @gamma.validator
    def _check_gamma(self, attribute: attrs.Attribute, value: float | None) -> None:
        if value is not None and not value > 0:
            raise ValueError("gamma must be positive or None")

    @classmethod
    def from_config(cls, parser: configparser.ConfigParser, **overrides: Any) -> SolverConfig:
        """
        Read [solver] and [gmres] from a config parser
        """
        gamma = parser.get("solver", "gamma", fallback="auto")
        values: dict[str, Any] = {
            "gamma": None if gamma.strip().lower() == "auto" else float(gamma),
            "newton_rel_tol": parser.getfloat("solver", "newton_rel_tol", fallback=1e-12),
            "max_iters": parser.getint("solver", "max_iters", fallback=100),
            "variant": parser.get("solver", "variant", fallback="dual_a"),
            "linear_solver": parser.get("solver", "linear_solver", fallback="auto"),
            "direct_max_dim": parser.getint("solver", "direct_max_dim", fallback=5000),
            "line_search": parser.getboolean("solver", "line_search", fallback=True),
            "max_trials": parser.getint("solver", "max_trials", fallback=20),
            "keep_iterates": parser.getboolean("solver", "keep_iterates", fallback=False),
            "gmres_tol": parser.getfloat("gmres", "tol", fallback=0.1),
            "gmres_restart": parser.getint("gmres", "restart", fallback=200),
            "gmres_max_inner": parser.getint("gmres", "max_inner", fallback=2000),
            "gmres_adaptive": parser.getboolean("gmres", "adaptive", fallback=True),
        }
        values.update(overrides)
        return cls(**values)


@attrs.frozen
class GeProblem:
    """
    0 in f(x) + Q(x); the Jacobian may be dense or scipy sparse
    """

    f_eval: Callable[[np.ndarray], np.ndarray]
    f_jacobian: Callable[[np.ndarray], Any]
    q: IScdMapping


@attrs.frozen(eq=False)
class Direction:
    """
    Newton direction for x and the eliminated direction for d
    """

    dx: np.ndarray
    dd: np.ndarray
    inner_iters: int


@attrs.frozen(eq=False)
class IterationRecord:
    iteration: int
    residual: float
    alpha: float
    inner_iters: int
    census: dict[str, int]
    trials: int
    point: GraphPointGE | None = None


@attrs.define
class SolverTrace:
    """
    Per-iteration history of a solve. Record 0 holds the start point.
    """

    gamma: float
    variant: str
    records: list[IterationRecord] = attrs.Factory(list)
    status: str = "running"
    final_graph_residual: float = float("nan")
    final_point: GraphPointGE | None = None

    @property
    def iterations(self) -> int:
        return len(self.records) - 1

    @property
    def initial_residual(self) -> float:
        return self.records[0].residual

    @property
    def final_residual(self) -> float:
        return self.records[-1].residual

    @property
    def residual_factor(self) -> float:
        if self.initial_residual == 0.0:
            return 0.0
        return self.final_residual / self.initial_residual

    @property
    def total_inner_iters(self) -> int:
        return sum(r.inner_iters for r in self.records)

    def eta_ratios(self, x_bar: np.ndarray) -> list[float]:
        """
        ||((x, d), y) - ((x_bar, x_bar), 0)|| / ||x - x_bar|| for every kept
        iterate that differs from x_bar
        """
        ratios = []
        for record in self.records:
            gp = record.point
            if gp is None:
                continue
            dist = float(np.linalg.norm(gp.x_hat - x_bar))
            if dist == 0.0:
                continue
            total = np.sqrt(
                dist**2
                + np.linalg.norm(gp.d_hat - x_bar) ** 2
                + np.linalg.norm(gp.y1) ** 2
                + np.linalg.norm(gp.y2) ** 2
            )
            ratios.append(float(total / dist))
        return ratios


def approximation_step(x: np.ndarray, gamma: float, prob: GeProblem) -> GraphPointGE:
    """
    d = (gamma I + Q)^-1 (gamma x - f(x)), y = (gamma (x - d), x - d).

    The Q-side graph point is (d, z) with z = gamma x - f(x) - gamma d.
    """
    x = np.asarray(x, dtype=float)
    w = gamma * x - np.asarray(prob.f_eval(x), dtype=float)
    d_hat = prob.q.resolvent(gamma, w)
    y2 = x - d_hat
    z = w - gamma * d_hat
    # w - gamma (w / gamma) is only zero up to rounding
    z[np.abs(z) <= ROUNDOFF * np.abs(w)] = 0.0
    return GraphPointGE(x_hat=x, d_hat=d_hat, y1=gamma * y2, y2=y2, z=z, gamma=gamma)


def _align(jac: Any, basis: SubspaceBasis) -> tuple[Any, Any, Any]:
    if sp.issparse(jac):
        return sp.csr_matrix(jac), sp.csr_matrix(basis.a), sp.csr_matrix(basis.b)
    dense = basis.dense()
    return np.atleast_2d(np.asarray(jac, dtype=float)), dense.a, dense.b


def equilibrate(matrix: Any, rhs: np.ndarray) -> tuple[Any, np.ndarray]:
    """
    Scale every row of (matrix, rhs) to unit Euclidean norm; zero rows are
    left alone. The solution is unchanged.
    """
    if sp.issparse(matrix):
        m = sp.csr_matrix(matrix)
        norms = np.sqrt(np.asarray(m.multiply(m).sum(axis=1)).ravel())
    else:
        m = np.atleast_2d(np.asarray(matrix, dtype=float))
        norms = np.linalg.norm(m, axis=1)
    scale = np.ones_like(norms)
    nonzero = norms > 0.0
    scale[nonzero] = 1.0 / norms[nonzero]
    if sp.issparse(m):
        return sp.csr_matrix(sp.diags(scale) @ m), scale * rhs
    return scale[:, None] * m, scale * rhs


def _solve_linear(matrix: Any, rhs: np.ndarray, cfg: SolverConfig) -> tuple[np.ndarray, int]:
    n = rhs.shape[0]
    method = cfg.linear_solver
    if method == "auto":
        method = "direct" if n <= cfg.direct_max_dim else "gmres"
    try:
        if method == "direct":
            return direct_solve(matrix, rhs), 0
        # stiffness rows dwarf the contact rows; the GMRES test is relative
        scaled, scaled_rhs = equilibrate(matrix, rhs)
        return ilu_gmres_solve(
            scaled,
            scaled_rhs,
            tol=cfg.gmres_tol,
            restart=cfg.gmres_restart,
            max_inner=cfg.gmres_max_inner,
        )
    except (SingularFactor, Stagnation, ZeroPivot) as e:
        raise SingularSystem(f"{method} solve failed: {e}") from e


def newton_direction_dual(gp: GraphPointGE, prob: GeProblem, cfg: SolverConfig) -> Direction:
    """
    (Y*^T grad f + X*^T) dx = -(Y*^T y1 + X*^T y2) for (Y*, X*) in S* Q(d, z)
    """
    basis = prob.q.select_subspace(gp.d_hat, gp.z, True)
    jac, y_star, x_star = _align(prob.f_jacobian(gp.x_hat), basis)
    matrix = y_star.T @ jac + x_star.T
    rhs = -(y_star.T @ gp.y1 + x_star.T @ gp.y2)
    dx, inner = _solve_linear(matrix, np.asarray(rhs, dtype=float).ravel(), cfg)
    return Direction(dx=dx, dd=dx + gp.y2, inner_iters=inner)


def newton_direction_primal(gp: GraphPointGE, prob: GeProblem, cfg: SolverConfig) -> Direction:
    """
    (grad f X + Y) p = grad f y2 - y1 for (X, Y) in S Q(d, z);
    dx = X p - y2 and dd = X p.
    """
    basis = prob.q.select_subspace(gp.d_hat, gp.z, False)
    jac, x_basis, y_basis = _align(prob.f_jacobian(gp.x_hat), basis)
    matrix = jac @ x_basis + y_basis
    rhs = jac @ gp.y2 - gp.y1
    p, inner = _solve_linear(matrix, np.asarray(rhs, dtype=float).ravel(), cfg)
    dd = np.asarray(x_basis @ p, dtype=float).ravel()
    return Direction(dx=dd - gp.y2, dd=dd, inner_iters=inner)


def step_lengths() -> Iterator[float]:
    """
    1, 1/2, 1/4, 1/8, 1/32, 1/128, then 0.1/128, 0.01/128, ...
    """
    yield from (1.0, 0.5, 0.25, 0.125, 1.0 / 32.0, 1.0 / 128.0)
    alpha = 0.1 / 128.0
    while True:
        yield alpha
        alpha *= 0.1


def acceptance_bound(alpha: float, k: int) -> float:
    return 1.0 - 0.1 * alpha + 0.1 / (k + 1)


def line_search(
    x: np.ndarray,
    dx: np.ndarray,
    k: int,
    prob: GeProblem,
    cfg: SolverConfig,
    gamma: float,
    residual: float,
) -> tuple[float, GraphPointGE, int]:
    """
    First step length alpha whose trial x + alpha dx satisfies
    ||y_trial|| <= (1 - 0.1 alpha + 0.1 / (k + 1)) ||y||.

    @return: (alpha, approximation step at the trial point, trials used)
    @raise LineSearchFailed: after cfg.max_trials rejected trials
    """
    best = float("inf")
    for trial, alpha in enumerate(step_lengths(), start=1):
        if trial > cfg.max_trials:
            raise LineSearchFailed(residual, best)
        gp = approximation_step(x + alpha * dx, gamma, prob)
        best = min(best, gp.residual)
        if gp.residual <= acceptance_bound(alpha, k) * residual:
            return alpha, gp, trial
    raise AssertionError("unreachable")


FAILURE_STATUS: dict[type[SolverFailure], str] = {
    SingularSystem: "singular",
    LineSearchFailed: "line_search_failed",
    OffGraph: "off_graph",
}


def forcing_tolerance(cfg: SolverConfig, residual: float, initial: float) -> float:
    """
    GMRES tolerance for an iterate with residual ||y|| after a start
    residual ||y_0||
    """
    if not cfg.gmres_adaptive or initial == 0.0:
        return cfg.gmres_tol
    return min(cfg.gmres_tol, max(MIN_GMRES_TOL, residual / initial))


def newton_step(
    gp: GraphPointGE,
    k: int,
    prob: GeProblem,
    cfg: SolverConfig,
    tol: float,
) -> tuple[float, GraphPointGE, int, int]:
    """
    Direction plus line search from gp with GMRES tolerance tol.

    With cfg.gmres_adaptive, a GMRES direction whose line search fails or
    stops below SHORT_STEP is recomputed with tol scaled by TIGHTEN, down
    to MIN_GMRES_TOL; the candidate with the smallest residual is taken.

    @return: (alpha, next point, trials, inner iterations of all attempts)
    @raise LineSearchFailed: when no attempt found a step
    """
    direction_for = newton_direction_dual if cfg.variant == "dual_a" else newton_direction_primal
    best: tuple[float, GraphPointGE] | None = None
    failure: LineSearchFailed | None = None
    inner = trials = 0
    while True:
        direction = direction_for(gp, prob, attrs.evolve(cfg, gmres_tol=tol))
        inner += direction.inner_iters
        short = False
        if cfg.line_search:
            try:
                alpha, gp_next, used = line_search(
                    gp.x_hat, direction.dx, k, prob, cfg, gp.gamma, gp.residual
                )
            except LineSearchFailed as e:
                failure = e
                trials += cfg.max_trials
                short = True
            else:
                trials += used
                short = alpha < SHORT_STEP
                if best is None or gp_next.residual < best[1].residual:
                    best = (alpha, gp_next)
        else:
            trials += 1
            best = (1.0, approximation_step(gp.x_hat + direction.dx, gp.gamma, prob))
        retry = cfg.gmres_adaptive and direction.inner_iters > 0 and tol > MIN_GMRES_TOL
        if not (short and retry):
            break
        tol = max(MIN_GMRES_TOL, tol * TIGHTEN)
        log.msg(
            eventid="scdnewton.solver.tighten",
            format="iteration %(iteration)d: short step, GMRES tolerance now %(tol).1e",
            iteration=k,
            tol=tol,
        )
    if best is None:
        assert failure is not None
        raise failure
    return best[0], best[1], trials, inner


def _census(prob: GeProblem, gp: GraphPointGE) -> dict[str, int]:
    return prob.q.census(gp.d_hat, gp.z)


def solve(
    prob: GeProblem, x0: np.ndarray, cfg: SolverConfig | None = None
) -> tuple[np.ndarray, SolverTrace]:
    """
    Run the Newton iteration from x0 until the residual ||y|| has dropped
    by cfg.newton_rel_tol.

    @raise SingularSystem, LineSearchFailed, OffGraph, MaxItersExceeded: with
        the trace
    """
    cfg = cfg or SolverConfig()
    x = np.asarray(x0, dtype=float).copy()
    gamma = cfg.gamma if cfg.gamma is not None else estimate_gamma(prob.f_jacobian(x))
    if not gamma > 0:
        raise SingularSystem(f"gamma estimate {gamma!r} is not positive")
    trace = SolverTrace(gamma=gamma, variant=cfg.variant)
    log.msg(
        eventid="scdnewton.solver.start",
        format="Newton solve: n=%(n)d gamma=%(gamma).6g variant=%(variant)s solver=%(solver)s",
        n=x.shape[0],
        gamma=gamma,
        variant=cfg.variant,
        solver=cfg.linear_solver,
    )

    def record(k: int, gp: GraphPointGE, alpha: float, inner: int, trials: int) -> None:
        census: dict[str, int] = {}
        try:
            census = _census(prob, gp)
        finally:
            trace.records.append(
                IterationRecord(
                    iteration=k,
                    residual=gp.residual,
                    alpha=alpha,
                    inner_iters=inner,
                    census=census,
                    trials=trials,
                    point=gp if cfg.keep_iterates else None,
                )
            )
        log.msg(
            eventid="scdnewton.solver.iteration",
            format="iteration %(iteration)d: residual %(residual).6e alpha %(alpha)g inner %(gmres_iters)d",
            iteration=k,
            residual=gp.residual,
            alpha=alpha,
            gmres_iters=inner,
            census=census,
            trials=trials,
        )

    def finish(status: str, gp: GraphPointGE) -> None:
        trace.status = status
        trace.final_point = gp
        trace.final_graph_residual = prob.q.graph_residual(gp.d_hat, gp.z)
        log.msg(
            eventid="scdnewton.solver.finished",
            format="Newton solve %(status)s after %(iterations)d iterations, residual factor %(factor).3e",
            status=status,
            iterations=trace.iterations,
            factor=trace.residual_factor,
            inner_total=trace.total_inner_iters,
        )

    gp = approximation_step(x, gamma, prob)
    initial = gp.residual
    try:
        try:
            record(0, gp, 0.0, 0, 0)
            if initial == 0.0:
                finish("converged", gp)
                return x, trace
            for k in range(cfg.max_iters):
                tol = forcing_tolerance(cfg, gp.residual, initial)
                alpha, gp, trials, inner = newton_step(gp, k, prob, cfg, tol)
                x = gp.x_hat
                record(k + 1, gp, alpha, inner, trials)
                if gp.residual <= cfg.newton_rel_tol * initial:
                    finish("converged", gp)
                    return x, trace
        except GraphViolation as e:
            raise OffGraph(str(e)) from e
    except SolverFailure as e:
        e.trace = trace
        finish(FAILURE_STATUS.get(type(e), "singular"), gp)
        raise

    finish("max_iters", gp)
    raise MaxItersExceeded(
        f"residual factor {trace.residual_factor:.3e} after {cfg.max_iters} iterations", trace
    )
