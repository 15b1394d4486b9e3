from __future__ import annotations

import itertools
import unittest

import numpy as np
import scipy.sparse as sp

from twisted.python import log

from scdnewton.core.coulomb import product_map, resolvent_lipschitz
from scdnewton.core.newton import (
    MIN_GMRES_TOL,
    GeProblem,
    IterationRecord,
    LineSearchFailed,
    MaxItersExceeded,
    OffGraph,
    SingularSystem,
    SolverConfig,
    SolverTrace,
    acceptance_bound,
    approximation_step,
    equilibrate,
    forcing_tolerance,
    line_search,
    newton_direction_dual,
    newton_direction_primal,
    solve,
    step_lengths,
)
from scdnewton.core.scd import GraphViolation, NormalConeOrthant, normal_cone_rplus, zero_map

F = 0.23


def complementarity_1d() -> GeProblem:
    # 0 in x + 1 + N_R+(x), solved by x = 0
    return GeProblem(lambda x: x + 1.0, lambda x: np.eye(1), normal_cone_rplus())


def cubic() -> GeProblem:
    return GeProblem(lambda x: x**3 + x - 2.0, lambda x: np.diag(3.0 * x**2 + 1.0), zero_map(1))


def lcp(n: int, sparse: bool = False) -> tuple[GeProblem, np.ndarray, np.ndarray]:
    m = sp.diags([-1.0, 4.0, -1.0], [-1, 0, 1], shape=(n, n), format="csr")
    c = np.random.default_rng(n).uniform(-1.0, 1.0, n)
    jac = m if sparse else m.toarray()
    return GeProblem(lambda x: m @ x + c, lambda x: jac, NormalConeOrthant(n)), m.toarray(), c


def contact_problem(
    seed: int, p: int = 4, tail: int = 0, scale: float = 1.0
) -> tuple[GeProblem, np.ndarray, np.ndarray]:
    # 0 in a x - l + Q(x) with a = 2 I plus a small symmetric coupling
    rng = np.random.default_rng(seed)
    n = 3 * p + tail
    coupling = rng.standard_normal((n, n))
    a = scale * (2.0 * np.eye(n) + 0.02 * (coupling + coupling.T))
    l = scale * rng.uniform(-1.0, 1.0, n)
    return GeProblem(lambda x: a @ x - l, lambda x: a, product_map(p, tail, F)), a, l


def stiff_contact_problem(m: int = 6, p: int = 4) -> tuple[GeProblem, sp.csr_matrix, np.ndarray]:
    # stiffness rows of order 1e3 next to unit rows from the contact cells
    t = sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(m, m))
    k = sp.csr_matrix(
        1e3 * (sp.kron(t, sp.eye(m)) + sp.kron(sp.eye(m), t) + 0.5 * sp.eye(m * m))
    )
    l = 500.0 * np.random.default_rng(3).uniform(-1.0, 1.0, m * m)
    q = product_map(p, m * m - 3 * p, F)
    return GeProblem(lambda x: k @ x - l, lambda x: k, q), k, l


class RejectingOrthant(NormalConeOrthant):
    def census(self, x: np.ndarray, y: np.ndarray) -> dict[str, int]:
        raise GraphViolation("x >= 0", 1.0)


class ApproximationStepTestCase(unittest.TestCase):
    """Tests for approximation_step in scdnewton/core/newton.py."""

    def test_complementarity(self) -> None:
        gp = approximation_step(np.array([1.0]), 1.0, complementarity_1d())
        np.testing.assert_array_equal(gp.d_hat, [0.0])
        np.testing.assert_array_equal(gp.y1, [1.0])
        np.testing.assert_array_equal(gp.y2, [1.0])
        np.testing.assert_array_equal(gp.z, [-1.0])
        self.assertAlmostEqual(gp.residual, np.sqrt(2.0))

    def test_solution_has_zero_residual(self) -> None:
        gp = approximation_step(np.array([0.0]), 3.0, complementarity_1d())
        self.assertEqual(gp.residual, 0.0)

    def test_graph_point(self) -> None:
        prob, _, _ = lcp(6)
        x = np.random.default_rng(1).standard_normal(6)
        gp = approximation_step(x, 2.0, prob)
        self.assertLess(prob.q.graph_residual(gp.d_hat, gp.z), 1e-14)
        # z = gamma x - f(x) - gamma d, so f(x) + z = y1
        np.testing.assert_allclose(prob.f_eval(x) + gp.z, gp.y1, atol=1e-12)

    def test_unconstrained_rows_at_scale(self) -> None:
        prob, a, _ = contact_problem(4, p=2, tail=5, scale=1e9)
        x = np.random.default_rng(4).standard_normal(11)
        gp = approximation_step(x, 3.3e9, prob)
        np.testing.assert_array_equal(gp.z[6:], np.zeros(5))
        self.assertEqual(sum(prob.q.census(gp.d_hat, gp.z).values()), 2)


class DirectionTestCase(unittest.TestCase):
    """Tests for the Newton directions in scdnewton/core/newton.py."""

    def test_complementarity(self) -> None:
        prob = complementarity_1d()
        gp = approximation_step(np.array([1.0]), 1.0, prob)
        for direction_for in (newton_direction_dual, newton_direction_primal):
            direction = direction_for(gp, prob, SolverConfig())
            np.testing.assert_allclose(direction.dx, [-1.0])
            np.testing.assert_allclose(direction.dd, [0.0], atol=1e-15)
            self.assertEqual(direction.inner_iters, 0)

    def test_variants_agree(self) -> None:
        prob, _, _ = lcp(10)
        rng = np.random.default_rng(5)
        cfg = SolverConfig()
        for _ in range(5):
            gp = approximation_step(rng.standard_normal(10), 4.0, prob)
            dual = newton_direction_dual(gp, prob, cfg)
            primal = newton_direction_primal(gp, prob, cfg)
            np.testing.assert_allclose(dual.dx, primal.dx, atol=1e-10)
            np.testing.assert_allclose(dual.dd, primal.dd, atol=1e-10)

    def test_singular(self) -> None:
        prob = GeProblem(lambda x: np.ones(1), lambda x: np.zeros((1, 1)), zero_map(1))
        gp = approximation_step(np.array([0.0]), 1.0, prob)
        with self.assertRaises(SingularSystem):
            newton_direction_dual(gp, prob, SolverConfig())

    def test_contact_variants_agree(self) -> None:
        cfg = SolverConfig()
        strata: dict[str, int] = {}
        for seed in range(50):
            prob, a, _ = contact_problem(seed, p=4, tail=3)
            x = np.random.default_rng(1000 + seed).standard_normal(a.shape[0])
            gp = approximation_step(x, 4.0, prob)
            dual = newton_direction_dual(gp, prob, cfg)
            primal = newton_direction_primal(gp, prob, cfg)
            self.assertLessEqual(
                np.linalg.norm(dual.dx - primal.dx), 1e-8 * (1.0 + np.linalg.norm(dual.dx))
            )
            for name, count in prob.q.census(gp.d_hat, gp.z).items():
                strata[name] = strata.get(name, 0) + count
        self.assertGreater(strata["M1"], 0)
        self.assertGreater(strata["L"], 0)


class ForcingTestCase(unittest.TestCase):
    """Tests for the GMRES tolerance control in scdnewton/core/newton.py."""

    def test_forcing_tolerance(self) -> None:
        cfg = SolverConfig(gmres_tol=0.1)
        self.assertEqual(forcing_tolerance(cfg, 2.0, 2.0), 0.1)
        self.assertAlmostEqual(forcing_tolerance(cfg, 1e-3, 1.0), 1e-3)
        self.assertEqual(forcing_tolerance(cfg, 1e-20, 1.0), MIN_GMRES_TOL)
        # the configured tolerance is an upper bound only
        self.assertEqual(forcing_tolerance(SolverConfig(gmres_tol=1e-12), 0.5, 1.0), 1e-12)
        fixed = SolverConfig(gmres_tol=0.1, gmres_adaptive=False)
        self.assertEqual(forcing_tolerance(fixed, 1e-6, 1.0), 0.1)

    def test_equilibrate(self) -> None:
        m = np.array([[1e4, 2e4, 0.0], [0.0, 0.0, 0.0], [0.0, 3.0, 4.0]])
        rhs = np.array([5e4, 7.0, 10.0])
        for matrix in (m, sp.csr_matrix(m)):
            scaled, scaled_rhs = equilibrate(matrix, rhs)
            dense = scaled.toarray() if sp.issparse(scaled) else scaled
            np.testing.assert_allclose(np.linalg.norm(dense, axis=1), [1.0, 0.0, 1.0])
            np.testing.assert_allclose(scaled_rhs, [5e4 / np.sqrt(5e8), 7.0, 2.0])

    def test_same_solution(self) -> None:
        rng = np.random.default_rng(8)
        m = np.diag([1e6, 1.0, 1e-3]) @ (rng.standard_normal((3, 3)) + 3.0 * np.eye(3))
        rhs = rng.standard_normal(3)
        scaled, scaled_rhs = equilibrate(m, rhs)
        np.testing.assert_allclose(
            np.linalg.solve(scaled, scaled_rhs), np.linalg.solve(m, rhs), rtol=1e-8
        )


class LineSearchTestCase(unittest.TestCase):
    """Tests for the step length rule in scdnewton/core/newton.py."""

    def test_step_lengths(self) -> None:
        steps = list(itertools.islice(step_lengths(), 8))
        np.testing.assert_allclose(
            steps, [1.0, 0.5, 0.25, 0.125, 1 / 32, 1 / 128, 0.1 / 128, 0.01 / 128]
        )

    def test_acceptance_bound(self) -> None:
        self.assertAlmostEqual(acceptance_bound(1.0, 0), 1.0)
        self.assertAlmostEqual(acceptance_bound(0.5, 9), 0.96)
        self.assertLess(acceptance_bound(1.0, 1000), 0.91)

    def test_full_step(self) -> None:
        alpha, gp, trials = line_search(
            np.array([1.0]), np.array([-1.0]), 0, complementarity_1d(), SolverConfig(), 1.0, np.sqrt(2.0)
        )
        self.assertEqual((alpha, trials), (1.0, 1))
        self.assertEqual(gp.residual, 0.0)

    def test_ascent_direction(self) -> None:
        # the residual at x >= 0 is sqrt(2) x, so every step up is rejected
        with self.assertRaises(LineSearchFailed):
            line_search(
                np.array([1.0]), np.array([1.0]), 0, complementarity_1d(), SolverConfig(max_trials=3), 1.0, np.sqrt(2.0)
            )


class SolveTestCase(unittest.TestCase):
    """Tests for solve in scdnewton/core/newton.py."""

    def test_complementarity_one_step(self) -> None:
        for variant in ("dual_a", "primal_b"):
            x, trace = solve(
                complementarity_1d(), np.array([1.0]), SolverConfig(gamma=1.0, variant=variant, keep_iterates=True)
            )
            np.testing.assert_allclose(x, [0.0], atol=1e-15)
            self.assertEqual(trace.status, "converged")
            self.assertEqual(trace.iterations, 1)
            self.assertAlmostEqual(trace.initial_residual, np.sqrt(2.0))
            self.assertEqual(trace.final_residual, 0.0)
            self.assertEqual(trace.residual_factor, 0.0)
            self.assertEqual(trace.records[1].alpha, 1.0)
            self.assertEqual(trace.total_inner_iters, 0)
            # only the start point differs from the solution
            ratios = trace.eta_ratios(np.zeros(1))
            self.assertEqual(len(ratios), 1)
            self.assertAlmostEqual(ratios[0], np.sqrt(3.0))

    def test_complementarity_from_two(self) -> None:
        for variant in ("dual_a", "primal_b"):
            x, trace = solve(complementarity_1d(), np.array([2.0]), SolverConfig(gamma=1.0, variant=variant))
            np.testing.assert_allclose(x, [0.0], atol=1e-15)
            self.assertEqual(trace.iterations, 1)
            self.assertAlmostEqual(trace.initial_residual, 2.0 * np.sqrt(2.0))

    def test_shifted_complementarity(self) -> None:
        # 0 in x - 1 + N_R+(x) is solved by the interior point x = 1
        prob = GeProblem(lambda x: x - 1.0, lambda x: np.eye(1), normal_cone_rplus())
        for cfg in (SolverConfig(gamma=1.0), SolverConfig(variant="primal_b"), SolverConfig()):
            x, trace = solve(prob, np.array([2.0]), cfg)
            np.testing.assert_allclose(x, [1.0], atol=1e-15)
            self.assertEqual(trace.status, "converged")
            self.assertEqual(trace.iterations, 1)
            self.assertEqual(trace.gamma, 1.0)
            self.assertEqual(trace.final_residual, 0.0)

    def test_start_at_solution(self) -> None:
        x, trace = solve(complementarity_1d(), np.array([0.0]), SolverConfig(gamma=1.0))
        self.assertEqual(trace.iterations, 0)
        self.assertEqual(trace.status, "converged")
        self.assertEqual(trace.residual_factor, 0.0)

    def test_classical_newton(self) -> None:
        x, trace = solve(cubic(), np.array([2.0]), SolverConfig(gamma=1.0))
        np.testing.assert_allclose(x, [1.0], atol=1e-10)
        self.assertEqual(trace.status, "converged")
        residuals = [r.residual for r in trace.records]
        # quadratic convergence: the last ratios collapse
        ratios = [b / a for a, b in zip(residuals, residuals[1:]) if a > 0]
        self.assertLess(min(ratios), 1e-3)

    def test_auto_gamma(self) -> None:
        _, trace = solve(complementarity_1d(), np.array([1.0]))
        self.assertEqual(trace.gamma, 1.0)
        self.assertEqual(trace.status, "converged")

    def test_lcp_variants(self) -> None:
        prob, m, c = lcp(20)
        solutions = []
        for variant in ("dual_a", "primal_b"):
            x, trace = solve(prob, np.ones(20), SolverConfig(gamma=4.0, variant=variant, line_search=False, max_iters=30))
            self.assertEqual(trace.status, "converged")
            solutions.append(x)
        np.testing.assert_allclose(solutions[0], solutions[1], atol=1e-12)
        x = solutions[0]
        w = m @ x + c
        self.assertGreaterEqual(x.min(), -1e-12)
        self.assertGreaterEqual(w.min(), -1e-10)
        self.assertLess(np.abs(x * w).max(), 1e-10)

    def test_sparse_gmres(self) -> None:
        prob, _, _ = lcp(20, sparse=True)
        dense, _, _ = lcp(20)
        cfg = SolverConfig(gamma=4.0, line_search=False, max_iters=30)
        x_direct, _ = solve(dense, np.ones(20), cfg)
        x_gmres, trace = solve(
            prob,
            np.ones(20),
            SolverConfig(gamma=4.0, line_search=False, max_iters=30, linear_solver="gmres", gmres_tol=1e-12, newton_rel_tol=1e-10),
        )
        np.testing.assert_allclose(x_gmres, x_direct, atol=1e-8)
        self.assertGreater(trace.total_inner_iters, 0)

    def test_contact_cells(self) -> None:
        rng = np.random.default_rng(17)
        p = 4
        coupling = rng.standard_normal((3 * p, 3 * p))
        a = 2.0 * np.eye(3 * p) + 0.02 * (coupling + coupling.T)
        l = rng.uniform(-1.0, 1.0, 3 * p)
        prob = GeProblem(lambda x: a @ x - l, lambda x: a, product_map(p, 0, 0.23))
        x, trace = solve(prob, np.zeros(3 * p), SolverConfig(newton_rel_tol=1e-10, max_iters=50))
        self.assertEqual(trace.status, "converged")
        self.assertLess(trace.final_graph_residual, 1e-10)
        self.assertEqual(sum(trace.records[-1].census.values()), p)
        # x solves l - a x in Q(x) up to the stopping tolerance
        self.assertLess(prob.q.graph_residual(x, l - a @ x), 1e-8)

    def test_superlinear_on_contact_cells(self) -> None:
        for seed in range(20):
            with self.subTest(seed=seed):
                prob, a, l = contact_problem(seed, p=2 + seed % 4, tail=seed % 3)
                x_bar, trace = solve(
                    prob, np.zeros(a.shape[0]), SolverConfig(keep_iterates=True, max_iters=50)
                )
                self.assertEqual(trace.status, "converged")
                self.assertLess(prob.q.graph_residual(x_bar, l - a @ x_bar), 1e-9)
                errors = [float(np.linalg.norm(r.point.x_hat - x_bar)) for r in trace.records]
                floor = 1e-6 * (1.0 + float(np.linalg.norm(x_bar)))
                ratios = [e1 / e0 for e0, e1 in zip(errors, errors[1:]) if e0 > floor]
                if not ratios:
                    continue
                self.assertLess(ratios[-1], 0.1)
                if len(ratios) > 1:
                    self.assertLessEqual(ratios[-1], ratios[-2])

    def test_approximation_step_bound(self) -> None:
        # ||((x, d), y) - ((x_bar, x_bar), 0)|| <= eta ||x - x_bar|| with
        # eta = (2 + gamma)(1 + L_S (1 + L_f / gamma))
        for seed in range(10):
            with self.subTest(seed=seed):
                prob, a, _ = contact_problem(seed, p=3, tail=2)
                start = np.random.default_rng(seed).standard_normal(a.shape[0])
                x_bar, trace = solve(prob, start, SolverConfig(keep_iterates=True))
                gamma = trace.gamma
                eta = (2.0 + gamma) * (
                    1.0 + resolvent_lipschitz(F) * (1.0 + np.linalg.norm(a, 2) / gamma)
                )
                dists = [float(np.linalg.norm(r.point.x_hat - x_bar)) for r in trace.records]
                ratios = trace.eta_ratios(x_bar)
                checked = [r for r, d in zip(ratios, [d for d in dists if d != 0.0]) if d > 1e-9]
                self.assertTrue(checked)
                self.assertLessEqual(max(checked), eta)

    def test_approximation_step_bound_1d(self) -> None:
        prob = complementarity_1d()
        for gamma in (0.5, 1.0, 4.0):
            records = [
                IterationRecord(i, 0.0, 0.0, 0, {}, 0, approximation_step(np.array([x]), gamma, prob))
                for i, x in enumerate(np.r_[np.linspace(-1.0, -0.1, 10), np.linspace(0.1, 1.0, 10)])
            ]
            trace = SolverTrace(gamma=gamma, variant="dual_a", records=records)
            ratios = trace.eta_ratios(np.zeros(1))
            self.assertEqual(len(ratios), 20)
            # f and the resolvent of the normal cone are both 1-Lipschitz
            self.assertLessEqual(max(ratios), (2.0 + gamma) * (2.0 + 1.0 / gamma))

    def test_large_scale_contact(self) -> None:
        cfg = SolverConfig(newton_rel_tol=1e-10, max_iters=50)
        prob, _, _ = contact_problem(23, p=4, tail=3)
        big, _, _ = contact_problem(23, p=4, tail=3, scale=1e9)
        x, trace = solve(prob, np.zeros(15), cfg)
        x_big, trace_big = solve(big, np.zeros(15), cfg)
        self.assertEqual(trace_big.status, "converged")
        self.assertEqual(sum(trace_big.records[-1].census.values()), 4)
        self.assertAlmostEqual(trace_big.gamma / trace.gamma, 1e9, delta=1e-3)
        np.testing.assert_allclose(x_big, x, atol=1e-7)

    def test_off_graph(self) -> None:
        prob = GeProblem(lambda x: x + 1.0, lambda x: np.eye(1), RejectingOrthant(1))
        with self.assertRaises(OffGraph) as cm:
            solve(prob, np.array([1.0]), SolverConfig(gamma=1.0))
        self.assertIsInstance(cm.exception.__cause__, GraphViolation)
        trace = cm.exception.trace
        self.assertEqual(trace.status, "off_graph")
        self.assertEqual(trace.iterations, 0)
        self.assertEqual(trace.records[0].census, {})

    def test_gmres_on_stiff_rows(self) -> None:
        prob, k, l = stiff_contact_problem()
        _, direct = solve(prob, np.zeros(36), SolverConfig(linear_solver="direct", newton_rel_tol=1e-10))
        x, trace = solve(prob, np.zeros(36), SolverConfig(linear_solver="gmres", newton_rel_tol=1e-10))
        self.assertEqual(direct.status, "converged")
        self.assertEqual(trace.status, "converged")
        self.assertGreater(trace.total_inner_iters, 0)
        self.assertLessEqual(trace.iterations, direct.iterations + 10)
        self.assertLess(prob.q.graph_residual(x, l - k @ x), 1e-5)

    def test_max_iters(self) -> None:
        with self.assertRaises(MaxItersExceeded) as cm:
            solve(cubic(), np.array([2.0]), SolverConfig(gamma=1.0, max_iters=1))
        trace = cm.exception.trace
        self.assertEqual(trace.status, "max_iters")
        self.assertEqual(trace.iterations, 1)
        self.assertIsNotNone(trace.final_point)

    def test_line_search_failed(self) -> None:
        # a Jacobian of the wrong sign points every direction uphill
        prob = GeProblem(lambda x: x, lambda x: -np.eye(1), zero_map(1))
        with self.assertRaises(LineSearchFailed) as cm:
            solve(prob, np.array([1.0]), SolverConfig(gamma=1.0, max_trials=3))
        self.assertEqual(cm.exception.trace.status, "line_search_failed")
        self.assertEqual(cm.exception.trace.iterations, 0)
        self.assertAlmostEqual(cm.exception.current, cm.exception.trace.initial_residual)
        self.assertGreater(cm.exception.best, cm.exception.current)

    def test_singular_system(self) -> None:
        prob = GeProblem(lambda x: np.ones(1), lambda x: np.zeros((1, 1)), zero_map(1))
        with self.assertRaises(SingularSystem) as cm:
            solve(prob, np.array([0.0]), SolverConfig(gamma=1.0))
        self.assertEqual(cm.exception.trace.status, "singular")

    def test_events(self) -> None:
        events = []
        log.addObserver(events.append)
        self.addCleanup(log.removeObserver, events.append)
        solve(complementarity_1d(), np.array([1.0]), SolverConfig(gamma=1.0))
        ids = [e.get("eventid") for e in events if e.get("eventid", "").startswith("scdnewton.solver.")]
        self.assertEqual(
            ids, ["scdnewton.solver.start", "scdnewton.solver.iteration", "scdnewton.solver.iteration", "scdnewton.solver.finished"]
        )
        iteration = [e for e in events if e.get("eventid") == "scdnewton.solver.iteration"][-1]
        self.assertEqual(iteration["iteration"], 1)
        self.assertEqual(iteration["census"], {})
