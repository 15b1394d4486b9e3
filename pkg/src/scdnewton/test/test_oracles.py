from __future__ import annotations

import unittest

import numpy as np
import scipy.sparse as sp

from scdnewton.core.oracles import (
    check_inclusion,
    find_one_sided_direction,
    jacobian_defect,
    sample_graph_directions,
    semismooth_star_ratio,
    tangent_defect,
)
from scdnewton.core.scd import normal_cone_rplus, smooth_map


class JacobianDefectTestCase(unittest.TestCase):
    """Tests for jacobian_defect in scdnewton/core/oracles.py."""

    def test_consistent(self) -> None:
        def f(x: np.ndarray) -> np.ndarray:
            return np.array([x[0] ** 2 + x[1], np.sin(x[1])])

        def jac(x: np.ndarray) -> np.ndarray:
            return np.array([[2 * x[0], 1.0], [0.0, np.cos(x[1])]])

        self.assertLess(jacobian_defect(f, jac, np.array([0.3, -1.2])), 1e-8)

    def test_sparse_and_wrong(self) -> None:
        a = sp.csr_matrix(np.array([[2.0, 1.0], [0.0, 3.0]]))
        self.assertLess(jacobian_defect(lambda x: a @ x, lambda x: a, np.ones(2)), 1e-8)
        defect = jacobian_defect(lambda x: a @ x, lambda x: a.T, np.ones(2))
        self.assertAlmostEqual(defect, 1.0 / 3.0, places=6)


class SamplingTestCase(unittest.TestCase):
    """Tests for the graph sampling in scdnewton/core/oracles.py."""

    def test_affine_map(self) -> None:
        m = np.array([[1.0, 2.0], [0.0, 0.5]])
        q = smooth_map(lambda v: m @ v + 1.0, lambda v: m, 2)
        x = np.array([0.5, 0.25])
        y = m @ x + 1.0
        self.assertLess(semismooth_star_ratio(q, x, y, radius=0.1, count=50), 1e-10)

    def test_normal_cone(self) -> None:
        q = normal_cone_rplus()
        for x, y in ((1.0, 0.0), (0.0, -1.0), (0.0, 0.0)):
            ratio = semismooth_star_ratio(q, np.array([x]), np.array([y]), radius=0.1, count=50)
            self.assertLess(ratio, 1e-12)

    def test_directions_are_unit(self) -> None:
        q = normal_cone_rplus()
        sample = sample_graph_directions(q, np.zeros(1), np.zeros(1), radius=0.5, count=40, seed=3)
        self.assertEqual(len(sample.directions), 40)
        np.testing.assert_allclose(np.linalg.norm(sample.directions, axis=1), 1.0)
        self.assertLessEqual(sample.distances.max(), 0.5)
        # every difference lies on one of the two branches
        np.testing.assert_allclose(np.abs(sample.directions).max(axis=1), 1.0)


class DirectionalTestCase(unittest.TestCase):
    """Tests for check_inclusion and tangent_defect in scdnewton/core/oracles.py."""

    def test_inclusion(self) -> None:
        q = normal_cone_rplus()
        self.assertEqual(check_inclusion(q, np.array([2.0]), np.array([0.0])), 0.0)
        self.assertEqual(check_inclusion(q, np.array([0.0]), np.array([-5.0])), 0.0)
        self.assertEqual(check_inclusion(q, np.array([-1.0]), np.array([0.0])), 1.0)

    def test_one_sided_at_origin(self) -> None:
        q = normal_cone_rplus()
        x, y = np.zeros(1), np.zeros(1)
        self.assertEqual(tangent_defect(q, x, y, np.array([1.0, 0.0])), 0.0)
        self.assertAlmostEqual(tangent_defect(q, x, y, np.array([-1.0, 0.0])), 1.0)
        found = find_one_sided_direction(q, x, y, [np.array([0.0, 0.0]), np.array([1.0, 0.0])])
        np.testing.assert_array_equal(found, [1.0, 0.0])

    def test_smooth_point(self) -> None:
        q = normal_cone_rplus()
        x, y = np.array([1.0]), np.array([0.0])
        candidates = [np.array([1.0, 0.0]), np.array([-1.0, 0.0])]
        self.assertIsNone(find_one_sided_direction(q, x, y, candidates))
