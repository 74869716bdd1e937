import itertools
import math

import numpy as np
import pytest

from infounlearn.barycenter import (
    ConvergenceError,
    Coupling,
    PointCloud,
    UncoveredPointError,
    barycentric_projection,
    fixed_point_barycenter,
    mccann_midpoint,
    neutralize_dataset,
    ot_map_1d,
    round_to_marginals,
    sinkhorn_plan,
    w2_distance,
)
from infounlearn.densities import TabularDataset


def brute_w2_sq(x, y):
    """Minimum mean squared pairing cost over all permutations (uniform, equal sizes)."""
    x, y = np.atleast_2d(x.T).T, np.atleast_2d(y.T).T
    m = x.shape[0]
    return min(float(np.mean(np.sum((x - y[list(p)]) ** 2, axis=1))) for p in itertools.permutations(range(m)))


class TestPointCloud:
    def test_invariants(self):
        with pytest.raises(ValueError):
            PointCloud(np.zeros((0, 2)))
        with pytest.raises(ValueError):
            PointCloud([0.0, 1.0], [0.5, 0.6])
        with pytest.raises(ValueError):
            PointCloud([0.0, np.inf])
        c = PointCloud([[0.0, 1.0], [2.0, 3.0]])
        assert (c.m, c.d) == (2, 2) and c.uniform
        np.testing.assert_allclose(c.mean(), [1.0, 2.0])


class TestOneDimensional:
    def test_identity(self):
        x = PointCloud([3.0, 1.0, 2.0])
        t = ot_map_1d(x, x)
        np.testing.assert_array_equal(t(x.points), x.points)
        assert w2_distance(x, x) == 0.0

    def test_translation(self):
        t = ot_map_1d(PointCloud([1.0, 0.0]), PointCloud([11.0, 10.0]))
        np.testing.assert_array_equal(t(np.array([[0.0], [1.0]]))[:, 0], [10.0, 11.0])
        assert w2_distance(PointCloud([0.0, 1.0]), PointCloud([10.0, 11.0])) ** 2 == pytest.approx(100.0, rel=1e-15)

    def test_point_masses(self):
        assert w2_distance(PointCloud([0.0]), PointCloud([-2.5])) == 2.5

    @pytest.mark.parametrize("m", [2, 3, 4, 5, 6, 7])
    def test_permutation_brute_force(self, m):
        rng = np.random.default_rng(m)
        for _ in range(5):
            x, y = rng.normal(size=m), rng.normal(size=m) * 2 + 1
            assert w2_distance(PointCloud(x), PointCloud(y)) ** 2 == pytest.approx(brute_w2_sq(x, y), rel=1e-12)

    def test_unequal_sizes(self):
        # a cloud against its own duplication is at distance zero
        x = np.array([0.0, 1.0, 5.0])
        assert w2_distance(PointCloud(x), PointCloud(np.repeat(x, 2))) == pytest.approx(0.0, abs=1e-15)
        t = ot_map_1d(PointCloud(np.arange(4.0)), PointCloud([0.0, 10.0]))
        np.testing.assert_array_equal(t.images[:, 0], [0, 0, 10, 10])

    def test_uncovered_point(self):
        t = ot_map_1d(PointCloud([0.0, 1.0]), PointCloud([2.0, 3.0]))
        with pytest.raises(UncoveredPointError):
            t(np.array([[0.5]]))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            w2_distance(PointCloud([0.0]), PointCloud([[0.0, 1.0]]))


class TestSinkhorn:
    def test_single_point(self):
        c = sinkhorn_plan(PointCloud([[0.0, 0.0]]), PointCloud([[1.0, 1.0]]), 0.1)
        np.testing.assert_allclose(c.plan, [[1.0]])

    def test_marginals(self):
        rng = np.random.default_rng(0)
        a = PointCloud(rng.normal(size=(6, 2)), rng.dirichlet(np.ones(6)))
        b = PointCloud(rng.normal(size=(4, 2)), rng.dirichlet(np.ones(4)))
        c = sinkhorn_plan(a, b, 0.05)
        assert np.all(c.plan >= 0)
        np.testing.assert_allclose(c.plan.sum(axis=1), a.weights, atol=1e-8)
        np.testing.assert_allclose(c.plan.sum(axis=0), b.weights, atol=1e-8)

    def test_small_reg_concentrates_on_identity(self):
        x = np.random.default_rng(1).normal(size=(5, 2))
        c = sinkhorn_plan(PointCloud(x), PointCloud(x), 1e-3)
        assert np.all(np.diag(c.plan) > 0.19)

    def test_non_convergence_reports_violation(self):
        rng = np.random.default_rng(2)
        a, b = PointCloud(rng.normal(size=(30, 2))), PointCloud(rng.normal(size=(30, 2)) * 5)
        with pytest.raises(ConvergenceError) as info:
            sinkhorn_plan(a, b, 1e-4, max_iter=2, tol=1e-14)
        assert info.value.violation > 0

    def test_bad_reg(self):
        with pytest.raises(ValueError):
            sinkhorn_plan(PointCloud([[0.0]]), PointCloud([[1.0]]), 0.0)

    def test_two_dimensional_w2_within_two_percent(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            x, y = rng.normal(size=(5, 2)), rng.normal(size=(5, 2)) + rng.normal(size=2)
            exact = math.sqrt(brute_w2_sq(x, y))
            assert abs(w2_distance(PointCloud(x), PointCloud(y)) - exact) <= 0.02 * exact

    def test_rounding_is_exact(self):
        rng = np.random.default_rng(4)
        plan = rng.random((4, 3)) * 0.1
        a, b = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(3))
        p = round_to_marginals(plan, a, b)
        np.testing.assert_allclose(p.sum(axis=1), a, atol=1e-15)
        np.testing.assert_allclose(p.sum(axis=0), b, atol=1e-15)


class TestProjection:
    def test_zero_mass_row(self):
        c = Coupling(np.array([[0.5, 0.0], [0.0, 0.0]]), 1, 0.0)
        with pytest.raises(ValueError, match="zero-mass"):
            barycentric_projection(c, PointCloud([[0.0], [1.0]]))

    def test_permutation_plan(self):
        y = PointCloud([[0.0, 0.0], [1.0, 2.0]])
        x = PointCloud([[5.0, 5.0], [6.0, 6.0]])
        c = Coupling(np.array([[0.0, 0.5], [0.5, 0.0]]), 1, 0.0)
        t = barycentric_projection(c, y, x)
        np.testing.assert_array_equal(t(x.points), [[1.0, 2.0], [0.0, 0.0]])


class TestBarycenter:
    def test_order_statistic_average(self):
        rng = np.random.default_rng(5)
        a, b = rng.normal(size=200), rng.exponential(size=200) + 3
        res = fixed_point_barycenter([PointCloud(a), PointCloud(b)], [0.5, 0.5])
        assert res.converged and not res.approximate
        want = 0.5 * (np.sort(a) + np.sort(b))
        np.testing.assert_allclose(np.sort(res.cloud.points[:, 0]), want, atol=1e-9)

    def test_gaussian_barycenter(self):
        rng = np.random.default_rng(6)
        res = fixed_point_barycenter([PointCloud(rng.normal(size=2000)), PointCloud(rng.normal(4, 1, 2000))])
        pts = res.cloud.points[:, 0]
        assert abs(pts.mean() - 2) < 0.15 and abs(pts.var() - 1) < 0.2

    def test_mccann_midpoint_matches(self):
        rng = np.random.default_rng(7)
        a, b = PointCloud(rng.normal(size=100)), PointCloud(rng.uniform(2, 5, 100))
        mid = mccann_midpoint(a, ot_map_1d(a, b))
        res = fixed_point_barycenter([a, b], [0.5, 0.5])
        np.testing.assert_allclose(np.sort(mid.points[:, 0]), np.sort(res.cloud.points[:, 0]), atol=1e-9)

    def test_identical_groups_fixed(self):
        x = np.random.default_rng(8).normal(size=50)
        res = fixed_point_barycenter([PointCloud(x), PointCloud(x.copy())])
        np.testing.assert_allclose(np.sort(res.cloud.points[:, 0]), np.sort(x), atol=1e-12)

    def test_translation_equivariant(self):
        rng = np.random.default_rng(9)
        a, b = rng.normal(size=40), rng.normal(3, 2, 40)
        r1 = fixed_point_barycenter([PointCloud(a), PointCloud(b)], [0.5, 0.5])
        r2 = fixed_point_barycenter([PointCloud(a + 7), PointCloud(b + 7)], [0.5, 0.5])
        np.testing.assert_allclose(np.sort(r2.cloud.points[:, 0]), np.sort(r1.cloud.points[:, 0]) + 7, atol=1e-9)

    def test_non_convergence_is_reported(self):
        rng = np.random.default_rng(10)
        groups = [PointCloud(rng.normal(size=(8, 2))), PointCloud(rng.normal(size=(8, 2)) + 3)]
        res = fixed_point_barycenter(groups, max_iter=1, tol=0.0)
        assert not res.converged and res.iterations == 1 and res.approximate

    def test_two_dimensional_mean(self):
        rng = np.random.default_rng(11)
        g0, g1 = rng.normal(size=(30, 2)), rng.normal(size=(30, 2)) + [4.0, -2.0]
        res = fixed_point_barycenter([PointCloud(g0), PointCloud(g1)], [0.5, 0.5], tol=1e-6, max_iter=50)
        np.testing.assert_allclose(res.cloud.mean(), 0.5 * (g0.mean(axis=0) + g1.mean(axis=0)), atol=0.05)

    def test_bad_weights(self):
        g = [PointCloud([0.0, 1.0]), PointCloud([2.0, 3.0])]
        with pytest.raises(ValueError):
            fixed_point_barycenter(g, [0.7, 0.7])
        with pytest.raises(ValueError):
            fixed_point_barycenter(g[:1])


class TestNeutralize:
    @staticmethod
    def data(n=120, seed=0):
        rng = np.random.default_rng(seed)
        z = np.repeat([0, 1], n // 2)
        x = rng.normal(size=(n, 2)) + np.c_[4.0 * z, -1.0 * z]
        return TabularDataset(x, rng.integers(0, 2, n), z, 2)

    def test_groups_become_identical(self):
        out = neutralize_dataset(self.data()).data
        g0, g1 = out.features[out.groups == 0], out.features[out.groups == 1]
        for j in range(2):
            assert w2_distance(PointCloud(g0[:, j]), PointCloud(g1[:, j])) < 1e-9

    def test_order_preserved_within_group(self):
        d = self.data()
        out = neutralize_dataset(d).data
        for z in (0, 1):
            rows = d.groups == z
            for j in range(2):
                assert np.all(np.argsort(d.features[rows, j], kind="stable") == np.argsort(out.features[rows, j], kind="stable"))

    def test_identical_groups_unchanged(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(40, 1))
        d = TabularDataset(np.r_[x, x], np.zeros(80, int), np.repeat([0, 1], 40))
        np.testing.assert_allclose(neutralize_dataset(d).data.features, d.features, atol=1e-12)

    def test_joint_mode_flags_approximate(self):
        res = neutralize_dataset(self.data(40), mode="joint", tol=1e-6, max_iter=50)
        assert res.approximate

    def test_errors(self):
        d = self.data()
        with pytest.raises(ValueError, match="mode"):
            neutralize_dataset(d, mode="bogus")
        one = TabularDataset(d.features, d.labels, np.zeros(len(d), int))
        with pytest.raises(ValueError, match="two groups"):
            neutralize_dataset(one)
