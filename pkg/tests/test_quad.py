import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from armamax.errors import ConfigError, EvaluationError
from armamax.quad import (
    build_grid1,
    build_grid2,
    build_interval,
    gauss_legendre,
    integrate1,
    integrate2,
    reference_rule,
)


@pytest.mark.parametrize("m", [1, 2, 3, 5, 8, 12, 16, 24, 40, 64])
def test_gauss_legendre_matches_numpy(m):
    x, w = gauss_legendre(m)
    xr, wr = np.polynomial.legendre.leggauss(m)
    np.testing.assert_allclose(x, xr, atol=1e-14)
    np.testing.assert_allclose(w, wr, atol=1e-14)


def test_reference_rule_is_unit_interval():
    t, w = reference_rule(4, 6)
    assert t.min() > 0 and t.max() < 1
    assert w.sum() == pytest.approx(1.0, abs=1e-15)


class TestGrid1:
    def test_three_nodes(self):
        g = build_grid1(1.0, 3, 1)
        assert g.size == 3
        assert g.weights.sum() == pytest.approx(2.0, abs=1e-14)

    def test_quadratic_exact(self):
        g = build_grid1(1.0, 3, 1)
        assert integrate1(g, lambda t: t**2) == pytest.approx(2 / 3, abs=1e-15)

    def test_mandatory_split(self):
        g = build_grid1(1.0, 4, 3, {0.5})
        assert np.any(np.isclose(g.boundaries, 0.5, atol=0, rtol=0))
        assert 0.5 in g.splits

    def test_splits_outside_are_dropped(self):
        g = build_grid1(1.0, 4, 2, {-3.0, 1.0, 7.0})
        assert g.splits == ()

    @pytest.mark.parametrize("L,m,panels", [(0.0, 4, 2), (-1.0, 4, 2), (1.0, 1, 2), (1.0, 4, 0), (np.inf, 4, 1)])
    def test_invalid(self, L, m, panels):
        with pytest.raises(ConfigError):
            build_grid1(L, m, panels)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(0.1, 20), st.integers(2, 10), st.integers(1, 6),
           st.lists(st.floats(-25, 25), max_size=4))
    def test_invariants(self, L, m, panels, splits):
        g = build_grid1(L, m, panels, set(splits))
        assert np.all(g.nodes > -L) and np.all(g.nodes < L)
        assert np.all(g.weights > 0)
        assert g.weights.sum() == pytest.approx(2 * L, abs=1e-12 * max(1.0, L))
        for v in splits:
            if -L < v < L:
                assert np.min(np.abs(g.boundaries - v)) == 0.0

    @pytest.mark.parametrize("m", [2, 4, 7])
    def test_polynomial_exactness_per_panel(self, m):
        g = build_grid1(2.0, m, 3, {0.3})
        rng = np.random.default_rng(m)
        coef = rng.normal(size=2 * m)
        poly = np.polynomial.Polynomial(coef)
        exact = poly.integ()(2.0) - poly.integ()(-2.0)
        assert integrate1(g, poly) == pytest.approx(exact, rel=1e-13, abs=1e-13)

    def test_zero(self):
        assert integrate1(build_grid1(3.0, 5, 2), lambda t: 0.0 * t) == 0.0

    def test_length(self):
        assert integrate1(build_grid1(3.0, 5, 2), np.ones_like) == pytest.approx(6.0, abs=1e-13)

    def test_normal_mass(self):
        g = build_grid1(8.0, 12, 8)
        assert integrate1(g, stats.norm.pdf) == pytest.approx(1.0, abs=1e-10)

    def test_non_finite_reports_node(self):
        g = build_grid1(1.0, 3, 1)
        with pytest.raises(EvaluationError) as info:
            integrate1(g, lambda t: np.where(t > 0.5, np.nan, t))
        assert info.value.node[0] > 0.5

    def test_split_invariance(self):
        f = lambda t: np.exp(-0.5 * t * t) * np.cos(t)  # noqa: E731
        a = integrate1(build_grid1(8.0, 12, 8), f)
        b = integrate1(build_grid1(8.0, 12, 8, {0.37, -2.2}), f)
        assert a == pytest.approx(b, abs=1e-10)


class TestInterval:
    def test_scales_steer_allocation(self):
        g = build_interval(0.0, 10.0, 4, 6, [5.0], [1.0, 4.0])
        left = np.sum(g.boundaries < 5.0)
        assert left > len(g.boundaries) - 1 - left

    def test_max_load_adds_panels(self):
        g = build_interval(0.0, 30.0, 4, 2, (), [1.0], max_load=5.0)
        assert g.panels == 6


class TestGrid2:
    def test_count(self):
        g = build_grid2(build_grid1(1.0, 3, 1), build_grid1(1.0, 4, 1))
        assert g.q == 12

    def test_area(self):
        g = build_grid2(build_grid1(2.0, 3, 2), build_grid1(2.0, 3, 2))
        assert integrate2(g, lambda a, b: np.ones_like(a)) == pytest.approx(16.0, abs=1e-12)
        assert g.weights.sum() == pytest.approx(4 * 2.0 * 2.0, abs=1e-10)

    def test_row_major(self):
        g0, g1 = build_grid1(1.0, 2, 1), build_grid1(1.0, 3, 1)
        g = build_grid2(g0, g1)
        np.testing.assert_array_equal(g.nodes[:3, 0], g0.nodes[0])
        np.testing.assert_array_equal(g.nodes[:3, 1], g1.nodes)

    def test_normal_product_mass(self):
        g1 = build_grid1(8.0, 12, 8)
        g = build_grid2(g1, g1)
        assert integrate2(g, lambda a, b: stats.norm.pdf(a) * stats.norm.pdf(b)) == pytest.approx(1.0, abs=1e-9)

    def test_refinement_stability(self):
        dens = lambda a, b: stats.multivariate_normal([0.3, -0.2], [[1.0, 0.4], [0.4, 0.8]]).pdf(  # noqa: E731
            np.column_stack([a, b]))
        coarse = build_grid1(8.0, 12, 8)
        fine = build_grid1(8.0, 12, 16)
        a = integrate2(build_grid2(coarse, coarse), dens)
        b = integrate2(build_grid2(fine, fine), dens)
        assert abs(a - b) <= 1e-8 * abs(b)

    def test_sheared_integrates_in_z(self):
        # axis1 = c = r z0 + s z1, weights carry 1/s
        r, s = 0.5, 2.0
        g0 = build_grid1(9.0, 12, 6)
        g1 = build_interval(-r * 9 - s * 9, r * 9 + s * 9, 12, 12)
        g = build_grid2(g0, g1, shear=(r, s))
        val = integrate2(g, lambda a, b: stats.norm.pdf(a) * stats.norm.pdf(b, 0.5, 0.7))
        assert val == pytest.approx(1.0, abs=1e-8)
