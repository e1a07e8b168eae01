import math

import numpy as np
import pytest

from fklab import geometry as geo

EU = geo.EuclideanNorm()
L1 = geo.ScaledL1Norm()
QUAD = geo.QuadraticNorm([[1.0, 0.2], [0.2, 2.0]])
TEST_NORMS = [EU, geo.EuclideanNorm(2.0), L1, geo.ScaledL1Norm(0.7), QUAD]


class TestNorms:
    @pytest.mark.parametrize("norm", TEST_NORMS)
    def test_homogeneity_and_symmetry(self, norm):
        rng = np.random.default_rng(0)
        for _ in range(200):
            v = rng.normal(size=2)
            lam = rng.uniform(0, 5)
            assert norm(lam * v) == pytest.approx(lam * norm(v), abs=1e-9)
            assert norm(-v) == pytest.approx(norm(v), abs=1e-12)

    @pytest.mark.parametrize("norm", TEST_NORMS)
    def test_triangle_inequality(self, norm):
        rng = np.random.default_rng(1)
        for _ in range(200):
            a = rng.normal(size=2)
            b = rng.normal(size=2)
            assert norm(a + b) <= norm(a) + norm(b) + 1e-9

    @pytest.mark.parametrize("norm", TEST_NORMS)
    def test_positive(self, norm):
        norm.check_unit_positive()
        assert norm((0.0, 0.0)) == 0.0

    def test_tabulated_interpolates_knots(self):
        angles = np.linspace(0, math.pi, 16, endpoint=False)
        vals = [QUAD((math.cos(t), math.sin(t))) for t in angles]
        tab = geo.TabulatedNorm(angles, vals)
        for t, v in zip(angles, vals):
            assert tab((math.cos(t), math.sin(t))) == pytest.approx(v)
        # symmetrized
        assert tab((-math.cos(angles[3]), -math.sin(angles[3]))) == \
            pytest.approx(vals[3])

    def test_tabulated_convexity_warning(self):
        angles = np.linspace(0, math.pi, 8, endpoint=False)
        vals = np.ones(8)
        vals[3] = 0.55  # deep dip: the spiked ball is not convex
        with pytest.warns(geo.NormConvexityWarning):
            tab = geo.TabulatedNorm(angles, vals, rel_tolerance=1e-6)
        with pytest.raises(geo.DegenerateNorm):
            tab.validate()


class TestEquiDecaySet:
    def test_euclidean_unit_ball(self):
        U = geo.equi_decay_set(EU, 64)
        r = np.sqrt((U.vertices ** 2).sum(axis=1))
        assert np.allclose(r, 1.0)

    def test_homogeneity_scaled(self):
        U = geo.equi_decay_set(geo.EuclideanNorm(2.0), 64)
        r = np.sqrt((U.vertices ** 2).sum(axis=1))
        assert np.allclose(r, 0.5)

    def test_l1_square(self):
        U = geo.equi_decay_set(L1, 360)
        assert np.abs(U.vertices).sum(axis=1) == pytest.approx(1.0)
        assert U.contains((0.99, 0.0)) and not U.contains((0.9, 0.9))

    def test_resolution_floor(self):
        with pytest.raises(ValueError):
            geo.equi_decay_set(EU, 4)


class TestWulffShape:
    def test_euclidean_self_polar(self):
        K = geo.wulff_shape(EU, 256)
        r = np.sqrt((K.vertices ** 2).sum(axis=1))
        assert np.allclose(r, 1.0, atol=1e-3)

    def test_l1_gives_linf_square(self):
        K = geo.wulff_shape(L1, 720)
        assert np.abs(K.vertices).max() == pytest.approx(1.0, abs=1e-9)
        assert len(K.vertices) == 4

    @pytest.mark.parametrize("norm", TEST_NORMS)
    def test_polarity_identity(self, norm):
        K = geo.wulff_shape(norm, 1024)
        U = geo.equi_decay_set(norm, 1024)
        P = geo.polar_body(K)
        rng = np.random.default_rng(2)
        for _ in range(50):
            u = rng.normal(size=2)
            u /= np.linalg.norm(u)
            assert P.support(u) == pytest.approx(U.support(u), rel=2e-4)

    @pytest.mark.parametrize("norm", TEST_NORMS)
    def test_max_inner_product_one(self, norm):
        K = geo.wulff_shape(norm, 2048)
        U = geo.equi_decay_set(norm, 2048)
        vals = U.vertices @ K.vertices.T
        assert vals.max() == pytest.approx(1.0, abs=1e-4)


class TestDualVector:
    def test_euclidean(self):
        t = geo.dual_vector(np.array([3.0, 4.0]), EU)
        assert np.allclose(t, [0.6, 0.8], atol=1e-4)

    def test_l1_axis_tie_break(self):
        t = geo.dual_vector(np.array([1.0, 0.0]), L1, geo.wulff_shape(L1, 720))
        assert np.allclose(t, [1.0, 0.0], atol=1e-9)

    @pytest.mark.parametrize("norm", TEST_NORMS)
    def test_defining_identity(self, norm):
        rng = np.random.default_rng(3)
        K = geo.wulff_shape(norm, 4096)
        for _ in range(25):
            x = rng.normal(size=2)
            t = geo.dual_vector(x, norm, K)
            assert abs(float(t @ x) - norm(x)) <= 1e-6 * norm(x)

    def test_zero_vector(self):
        with pytest.raises(geo.ZeroVector):
            geo.dual_vector(np.zeros(2), EU)


class TestSurcharge:
    def test_dual_pair_zero(self):
        x = np.array([2.0, 1.0])
        t = geo.dual_vector(x, QUAD)
        assert geo.surcharge(t, x, QUAD) == pytest.approx(0.0, abs=1e-6)

    def test_orthogonal_direction(self):
        assert geo.surcharge([1.0, 0.0], [0.0, 1.0], EU) == pytest.approx(1.0)

    @pytest.mark.parametrize("norm", TEST_NORMS)
    def test_nonnegative(self, norm):
        rng = np.random.default_rng(4)
        K = geo.wulff_shape(norm, 1024)
        for _ in range(50):
            x = rng.normal(size=2)
            t = geo.dual_vector(x, norm, K)
            y = rng.normal(size=2)
            assert geo.surcharge(t, y, norm) >= 0.0


class TestCones:
    def test_origin_excluded(self):
        assert not geo.in_forward_cone([0, 0], [1.0, 0.0], 0.5, EU)

    def test_on_axis_inside(self):
        assert geo.in_forward_cone([2, 0], [1.0, 0.0], 0.5, EU)

    def test_transverse_outside(self):
        assert not geo.in_forward_cone([0, 2], [1.0, 0.0], 0.5, EU)

    def test_backward_is_negated_forward(self):
        t = [1.0, 0.0]
        assert geo.in_backward_cone([-2, 0], t, 0.5, EU)
        assert not geo.in_backward_cone([2, 0], t, 0.5, EU)

    def test_nesting_in_delta(self):
        t = np.array([1.0, 0.0])
        rng = np.random.default_rng(5)
        for _ in range(200):
            y = rng.integers(-10, 11, size=2)
            if geo.in_forward_cone(y, t, 0.15, EU):
                assert geo.in_forward_cone(y, t, 0.3, EU)

    def test_sector_euclid_60_degrees(self):
        ulo, uhi = geo.cone_sector([1.0, 0.0], 0.5, EU)
        # (1-delta) xi(u) = t.u at cos(theta) = 0.5, i.e. +-60 degrees
        assert math.degrees(math.atan2(ulo[1], ulo[0])) == pytest.approx(-60, abs=1e-6)
        assert math.degrees(math.atan2(uhi[1], uhi[0])) == pytest.approx(60, abs=1e-6)

    def test_sector_membership_matches_cone(self):
        t = np.array([QUAD((1.0, 0.0)), 0.0])
        tt = geo.dual_vector(np.array([1.0, 0.0]), QUAD)
        ulo, uhi = geo.cone_sector(tt, 0.4, QUAD)
        rng = np.random.default_rng(6)
        for _ in range(300):
            y = rng.integers(-8, 9, size=2)
            if (y == 0).all():
                continue
            inside = geo.in_forward_cone(y, tt, 0.4, QUAD)
            cross_lo = ulo[0] * y[1] - ulo[1] * y[0]
            cross_hi = uhi[0] * y[1] - uhi[1] * y[0]
            assert inside == (cross_lo > 0 and cross_hi < 0)


class TestFeasibleDelta:
    @pytest.mark.parametrize("norm", TEST_NORMS)
    def test_axis_inside_triple_cone(self, norm):
        rng = np.random.default_rng(7)
        K = geo.wulff_shape(norm, 1024)
        for _ in range(20):
            x = rng.normal(size=2)
            t = geo.dual_vector(x, norm, K)
            lo, hi = geo.feasible_delta_range(t, norm)
            assert lo < hi
            delta = 0.5 * (lo + hi) if lo > 0 else min(0.9 * hi, 0.25)
            if delta <= lo:
                continue
            ok = False
            for e in ([1, 0], [-1, 0], [0, 1], [0, -1]):
                if geo.surcharge(t, e, norm) < 3 * delta * norm(e) - 1e-12:
                    ok = True
            assert ok


class TestCurvature:
    def test_unit_disk(self):
        disk = geo.equi_decay_set(EU, 512)
        chi, pos = geo.boundary_curvature(disk, [1.0, 0.0])
        assert chi == pytest.approx(1.0, rel=1e-3)
        assert pos

    def test_scaled_disk(self):
        disk = geo.equi_decay_set(geo.EuclideanNorm(1 / 3.0), 512)
        chi, _ = geo.boundary_curvature(disk, [3.0, 0.0])
        assert chi == pytest.approx(1 / 3.0, rel=1e-3)

    def test_ellipse_analytic(self):
        # support sqrt(4 nx^2 + ny^2) -> ellipse semi-axes (2, 1)
        K = geo.wulff_shape(geo.QuadraticNorm([[4.0, 0.0], [0.0, 1.0]]), 2048)
        chi_a, _ = geo.boundary_curvature(K, [2.0, 0.0])
        chi_b, _ = geo.boundary_curvature(K, [0.0, 1.0])
        assert chi_a == pytest.approx(2.0, rel=1e-3)
        assert chi_b == pytest.approx(0.25, rel=1e-3)

    def test_insufficient_resolution(self):
        body = geo.ConvexBody(2, np.array([[1.0, 0], [0, 1.0], [-1, 0], [0, -1.0]]))
        with pytest.raises(geo.InsufficientResolution):
            geo.boundary_curvature(body, [1.0, 0.0])

    def test_sphere_support_d3(self):
        rng = np.random.default_rng(8)
        dirs = rng.normal(size=(500, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        body = geo.support_body(dirs, np.ones(len(dirs)), 3)
        curvs, pos = geo.boundary_curvature(body, [1.0, 0.0, 0.0])
        assert pos
        assert np.allclose(curvs, 1.0, atol=1e-6)
