import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hkgf.manifold import (CurvatureConfig, artanh, hyperbolic_distance, log_map_origin,
                           log_scale, log_scale_deriv, mobius_add, project_to_ball,
                           tangent_embed)

UNIT = CurvatureConfig(c=1.0)


def ball_points(dim=4, c=1.0, max_frac=0.99):
    """Points strictly inside the ball of curvature -c."""
    coords = arrays(np.float64, dim, elements=st.floats(-1, 1))
    radius = st.floats(0, max_frac)

    def build(v, r):
        n = np.linalg.norm(v)
        if n == 0:
            return v
        return v / n * r / np.sqrt(c)

    return st.builds(build, coords, radius)


def standard_distance(a, b, c):
    """Textbook Poincare distance via the arcosh form (independent of Mobius addition)."""
    diff2 = np.sum((a - b) ** 2)
    denom = (1 - c * np.sum(a * a)) * (1 - c * np.sum(b * b))
    return np.arccosh(1 + 2 * c * diff2 / denom) / np.sqrt(c)


class TestCurvatureConfig:
    def test_defaults(self):
        cfg = CurvatureConfig()
        assert cfg.c == 1e-3
        assert cfg.epsilon == 1e-5

    @pytest.mark.parametrize("c", [0.0, -1.0, np.inf, np.nan])
    def test_rejects_bad_curvature(self, c):
        with pytest.raises(ValueError):
            CurvatureConfig(c=c)

    @pytest.mark.parametrize("eps", [0.0, 1.0, -0.1])
    def test_rejects_bad_epsilon(self, eps):
        with pytest.raises(ValueError):
            CurvatureConfig(epsilon=eps)


class TestMobiusAdd:
    def test_hand_value(self):
        out = mobius_add([0.5, 0.0], [0.25, 0.0], UNIT)
        np.testing.assert_allclose(out, [0.84375 / 1.265625, 0.0], rtol=0, atol=1e-15)
        np.testing.assert_allclose(out[0], 2 / 3, atol=1e-15)

    @given(ball_points())
    def test_identity_both_sides(self, z):
        zero = np.zeros_like(z)
        np.testing.assert_allclose(mobius_add(z, zero, UNIT), z, atol=1e-12)
        np.testing.assert_allclose(mobius_add(zero, z, UNIT), z, atol=1e-12)

    @given(ball_points())
    def test_left_inverse(self, z):
        assert np.linalg.norm(mobius_add(z, -z, UNIT)) <= 1e-12
        assert np.linalg.norm(mobius_add(-z, z, UNIT)) <= 1e-12

    @given(ball_points(), ball_points())
    def test_result_inside_ball(self, a, b):
        out = mobius_add(a, b, UNIT)
        assert np.sum(out * out) < 1.0

    def test_rejects_outside_points(self):
        with pytest.raises(ValueError, match="outside"):
            mobius_add([1.0, 0.0], [0.0, 0.0], UNIT)

    def test_rejects_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            mobius_add([0.1, 0.0], [0.1, 0.0, 0.0], UNIT)


class TestDistance:
    def test_hand_value(self):
        d = hyperbolic_distance([0.5, 0.0], [0.0, 0.0], UNIT)
        np.testing.assert_allclose(d, 2 * np.arctanh(0.5), rtol=1e-15)
        np.testing.assert_allclose(d, 1.0986122886681098, rtol=1e-14)

    @given(ball_points())
    def test_zero_law(self, a):
        assert hyperbolic_distance(a, a, UNIT) == 0.0

    @given(ball_points(), ball_points())
    def test_symmetry(self, a, b):
        np.testing.assert_allclose(hyperbolic_distance(a, b, UNIT), hyperbolic_distance(b, a, UNIT),
                                   rtol=1e-10, atol=1e-12)

    @given(ball_points(max_frac=0.9), ball_points(max_frac=0.9))
    def test_matches_arcosh_form(self, a, b):
        np.testing.assert_allclose(hyperbolic_distance(a, b, UNIT), standard_distance(a, b, 1.0),
                                   rtol=1e-9, atol=1e-7)

    def test_small_curvature_is_twice_euclidean(self):
        cfg = CurvatureConfig(c=1e-10)
        a, b = np.array([0.3, -1.2]), np.array([2.0, 0.5])
        np.testing.assert_allclose(hyperbolic_distance(a, b, cfg), 2 * np.linalg.norm(a - b),
                                   rtol=1e-8)


class TestLogMap:
    def test_origin(self):
        np.testing.assert_array_equal(log_map_origin(np.zeros(3), UNIT), np.zeros(3))

    def test_hand_value(self):
        np.testing.assert_allclose(log_map_origin([0.5, 0.0], UNIT), [0.5493061443340549, 0.0],
                                   rtol=1e-15)

    @given(ball_points(c=1e-3))
    def test_norm_and_direction(self, z):
        cfg = CurvatureConfig()
        out = log_map_origin(z, cfg)
        n = np.linalg.norm(z)
        expected = np.arctanh(cfg.sqrt_c * n) / cfg.sqrt_c
        np.testing.assert_allclose(np.linalg.norm(out), expected, rtol=1e-12, atol=1e-15)
        if n > 0:
            assert out @ z >= 0
            np.testing.assert_allclose(out / np.linalg.norm(out), z / n, atol=1e-12)

    @given(ball_points(c=1e-3))
    def test_distance_is_twice_tangent_norm(self, z):
        cfg = CurvatureConfig()
        np.testing.assert_allclose(hyperbolic_distance(z, np.zeros_like(z), cfg),
                                   2 * np.linalg.norm(log_map_origin(z, cfg)), rtol=1e-10, atol=1e-12)

    @given(arrays(np.float64, 5, elements=st.floats(-4.4, 4.4)))
    def test_small_curvature_limit(self, z):
        cfg = CurvatureConfig(c=1e-8)
        n = np.linalg.norm(z)
        if n == 0:
            return
        assert np.linalg.norm(log_map_origin(z, cfg) - z) / n <= 1e-6

    def test_batched_rows(self, rng):
        z = rng.normal(size=(7, 3)) * 5
        out = log_map_origin(z)
        for row, o in zip(z, out):
            np.testing.assert_allclose(o, log_map_origin(row), rtol=1e-15)


class TestScaleHelpers:
    def test_artanh_matches_numpy(self, rng):
        x = rng.uniform(-0.999, 0.999, size=1000)
        np.testing.assert_allclose(artanh(x), np.arctanh(x), rtol=1e-13, atol=1e-16)

    def test_artanh_near_one_is_finite(self):
        assert np.isfinite(artanh(1 - 1e-16))

    def test_series_joins_exact_branch(self):
        u = np.array([1e-3 * (1 - 1e-9), 1e-3])
        np.testing.assert_allclose(log_scale(u[0]), log_scale(u[1]), rtol=1e-12)
        np.testing.assert_allclose(log_scale_deriv(u[0]), log_scale_deriv(u[1]), rtol=1e-6)

    def test_derivative_matches_differences(self):
        for u in [1e-5, 5e-4, 0.01, 0.3, 0.9]:
            h = min(1e-6, u / 10)
            fd = (log_scale(u + h) - log_scale(u - h)) / (2 * h)
            np.testing.assert_allclose(log_scale_deriv(u), fd, rtol=1e-6, atol=1e-9)


class TestProjection:
    def test_interior_unchanged(self):
        np.testing.assert_array_equal(project_to_ball([0.3, 0.4], UNIT), [0.3, 0.4])

    def test_radial_shrink(self):
        np.testing.assert_allclose(project_to_ball([2.0, 0.0], UNIT), [0.99999, 0.0], rtol=1e-15)

    @given(arrays(np.float64, 6, elements=st.floats(-1e12, 1e12)))
    def test_strict_interior_and_idempotent(self, x):
        cfg = CurvatureConfig()
        p = project_to_ball(x, cfg)
        assert cfg.c * np.sum(p * p) < 1.0
        np.testing.assert_array_equal(project_to_ball(p, cfg), p)

    def test_preserves_direction(self, rng):
        x = rng.normal(size=(20, 4)) * 1e3
        p = project_to_ball(x)
        cos = np.sum(p * x, axis=1) / np.linalg.norm(p, axis=1) / np.linalg.norm(x, axis=1)
        np.testing.assert_allclose(cos, 1.0, atol=1e-14)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            project_to_ball([np.nan, 0.0])

    def test_tangent_embed_composes(self, rng):
        x = rng.normal(size=(5, 3)) * 50
        np.testing.assert_allclose(tangent_embed(x), log_map_origin(project_to_ball(x)), rtol=1e-15)
