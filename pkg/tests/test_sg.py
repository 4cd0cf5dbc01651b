"""Lobe evaluation, mixtures, and the closed-form sphere integral."""

import numpy as np
import pytest

from sglight.sg import (
    SgEnvironment,
    SphericalGaussian,
    as_direction,
    eval_mixture,
    eval_sg,
    integrate_sg_sphere,
    sg_radiance,
    sphere_grid,
    spherical_to_unit,
    unit_to_spherical,
)


def quadrature_integral(lobe, n_lat=256, n_lon=512):
    """Independent route: equal-solid-angle midpoint quadrature."""
    dirs, w = sphere_grid(n_lat, n_lon)
    vals = sg_radiance(lobe.intensity, lobe.sharpness, lobe.axis, dirs)
    return np.einsum("nc,n->c", vals, w)


class TestSphereIntegral:
    def test_matches_quadrature_across_sharpness(self):
        """Closed form tracks the quadrature within 1e-4 relative.

        Midpoint quadrature error grows like sharpness^2 / n_lat^2, so the
        sharp end of the sweep needs the tall grid to make 1e-4 honest.
        """
        for sharp in (0.1, 1.0, 10.0, 100.0):
            lobe = SphericalGaussian([0.0, 0.0, 1.0], sharp, [1.0, 0.5, 2.0])
            q = quadrature_integral(lobe, n_lat=8192, n_lon=128)
            c = integrate_sg_sphere(lobe)
            np.testing.assert_allclose(c, q, rtol=1e-4)

    def test_random_axis_orientation_free(self):
        """The integral does not depend on where the lobe points."""
        rng = np.random.default_rng(42)
        for sharp in (0.1, 1.0, 10.0):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            lobe = SphericalGaussian(axis, sharp, [1.0, 0.5, 2.0])
            q = quadrature_integral(lobe, n_lat=1024, n_lon=2048)
            c = integrate_sg_sphere(lobe)
            np.testing.assert_allclose(c, q, rtol=1e-6)

    def test_unit_sharpness_value(self):
        # frozen from the 256x512 equal-area quadrature oracle
        lobe = SphericalGaussian([0.0, 0.0, 1.0], 1.0, [1.0, 1.0, 1.0])
        q = quadrature_integral(lobe)
        np.testing.assert_allclose(q, 5.432834827580139, rtol=1e-12)
        np.testing.assert_allclose(integrate_sg_sphere(lobe), q, rtol=1e-4)

    def test_zero_sharpness_limit(self):
        """sharpness -> 0 integrates to 4*pi times the intensity."""
        lobe = SphericalGaussian([0.0, 1.0, 0.0], 0.0, [2.0, 2.0, 2.0])
        np.testing.assert_allclose(
            integrate_sg_sphere(lobe), 8.0 * np.pi, rtol=1e-12
        )
        np.testing.assert_allclose(
            quadrature_integral(lobe), 8.0 * np.pi, rtol=1e-10
        )

    def test_tiny_sharpness_is_stable(self):
        lobe = SphericalGaussian([0.0, 0.0, 1.0], 1e-12, [1.0, 1.0, 1.0])
        np.testing.assert_allclose(
            integrate_sg_sphere(lobe), 4.0 * np.pi, rtol=1e-9
        )


class TestEvalSg:
    def test_peak_at_axis(self):
        """No sampled direction beats the axis value."""
        rng = np.random.default_rng(42)
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        lobe = SphericalGaussian(axis, 7.0, [1.0, 2.0, 3.0])
        peak = eval_sg(lobe, axis)
        dirs = rng.normal(size=(10000, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        vals = sg_radiance(lobe.intensity, lobe.sharpness, lobe.axis, dirs)
        assert np.all(vals <= peak[None, :] + 1e-15)
        np.testing.assert_allclose(peak, lobe.intensity)

    def test_linear_in_intensity(self):
        rng = np.random.default_rng(7)
        axis = np.array([0.0, 0.0, 1.0])
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        base = eval_sg(SphericalGaussian(axis, 3.0, [1.0, 1.0, 1.0]), d)
        scaled = eval_sg(SphericalGaussian(axis, 3.0, [2.5, 2.5, 2.5]), d)
        np.testing.assert_allclose(scaled, 2.5 * base, rtol=1e-12)

    def test_accepts_spherical_pair(self):
        lobe = SphericalGaussian([0.0, 0.0, 1.0], 2.0, [1.0, 1.0, 1.0])
        v = eval_sg(lobe, (0.3, 1.2))
        u = eval_sg(lobe, spherical_to_unit(0.3, 1.2))
        np.testing.assert_allclose(v, u)

    def test_rejects_non_unit_direction(self):
        lobe = SphericalGaussian([0.0, 0.0, 1.0], 2.0, [1.0, 1.0, 1.0])
        with pytest.raises(ValueError):
            eval_sg(lobe, [0.0, 0.0, 2.0])


class TestDirections:
    def test_round_trip(self):
        """unit -> (theta, phi) -> unit within 1e-6 radians."""
        rng = np.random.default_rng(42)
        v = rng.normal(size=(500, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        theta, phi = unit_to_spherical(v)
        back = spherical_to_unit(theta, phi)
        angle = np.arccos(np.clip(np.sum(v * back, axis=1), -1.0, 1.0))
        assert np.max(angle) < 1e-6

    def test_poles(self):
        theta, phi = unit_to_spherical([0.0, 0.0, 1.0])
        assert theta == 0.0
        np.testing.assert_allclose(
            as_direction((np.pi, 0.0)), [0.0, 0.0, -1.0], atol=1e-15
        )


class TestValidation:
    def test_axis_must_be_unit(self):
        with pytest.raises(ValueError):
            SphericalGaussian([0.0, 0.0, 1.1], 1.0, [1.0, 1.0, 1.0])

    def test_sharpness_nonnegative(self):
        with pytest.raises(ValueError):
            SphericalGaussian([0.0, 0.0, 1.0], -0.5, [1.0, 1.0, 1.0])

    def test_intensity_nonnegative(self):
        with pytest.raises(ValueError):
            SphericalGaussian([0.0, 0.0, 1.0], 1.0, [1.0, -1.0, 1.0])

    def test_environment_needs_a_lobe(self):
        with pytest.raises(ValueError):
            SgEnvironment(())

    def test_visibility_clamped_at_construction(self):
        lobe = SphericalGaussian([0.0, 0.0, 1.0], 1.0, [1.0, 1.0, 1.0])
        env = SgEnvironment((lobe,), visibility=np.array([[1.7], [-0.3]]))
        assert env.visibility.max() == 1.0
        assert env.visibility.min() == 0.0

    def test_visibility_width_must_match(self):
        lobe = SphericalGaussian([0.0, 0.0, 1.0], 1.0, [1.0, 1.0, 1.0])
        with pytest.raises(ValueError):
            SgEnvironment((lobe,), visibility=np.ones((4, 2)))


class TestMixture:
    def test_sum_of_lobes(self):
        rng = np.random.default_rng(3)
        lobes = []
        for _ in range(3):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            lobes.append(SphericalGaussian(axis, rng.uniform(0.5, 10.0),
                                           rng.uniform(0.1, 2.0, size=3)))
        env = SgEnvironment(tuple(lobes))
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        total = sum(eval_sg(lobe, d) for lobe in lobes)
        np.testing.assert_allclose(eval_mixture(env, d), total, rtol=1e-14)

    def test_visibility_attenuates(self):
        """mu = 0.5 on one lobe halves exactly that contribution."""
        lobe_a = SphericalGaussian([0.0, 0.0, 1.0], 2.0, [1.0, 1.0, 1.0])
        lobe_b = SphericalGaussian([1.0, 0.0, 0.0], 2.0, [1.0, 1.0, 1.0])
        vis = np.array([[0.5, 1.0]])
        env = SgEnvironment((lobe_a, lobe_b), visibility=vis)
        d = np.array([0.0, 1.0, 0.0])
        expected = 0.5 * eval_sg(lobe_a, d) + eval_sg(lobe_b, d)
        np.testing.assert_allclose(eval_mixture(env, d, pixel=0), expected)

    def test_pixel_required_iff_visibility(self):
        lobe = SphericalGaussian([0.0, 0.0, 1.0], 1.0, [1.0, 1.0, 1.0])
        plain = SgEnvironment((lobe,))
        with_vis = SgEnvironment((lobe,), visibility=np.ones((2, 1)))
        d = [0.0, 0.0, 1.0]
        with pytest.raises(ValueError):
            eval_mixture(plain, d, pixel=0)
        with pytest.raises(ValueError):
            eval_mixture(with_vis, d)
