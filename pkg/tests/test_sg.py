"""SG algebra: closed forms vs the quadrature oracle and pointwise identities."""

import numpy as np
import pytest

from invsg.quadrature import fibonacci_directions, sphere_quadrature, hemisphere_quadrature
from invsg.sg import (
    ContractError,
    EPS_SHARP,
    LAMBDA_COS,
    MU_COS,
    SgMixture,
    SphericalGaussian,
    clamped_cosine_sg,
    sg_eval,
    sg_eval_many,
    sg_inner_product,
    sg_inner_product_many,
    sg_integral,
    sg_product,
)

Z = np.array([0.0, 0.0, 1.0])


def random_lobe(rng, lam_range=(0.1, 1000.0)):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    lam = np.exp(rng.uniform(np.log(lam_range[0]), np.log(lam_range[1])))
    amp = rng.uniform(0.05, 3.0, size=3)
    return SphericalGaussian(axis, lam, amp)


def random_dirs(rng, n):
    d = rng.normal(size=(n, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


class TestEval:
    def test_on_axis(self):
        g = SphericalGaussian(Z, 10.0, np.ones(3))
        assert np.allclose(sg_eval(g, Z), 1.0)

    def test_antipodal(self):
        g = SphericalGaussian(Z, 10.0, np.ones(3))
        assert np.allclose(sg_eval(g, -Z), np.exp(-20.0), rtol=1e-12)

    def test_at_60_degrees(self):
        # amplitude * exp(4 * (cos 60deg - 1)) = amplitude * exp(-2)
        g = SphericalGaussian(Z, 4.0, np.array([2.0, 0.0, 1.0]))
        w = np.array([np.sin(np.pi / 3), 0.0, np.cos(np.pi / 3)])
        expected = np.array([2.0, 0.0, 1.0]) * np.exp(4.0 * (0.5 - 1.0))
        assert np.allclose(sg_eval(g, w), expected, rtol=1e-12)

    def test_non_unit_direction_rejected(self):
        g = SphericalGaussian(Z, 4.0, np.ones(3))
        with pytest.raises(ContractError):
            sg_eval(g, np.array([0.0, 0.0, 2.0]))

    def test_bounded_by_amplitude_and_monotone(self):
        rng = np.random.default_rng(7)
        g = random_lobe(rng)
        angles = np.linspace(0.0, np.pi, 64)
        # spin around an arbitrary great circle through the axis
        perp = np.cross(g.axis, [0.577, -0.211, 0.789])
        perp /= np.linalg.norm(perp)
        vals = []
        for a in angles:
            w = np.cos(a) * g.axis + np.sin(a) * perp
            v = sg_eval(g, w / np.linalg.norm(w))
            assert np.all(v <= g.amplitude + 1e-12)
            assert np.all(v > 0.0)
            vals.append(v[0])
        assert np.all(np.diff(vals) <= 1e-15)  # decays with angular distance

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(3)
        g = random_lobe(rng)
        dirs = random_dirs(rng, 50)
        batch = sg_eval_many(g.axis, g.sharpness, g.amplitude, dirs)
        ref = np.stack([sg_eval(g, d) for d in dirs])
        assert np.allclose(batch, ref, rtol=1e-14)


class TestIntegral:
    def test_zero_amplitude(self):
        g = SphericalGaussian(Z, 5.0, np.zeros(3))
        assert np.all(sg_integral(g) == 0.0)

    @pytest.mark.parametrize("lam", [0.1, 1.0, 37.0, 100.0, 1000.0])
    def test_matches_quadrature(self, lam):
        g = SphericalGaussian(Z, lam, np.ones(3))
        quad = sphere_quadrature(lambda d: sg_eval_many(g.axis, g.sharpness, g.amplitude, d))
        assert np.allclose(sg_integral(g), quad, rtol=1e-6)

    def test_sharp_lobe_limit(self):
        # 2*pi/lambda with the antipodal tail negligible
        g = SphericalGaussian(Z, 100.0, np.ones(3))
        assert np.allclose(sg_integral(g), 2.0 * np.pi / 100.0, rtol=1e-6)


class TestProduct:
    def test_aligned_axes(self):
        g1 = SphericalGaussian(Z, 3.0, np.array([1.0, 0.5, 0.2]))
        g2 = SphericalGaussian(Z, 5.0, np.array([2.0, 1.0, 0.1]))
        p = sg_product(g1, g2)
        assert np.allclose(p.axis, Z)
        assert np.isclose(p.sharpness, 8.0)
        assert np.allclose(p.amplitude, g1.amplitude * g2.amplitude, rtol=1e-12)

    def test_pointwise_identity_random(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            g1, g2 = random_lobe(rng), random_lobe(rng)
            p = sg_product(g1, g2)
            for d in random_dirs(rng, 5):
                lhs = sg_eval(p, d)
                rhs = sg_eval(g1, d) * sg_eval(g2, d)
                assert np.allclose(lhs, rhs, rtol=1e-6, atol=1e-300)

    def test_antipodal_cancellation(self):
        lam = 7.0
        g1 = SphericalGaussian(Z, lam, np.array([1.0, 2.0, 3.0]))
        g2 = SphericalGaussian(-Z, lam, np.array([0.5, 0.5, 0.5]))
        p = sg_product(g1, g2)
        assert p.sharpness == EPS_SHARP
        expected_amp = g1.amplitude * g2.amplitude * np.exp(-2.0 * lam)
        assert np.allclose(p.amplitude, expected_amp, rtol=1e-3)


class TestInnerProduct:
    def test_zero_amplitude_factor(self):
        rng = np.random.default_rng(2)
        g1 = random_lobe(rng)
        g2 = SphericalGaussian(Z, 4.0, np.zeros(3))
        assert np.all(sg_inner_product(g1, g2) == 0.0)

    def test_symmetry(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            g1, g2 = random_lobe(rng), random_lobe(rng)
            assert np.allclose(sg_inner_product(g1, g2), sg_inner_product(g2, g1), rtol=1e-12)

    def test_matches_quadrature_random(self):
        rng = np.random.default_rng(13)
        for _ in range(6):
            g1, g2 = random_lobe(rng, (0.1, 900.0)), random_lobe(rng, (0.1, 900.0))
            quad = sphere_quadrature(
                lambda d: sg_eval_many(g1.axis, g1.sharpness, g1.amplitude, d)
                * sg_eval_many(g2.axis, g2.sharpness, g2.amplitude, d)
            )
            assert np.allclose(sg_inner_product(g1, g2), quad, rtol=1e-5)

    def test_self_inner_product_closed_form(self):
        g = SphericalGaussian(Z, 1.0, np.ones(3))
        # lambda' = 2, amplitude exp(2-2) = 1: (2pi/2)(1 - exp(-4))
        expected = np.pi * (1.0 - np.exp(-4.0))
        assert np.allclose(sg_inner_product(g, g), expected, rtol=1e-12)
        quad = sphere_quadrature(lambda d: sg_eval_many(g.axis, g.sharpness, g.amplitude, d) ** 2)
        assert np.allclose(quad, expected, rtol=1e-6)

    def test_batched_matches_scalar(self):
        rng = np.random.default_rng(17)
        lobes1 = [random_lobe(rng) for _ in range(8)]
        lobes2 = [random_lobe(rng) for _ in range(8)]
        got = sg_inner_product_many(
            np.stack([g.axis for g in lobes1]),
            np.array([g.sharpness for g in lobes1]),
            np.stack([g.amplitude for g in lobes1]),
            np.stack([g.axis for g in lobes2]),
            np.array([g.sharpness for g in lobes2]),
            np.stack([g.amplitude for g in lobes2]),
        )
        ref = np.stack([sg_inner_product(a, b) for a, b in zip(lobes1, lobes2)])
        assert np.allclose(got, ref, rtol=1e-12)


class TestClampedCosine:
    def test_peak_and_antipode(self):
        fit = clamped_cosine_sg(Z)
        assert sg_eval(fit, Z)[0] >= 0.9
        assert sg_eval(fit, -Z)[0] <= 0.05

    def test_hemispherical_integral_near_pi(self):
        fit = clamped_cosine_sg(Z)
        quad = hemisphere_quadrature(lambda d: sg_eval_many(fit.axis, fit.sharpness, fit.amplitude, d))
        assert abs(quad[0] - np.pi) / np.pi <= 0.05
        # sanity: the exact clamped-cosine integral really is pi
        exact = hemisphere_quadrature(lambda d: np.maximum(d[:, 2], 0.0))
        assert np.isclose(float(exact), np.pi, rtol=1e-9)

    def test_rotation_equivariance(self):
        rng = np.random.default_rng(23)
        n = random_dirs(rng, 1)[0]
        fit_n = clamped_cosine_sg(n)
        fit_z = clamped_cosine_sg(Z)
        assert np.allclose(fit_n.axis, n)
        assert fit_n.sharpness == fit_z.sharpness == LAMBDA_COS
        assert np.allclose(fit_n.amplitude, MU_COS)


class TestMixture:
    def test_empty_rejected(self):
        with pytest.raises(ContractError):
            SgMixture(np.zeros((0, 3)), np.zeros(0), np.zeros((0, 3)))

    def test_eval_is_lobe_sum(self):
        rng = np.random.default_rng(31)
        lobes = [random_lobe(rng) for _ in range(16)]
        mix = SgMixture.from_lobes(lobes)
        dirs = random_dirs(rng, 10)
        ref = np.sum([sg_eval_many(g.axis, g.sharpness, g.amplitude, dirs) for g in lobes], axis=0)
        assert np.allclose(mix.eval(dirs), ref, rtol=1e-9)

    def test_invariants_enforced(self):
        with pytest.raises(ContractError):
            SgMixture(np.array([[0.0, 0.0, 2.0]]), np.array([1.0]), np.ones((1, 3)))
        with pytest.raises(ContractError):
            SgMixture(np.array([[0.0, 0.0, 1.0]]), np.array([-1.0]), np.ones((1, 3)))
