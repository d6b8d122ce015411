"""Environment SG bank: init spread, evaluation linearity, HDR fitting, IO."""

import numpy as np
import pytest

from invsg.envlight import (
    EnvLight,
    eval_env,
    fit_from_hdr,
    init_lobes,
    latlong_dirs,
    load_env,
    lobe_spacing,
    save_env,
    synthetic_probe,
)
from invsg.sg import SgMixture, sg_eval_many


def random_dirs(rng, n):
    d = rng.normal(size=(n, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


class TestEval:
    def test_zero_amplitudes(self):
        env = init_lobes(16, seed=0)
        env = EnvLight(SgMixture(env.axes, env.sharpness, np.zeros_like(env.amplitudes)))
        assert np.all(eval_env(env, np.array([0.0, 1.0, 0.0])) == 0.0)

    def test_single_lobe_matches_sg(self):
        env = init_lobes(8, seed=1)
        amps = np.zeros((8, 3))
        amps[3] = [1.0, 2.0, 0.5]
        env = EnvLight(SgMixture(env.axes, env.sharpness, amps))
        rng = np.random.default_rng(2)
        for d in random_dirs(rng, 10):
            ref = sg_eval_many(env.axes[3], env.sharpness[3], amps[3], d)
            assert np.allclose(eval_env(env, d), ref, rtol=1e-12)

    def test_matches_naive_sum(self):
        rng = np.random.default_rng(3)
        axes = random_dirs(rng, 128)
        sharp = rng.uniform(1, 60, 128)
        amps = rng.uniform(0, 2, (128, 3))
        env = EnvLight(SgMixture(axes, sharp, amps))
        dirs = random_dirs(rng, 10)
        naive = np.zeros((10, 3))
        for k in range(128):
            naive += sg_eval_many(axes[k], sharp[k], amps[k], dirs)
        assert np.allclose(env.eval(dirs), naive, rtol=1e-9, atol=1e-12)

    def test_linear_in_amplitude(self):
        env = init_lobes(32, seed=4)
        rng = np.random.default_rng(5)
        d = random_dirs(rng, 20)
        assert np.allclose(env.scaled(3.0).eval(d), 3.0 * env.eval(d), rtol=1e-12)


class TestInit:
    def test_two_lobes_spread_apart(self):
        env = init_lobes(2, seed=0)
        assert env.axes[0] @ env.axes[1] < 0.0

    def test_deterministic(self):
        a = init_lobes(128, seed=9)
        b = init_lobes(128, seed=9)
        assert np.array_equal(a.axes, b.axes)
        assert np.array_equal(a.sharpness, b.sharpness)
        assert np.array_equal(a.amplitudes, b.amplitudes)
        c = init_lobes(128, seed=10)
        assert not np.array_equal(a.axes, c.axes)

    def test_near_uniform_spacing(self):
        env = init_lobes(128, seed=0)
        cos = env.axes @ env.axes.T
        np.fill_diagonal(cos, -2.0)
        nn = np.arccos(np.clip(np.max(cos, axis=1), -1, 1))
        ideal = np.sqrt(8.0 * np.pi / (np.sqrt(3.0) * 128))  # hex-packing spacing
        assert np.all(nn >= 0.7 * ideal) and np.all(nn <= 1.3 * ideal)


class TestFit:
    def test_constant_map(self):
        img = np.full((16, 32, 3), 0.8)
        env, report = fit_from_hdr(img, m=64, iters=300, seed=0)
        dirs, _ = latlong_dirs(24, 48)
        vals = env.eval(dirs.reshape(-1, 3))
        assert np.all(np.abs(vals - 0.8) <= 0.05 * 0.8)

    def test_single_bright_texel(self):
        img = np.zeros((32, 64, 3))
        img[8, 16] = 200.0
        dirs, _ = latlong_dirs(32, 64)
        texel_dir = dirs[8, 16]
        env, _ = fit_from_hdr(img, m=128, iters=300, seed=0)
        power = np.sum(env.amplitudes, axis=1)
        top = env.axes[np.argmax(power)]
        angle = np.degrees(np.arccos(np.clip(top @ texel_dir, -1, 1)))
        assert angle <= 10.0

    def test_synthetic_probe_residual(self):
        img = synthetic_probe(48, 96, seed=0)
        env, report = fit_from_hdr(img, m=128, iters=500, seed=0)
        assert report["rel_l2"] <= 0.15
        checks = [c["rel_l2"] for c in report["checkpoints"]]
        assert all(b <= a + 1e-12 for a, b in zip(checks, checks[1:]))

    def test_rejects_bad_pixels(self):
        img = np.full((8, 16, 3), 1.0)
        img[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            fit_from_hdr(img, m=8, iters=10)
        img[0, 0, 0] = -1.0
        with pytest.raises(ValueError):
            fit_from_hdr(img, m=8, iters=10)


class TestIo:
    def test_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(11)
        axes = random_dirs(rng, 37)
        env = EnvLight(SgMixture(axes, rng.uniform(0.5, 300, 37), rng.uniform(0, 5, (37, 3))))
        p = tmp_path / "env.txt"
        save_env(p, env)
        back = load_env(p)
        assert np.array_equal(back.axes, env.axes)
        assert np.array_equal(back.sharpness, env.sharpness)
        assert np.array_equal(back.amplitudes, env.amplitudes)

    def test_malformed_line(self, tmp_path):
        p = tmp_path / "env.txt"
        p.write_text("0 0 1 5.0 1 1\n")
        with pytest.raises(ValueError, match="7 numbers"):
            load_env(p)
