"""Autodiff, MLPs, Adam, positional encoding, and the sparse-latent losses.

Every gradient path is checked against central finite differences; those
checks are the oracle for the whole differentiable pipeline.
"""

import numpy as np
import pytest

from invsg.autodiff import Tensor, as_tensor, concat, maximum, norm, parameter, vdot, where
from invsg.nets import (
    Adam,
    AdamState,
    DirectBrdfNet,
    Mlp,
    PositionalEncoding,
    SparseLatentBrdfNet,
    adam_step,
    kl_sparsity,
    load_blob,
    pos_encode,
    save_blob,
    smooth_loss,
)


def finite_diff(loss_fn, arrays, probes_per_array=6, h=1e-6, rng=None):
    """Central-difference gradient at randomly probed entries of each array."""
    rng = rng or np.random.default_rng(0)
    out = []
    for a in arrays:
        flat = a.reshape(-1)
        idx = rng.choice(flat.size, size=min(probes_per_array, flat.size), replace=False)
        grads = []
        for i in idx:
            keep = flat[i]
            flat[i] = keep + h
            up = loss_fn()
            flat[i] = keep - h
            dn = loss_fn()
            flat[i] = keep
            grads.append((up - dn) / (2 * h))
        out.append((idx, np.array(grads)))
    return out


def check_grads(loss_tensor_fn, params, rtol, probes=6, seed=0):
    loss = loss_tensor_fn()
    for p in params:
        p.grad = None
    loss.backward()
    fd = finite_diff(lambda: float(loss_tensor_fn().data), [p.data for p in params],
                     probes_per_array=probes, rng=np.random.default_rng(seed))
    for p, (idx, ref) in zip(params, fd):
        got = p.grad.reshape(-1)[idx] if p.grad is not None else np.zeros_like(ref)
        scale = np.maximum(np.abs(ref), 1e-8)
        assert np.max(np.abs(got - ref) / scale) <= rtol, (got, ref)


class TestAutodiffPrimitives:
    def test_elementwise_chain(self):
        x = parameter(np.array([0.3, -0.7, 1.2]))

        def loss():
            t = (x * 2.0 + 1.0).exp().sigmoid() * x.cos() - (x * x + 0.5).log()
            return (t * t).sum()
        check_grads(loss, [x], rtol=1e-6)

    def test_matmul_and_reductions(self):
        rng = np.random.default_rng(1)
        a = parameter(rng.normal(size=(4, 5)))
        b = parameter(rng.normal(size=(5, 3)))

        def loss():
            return ((a @ b).relu().softplus() - 0.2).abs().mean()
        check_grads(loss, [a, b], rtol=1e-5)

    def test_broadcast_unbroadcast(self):
        a = parameter(np.array([[1.0, 2.0], [3.0, 4.0]]))
        b = parameter(np.array([10.0, 20.0]))

        def loss():
            return ((a + b) * (a / b)).sum()
        check_grads(loss, [a, b], rtol=1e-6)

    def test_where_maximum_concat_norm(self):
        rng = np.random.default_rng(2)
        a = parameter(rng.normal(size=(6, 3)))
        mask = rng.uniform(size=(6, 1)) > 0.5

        def loss():
            n = norm(a, axis=-1, keepdims=True)
            picked = where(mask, a / n, a * 0.5)
            return (concat([picked, maximum(a, 0.1)], axis=1) ** 2).sum() + vdot(a, a).sum()
        check_grads(loss, [a], rtol=1e-6)

    def test_getitem_grad(self):
        a = parameter(np.arange(12.0).reshape(3, 4) + 0.5)

        def loss():
            return (a[:, 1:3].sqrt() * a[0:2, 0].sum()).sum()
        check_grads(loss, [a], rtol=1e-6)

    def test_backward_requires_scalar(self):
        a = parameter(np.ones(3))
        with pytest.raises(ValueError):
            (a * 2).backward()


class TestPositionalEncoding:
    def test_zero_input(self):
        enc = PositionalEncoding(freqs=2)
        out = pos_encode(np.zeros(1), enc)
        assert np.allclose(out, [0.0, 0.0, 1.0, 0.0, 1.0])

    def test_output_length(self):
        enc = PositionalEncoding(freqs=10)
        assert enc.out_dim(3) == 63
        assert pos_encode(np.zeros(3), enc).shape == (63,)

    def test_injective_on_probes(self):
        enc = PositionalEncoding(freqs=4)
        rng = np.random.default_rng(3)
        xs = rng.uniform(-1, 1, size=(200, 3))
        codes = pos_encode(xs, enc)
        d = np.linalg.norm(codes[:, None, :] - codes[None, :, :], axis=-1)
        x_d = np.linalg.norm(xs[:, None, :] - xs[None, :, :], axis=-1)
        off = ~np.eye(200, dtype=bool)
        assert np.all(d[off][x_d[off] > 1e-9] > 1e-9)


class TestMlp:
    def test_zero_weights_zero_output(self):
        net = Mlp([4, 8, 2], seed=0)
        for p in net.params:
            p.data[:] = 0.0
        out = net.forward(np.ones((5, 4)))
        assert np.all(out.data == 0.0)

    def test_gradcheck_tiny_net(self):
        net = Mlp([2, 1, 1], seed=1)
        x = np.array([[0.3, -0.2], [0.8, 0.1]])

        def loss():
            return (net.forward(x) ** 2).sum()
        check_grads(loss, net.params, rtol=1e-6)

    def test_gradcheck_wide_net_probed(self):
        net = Mlp([10, 512, 512, 512, 512, 1], seed=2)
        x = np.random.default_rng(4).normal(size=(8, 10))

        def loss():
            return net.forward(x).sigmoid().mean()
        check_grads(loss, net.params, rtol=1e-4, probes=1)

    def test_nonfinite_activation_reports_layer(self):
        net = Mlp([2, 3, 1], seed=0)
        with pytest.raises(FloatingPointError, match="layer 0"):
            net.forward(np.array([[np.inf, 1.0]]))


class TestAdam:
    def test_zero_gradient_no_move(self):
        p = np.array([1.0, 2.0])
        st = AdamState()
        adam_step(st, [p], [np.zeros(2)])
        assert np.allclose(p, [1.0, 2.0])

    def test_constant_gradient_step_approaches_lr_sign(self):
        p = np.zeros(3)
        g = np.array([1.0, -2.0, 0.5])
        st = AdamState(lr=5e-4)
        prev = p.copy()
        for _ in range(500):
            prev = p.copy()
            adam_step(st, [p], [g])
        step = p - prev
        assert np.allclose(step, -st.lr * np.sign(g), rtol=1e-3)

    def test_nonfinite_grad_skipped(self):
        p = np.array([1.0])
        st = AdamState()
        adam_step(st, [p], [np.array([np.nan])])
        assert st.skipped == 1 and st.step_count == 0
        assert p[0] == 1.0

    def test_deterministic(self):
        def run():
            net = Mlp([3, 4, 1], seed=7)
            opt = Adam(net.params, lr=1e-3)
            x = np.ones((2, 3))
            for _ in range(5):
                opt.zero_grad()
                loss = (net.forward(x) ** 2).sum()
                loss.backward()
                opt.step()
            return net.checksum()
        assert run() == run()


class TestSparsityLosses:
    def test_kl_zero_at_target(self):
        z = np.full((10, 4), 0.05)
        assert abs(float(kl_sparsity(z).data)) < 1e-12

    def test_kl_single_channel_value(self):
        z = np.full((8, 1), 0.5)
        expected = 0.05 * np.log(0.05 / 0.5) + 0.95 * np.log(0.95 / 0.5)
        assert np.isclose(float(kl_sparsity(z).data), expected, rtol=1e-12)

    def test_kl_convex_minimum_on_grid(self):
        grid = np.linspace(0.01, 0.9, 60)
        vals = [float(kl_sparsity(np.full((4, 1), v)).data) for v in grid]
        k = int(np.argmin(vals))
        assert abs(grid[k] - 0.05) < 0.02
        assert np.all(np.diff(vals[:k]) < 0) and np.all(np.diff(vals[k + 1:]) > 0)

    def test_kl_gradcheck(self):
        zt = parameter(np.random.default_rng(5).uniform(0.1, 0.9, (6, 4)))

        def loss():
            return kl_sparsity(zt)
        check_grads(loss, [zt], rtol=1e-5)

    def test_smooth_loss_zero_noise(self):
        net = SparseLatentBrdfNet(seed=0)
        z = as_tensor(np.random.default_rng(6).uniform(0.2, 0.8, (4, 32)))
        val = smooth_loss(net.decode_raw, z, np.zeros((4, 32)))
        assert float(val.data) == 0.0

    def test_smooth_loss_linear_decoder_halfnormal(self):
        # D(z) = W z with diagonal W: E sum_i |w_i xi_i| = sum |w_i| sigma sqrt(2/pi)
        w = np.array([0.7, -1.3, 0.4])
        decode = lambda z: z * as_tensor(w)
        sigma = 0.1
        rng = np.random.default_rng(7)
        noise = rng.normal(0.0, sigma, size=(200_000, 3))
        val = float(smooth_loss(decode, np.zeros((200_000, 3)), noise).data)
        expected = np.sum(np.abs(w)) * sigma * np.sqrt(2 / np.pi)
        assert np.isclose(val, expected, rtol=0.01)


class TestBrdfNets:
    def test_latent_and_outputs_bounded(self):
        net = SparseLatentBrdfNet(seed=3)
        x = np.random.default_rng(8).uniform(-1, 1, (16, 3))
        albedo, roughness, z = net.forward(x)
        assert z.data.shape == (16, 32)
        assert np.all((z.data > 0) & (z.data < 1))
        assert np.all((albedo.data > 0) & (albedo.data < 1))
        assert np.all((roughness.data > 0.02) & (roughness.data < 1))

    def test_full_pipeline_gradcheck(self):
        net = SparseLatentBrdfNet(hidden=16, depth=2, decoder_hidden=8, pe_freqs=2, seed=4)
        x = np.random.default_rng(9).uniform(-1, 1, (5, 3))
        rng = np.random.default_rng(10)
        noise = rng.normal(0, 0.1, (5, 32))

        def loss():
            a, r, z = net.forward(x)
            return (a.sum() + r.sum()) + 0.01 * kl_sparsity(z) + 0.1 * smooth_loss(net.decode_raw, z, noise)
        check_grads(loss, net.params, rtol=1e-4, probes=3)

    def test_direct_net_shapes(self):
        net = DirectBrdfNet(hidden=8, depth=2, pe_freqs=2, seed=5)
        a, r, z = net.forward(np.zeros((3, 3)))
        assert a.data.shape == (3, 3) and r.data.shape == (3,) and z is None


class TestWeightBlob:
    def test_roundtrip_bit_exact(self, tmp_path):
        net = Mlp([4, 8, 2], seed=11)
        path = tmp_path / "w.blob"
        save_blob(path, "test-field", {"pe_freqs": 10, "sizes": net.sizes}, net.param_arrays())
        tag, meta, arrays = load_blob(path, expect_type="test-field")
        assert tag == "test-field" and meta["pe_freqs"] == 10
        for a, b in zip(net.param_arrays(), arrays):
            assert a.dtype == b.dtype and np.array_equal(a, b)
        # reload into a twin and compare checksums
        twin = Mlp([4, 8, 2], seed=99)
        twin.load_param_arrays(arrays)
        assert twin.checksum() == net.checksum()

    def test_type_tag_checked(self, tmp_path):
        path = tmp_path / "w.blob"
        save_blob(path, "vis-field", {}, [np.zeros(3)])
        with pytest.raises(ValueError, match="expected"):
            load_blob(path, expect_type="indirect-field")

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.blob"
        path.write_bytes(b"NOTBLOB0junkjunk")
        with pytest.raises(ValueError, match="magic"):
            load_blob(path)
