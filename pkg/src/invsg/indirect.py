"""Indirect incoming illumination baked into a per-point bank of 24 SG lobes.

Ground truth comes from second-intersection traces: the radiance leaving the
next surface along -w is the indirect light arriving along w; rays that
escape carry zero (the direct path already accounts for the environment).
A position-only MLP outputs 24 x 7 raw lobe parameters; the decode
normalizes axes and maps sharpness/amplitude through shifted softplus.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, as_tensor
from .nets import Adam, Mlp, PositionalEncoding, load_blob, save_blob
from .radiance import RadianceField
from .rng import hash2_np, key, uniform_np
from .scene import SdfScene
from .sg import SgMixture
from .visibility import cosine_dirs, sample_surface_points

IND_BLOB_TYPE = "indirect-field"
N_LOBES = 24
_LAMBDA_FLOOR = 0.1
_LAMBDA_SHIFT = -2.0  # zero raw output decodes to a near-uniform broad lobe
_AXIS_EPS = 1e-3      # pulls zero raw axes to +z without disturbing trained ones


def _inv_softplus(y):
    y = float(max(y, 1e-12))
    return y if y > 30.0 else float(np.log(np.expm1(y)))


class IndirectField:
    """MLP x -> 24 lobes of incoming indirect light."""

    def __init__(self, hidden=512, depth=4, seed=0, dtype=np.float32, mu_bias=-5.0):
        self.encoding = PositionalEncoding(10)
        self.net = Mlp([self.encoding.out_dim(3)] + [hidden] * depth + [N_LOBES * 7],
                       seed=seed, dtype=dtype)
        self.dtype = dtype
        self.mu_bias = float(mu_bias)

    def raw(self, points) -> Tensor:
        x = self.encoding.encode(np.asarray(points, dtype=self.dtype))
        return self.net.forward(x)

    def decode(self, raw: Tensor):
        """Raw [N, 168] -> (axes [N,24,3], sharpness [N,24], amps [N,24,3])."""
        n = raw.data.shape[0]
        r = raw.reshape(n, N_LOBES, 7)
        v = r[:, :, 0:3] + as_tensor(np.array([0.0, 0.0, _AXIS_EPS], dtype=self.dtype))
        axes = v / ((v * v).sum(axis=-1, keepdims=True) + 1e-16).sqrt()
        sharp = (r[:, :, 3] + _LAMBDA_SHIFT).softplus() + _LAMBDA_FLOOR
        amps = (r[:, :, 4:7] + self.mu_bias).softplus()
        return axes, sharp, amps

    def query(self, point) -> SgMixture:
        """Decoded lobe bank at one point (pure function of the weights)."""
        axes, sharp, amps = self.decode(self.raw(np.atleast_2d(point)))
        ax = axes.data[0].astype(np.float64)
        ax /= np.linalg.norm(ax, axis=-1, keepdims=True)
        return SgMixture(ax, np.maximum(sharp.data[0].astype(np.float64), 1e-6),
                         np.maximum(amps.data[0].astype(np.float64), 0.0))

    def query_many(self, points):
        """Decoded lobe arrays for a batch (float64, axes exactly unit)."""
        axes, sharp, amps = self.decode(self.raw(points))
        ax = axes.data.astype(np.float64)
        ax /= np.linalg.norm(ax, axis=-1, keepdims=True)
        return ax, sharp.data.astype(np.float64), np.maximum(amps.data.astype(np.float64), 0.0)

    def checksum(self):
        return self.net.checksum()

    def save(self, path):
        meta = {"hidden": self.net.sizes[1], "depth": len(self.net.sizes) - 2,
                "pe_x": self.encoding.freqs, "mu_bias": self.mu_bias,
                "sizes": self.net.sizes}
        save_blob(path, IND_BLOB_TYPE, meta, self.net.param_arrays())

    @classmethod
    def load(cls, path):
        _, meta, arrays = load_blob(path, expect_type=IND_BLOB_TYPE)
        field = cls(hidden=meta["hidden"], depth=meta["depth"],
                    dtype=arrays[0].dtype.type, mu_bias=meta["mu_bias"])
        field.net.load_param_arrays(arrays)
        return field


def gather_indirect_samples(scene: SdfScene, rf: RadianceField, points, normals,
                            n_rays: int, seed: int):
    """Second-intersection radiance along cosine-weighted hemisphere directions.

    Returns (dirs [N,R,3], values [N,R,3], hit_fraction).  Misses contribute
    zero so the environment is never double counted.
    """
    points = np.atleast_2d(points)
    normals = np.atleast_2d(normals)
    npts = points.shape[0]
    ukey = hash2_np(np.uint64(key(seed, 0x91)), np.arange(npts * n_rays, dtype=np.uint64))
    u1 = uniform_np(ukey, np.uint64(0)).reshape(npts, n_rays)
    u2 = uniform_np(ukey, np.uint64(1)).reshape(npts, n_rays)
    dirs = cosine_dirs(normals[:, None, :], u1, u2)
    flat_d = dirs.reshape(-1, 3)
    flat_p = np.repeat(points, n_rays, axis=0)
    flat_n = np.repeat(normals, n_rays, axis=0)
    origins = flat_p + flat_n * scene.eps_offset
    t, flag = scene.trace(origins, flat_d)
    values = np.zeros((npts * n_rays, 3))
    hit = flag == 1
    if np.any(hit):
        hp = origins[hit] + t[hit, None] * flat_d[hit]
        hn = scene.normal(hp)
        # radiance leaves the second surface back toward the first point
        back = np.sum(hn * (-flat_d[hit]), axis=1)
        ok = back > 1e-6
        if np.any(ok):
            idx = np.nonzero(hit)[0][ok]
            vals = rf.query_many(hp[ok], hn[ok], scene.region_at(hp[ok]), -flat_d[hit][ok])
            values[idx] = vals
    return dirs, values.reshape(npts, n_rays, 3), float(np.mean(hit))


@dataclass
class IndirectBakeReport:
    final_loss: float
    holdout_rel_l1: float
    hit_fraction: float
    steps: int


def _mixture_eval_t(axes: Tensor, sharp: Tensor, amps: Tensor, dirs):
    """Differentiable mixture evaluation: dirs [N,R,3] -> [N,R,3]."""
    d = as_tensor(dirs)
    n, r = dirs.shape[0], dirs.shape[1]
    cos = (axes.reshape(n, 1, N_LOBES, 3) * d.reshape(n, r, 1, 3)).sum(axis=-1)
    g = (sharp.reshape(n, 1, N_LOBES) * (cos - 1.0)).exp()
    return (g.reshape(n, r, N_LOBES, 1) * amps.reshape(n, 1, N_LOBES, 3)).sum(axis=2)


def bake_indirect(scene: SdfScene, rf: RadianceField, n_points: int = 256,
                  n_rays: int = 16, epochs: int = 200, steps_per_epoch: int = 5,
                  lr: float = 5e-4, seed: int = 0, pool_factor: int = 16,
                  holdout_points: int = 128, log=None):
    """Fit the indirect field with an L1 loss against gathered radiance.

    A pool of pool_factor * n_points labeled surface points is gathered once
    (the oracle is the expensive side); training steps draw n_points-sized
    batches from it.  The amplitude decode bias is initialized from the pool
    mean so the optimizer starts at the right radiometric scale.
    """
    total = pool_factor * n_points + holdout_points
    pts, nrm, _ = sample_surface_points(scene, total, key(seed, 0xB0))
    dirs, vals, hit_frac = gather_indirect_samples(scene, rf, pts, nrm, n_rays, key(seed, 0xB1))
    mean_val = float(np.mean(vals))
    mu0 = mean_val / (N_LOBES * 0.38)  # approximate angular mean of a unit softplus bank
    field = IndirectField(seed=seed, mu_bias=_inv_softplus(mu0) if mu0 > 1e-9 else -12.0)

    train = slice(0, pool_factor * n_points)
    hold = slice(pool_factor * n_points, total)
    opt = Adam(field.net.params, lr=lr)
    rng_key = np.uint64(key(seed, 0xB2))
    loss_val = float("nan")
    step = 0
    pool_n = pool_factor * n_points
    for epoch in range(epochs):
        for _ in range(steps_per_epoch):
            pick = (hash2_np(rng_key + np.uint64(step),
                             np.arange(n_points, dtype=np.uint64)) % np.uint64(pool_n)).astype(np.int64)
            bx = pts[train][pick]
            bd = dirs[train][pick]
            bv = vals[train][pick].astype(field.dtype)
            axes, sharp, amps = field.decode(field.raw(bx))
            pred = _mixture_eval_t(axes, sharp, amps, bd.astype(field.dtype))
            loss = (pred - as_tensor(bv)).abs().mean()
            if not np.isfinite(loss.data):
                raise FloatingPointError(f"indirect bake diverged at step {step} (seed {seed})")
            opt.zero_grad()
            loss.backward()
            opt.step()
            loss_val = float(loss.data)
            step += 1
        if log is not None and (epoch + 1) % max(1, epochs // 10) == 0:
            log(f"bake-ind epoch {epoch + 1}/{epochs} loss {loss_val:.5f}")
    # held-out relative L1
    axes, sharp, amps = field.decode(field.raw(pts[hold]))
    pred = _mixture_eval_t(axes, sharp, amps, dirs[hold].astype(field.dtype)).data
    gt = vals[hold]
    rel = float(np.sum(np.abs(pred - gt)) / max(np.sum(np.abs(gt)), 1e-12))
    return field, IndirectBakeReport(final_loss=loss_val, holdout_rel_l1=rel,
                                     hit_fraction=hit_frac, steps=step)
