"""Visibility: traced ground truth, a baked continuous field, and SG-lobe
visibility ratios.

The field is an MLP from (encoded position, encoded direction) to an
occlusion logit, trained with cross-entropy against sphere-traced labels on
cosine-weighted hemisphere rays above freshly sampled surface points.  The
ratio of a lobe's energy that reaches a point, used to modulate lobe
amplitudes, is estimated by sampling directions proportionally to the lobe
itself, which turns the energy-weighted average into a plain mean.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .autodiff import as_tensor
from .nets import Adam, Mlp, PositionalEncoding, load_blob, save_blob
from .rng import hash2_np, key, uniform_np
from .scene import SdfScene
from .sg import SphericalGaussian

VIS_BLOB_TYPE = "visibility-field"


def _tangent_frames(n):
    s = np.copysign(1.0, n[..., 2])
    a = -1.0 / (s + n[..., 2])
    b = n[..., 0] * n[..., 1] * a
    t1 = np.stack([1.0 + s * n[..., 0] ** 2 * a, s * b, -s * n[..., 0]], axis=-1)
    t2 = np.stack([b, s + n[..., 1] ** 2 * a, -n[..., 1]], axis=-1)
    return t1, t2


def cosine_dirs(normals, u1, u2):
    """Cosine-weighted hemisphere directions about each normal."""
    t1, t2 = _tangent_frames(normals)
    r = np.sqrt(u1)[..., None]
    phi = (2.0 * np.pi * u2)[..., None]
    z = np.sqrt(np.maximum(0.0, 1.0 - u1))[..., None]
    return r * np.cos(phi) * t1 + r * np.sin(phi) * t2 + z * normals


def sg_dirs(axes, sharpness, u1, u2):
    """Directions distributed proportionally to an SG lobe (inverse CDF in cos)."""
    lam = np.asarray(sharpness, dtype=np.float64)
    t = 1.0 + np.log(u1 + (1.0 - u1) * np.exp(-2.0 * lam)) / lam
    t = np.clip(t, -1.0, 1.0)
    t1, t2 = _tangent_frames(np.asarray(axes, dtype=np.float64))
    s = np.sqrt(np.maximum(0.0, 1.0 - t * t))[..., None]
    phi = (2.0 * np.pi * u2)[..., None]
    return s * np.cos(phi) * t1 + s * np.sin(phi) * t2 + t[..., None] * np.asarray(axes)


def sample_surface_points(scene: SdfScene, n: int, seed: int, max_tries: int = 20):
    """Surface points by rejection: random inward rays from the bounding sphere.

    Returns (points [n,3], normals [n,3], regions [n]).
    """
    pts = np.empty((0, 3))
    nrms = np.empty((0, 3))
    regs = np.empty(0, dtype=np.int32)
    base = np.uint64(key(seed, 0x5F))
    for round_ in range(max_tries):
        need = n - pts.shape[0]
        if need <= 0:
            break
        m = max(2 * need, 64)
        idx = np.arange(m, dtype=np.uint64) + np.uint64(round_ * 1_000_003)
        u = np.stack([uniform_np(hash2_np(base, idx), np.uint64(k)) for k in range(4)], axis=1)
        # origins uniform on the bounding sphere, directions toward a random
        # interior target: every surface patch is reachable
        z = 2.0 * u[:, 0] - 1.0
        phi = 2.0 * np.pi * u[:, 1]
        s = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        origins = scene.bound_center + scene.bound_radius * np.stack(
            [s * np.cos(phi), s * np.sin(phi), z], axis=1)
        z2 = 2.0 * u[:, 2] - 1.0
        phi2 = 2.0 * np.pi * u[:, 3]
        s2 = np.sqrt(np.maximum(0.0, 1.0 - z2 * z2))
        targets = scene.bound_center + 0.8 * scene.bound_radius * \
            np.stack([s2 * np.cos(phi2), s2 * np.sin(phi2), z2], axis=1) * u[:, 0:1]
        d = targets - origins
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        t, flag = scene.trace(origins, d)
        hit = flag == 1
        if not np.any(hit):
            continue
        p = origins[hit] + t[hit, None] * d[hit]
        nr, ok = scene.normal(p), None
        pts = np.concatenate([pts, p])
        nrms = np.concatenate([nrms, nr])
        regs = np.concatenate([regs, scene.region_at(p)])
    if pts.shape[0] < n:
        raise RuntimeError(f"surface sampling starved: got {pts.shape[0]}/{n} points")
    return pts[:n], nrms[:n], regs[:n]


def trace_visibility(scene: SdfScene, points, normals, dirs):
    """1 where the offset ray escapes to the bounds, 0 where it re-hits.

    Grazing-failure traces count as occluded; the count is returned too.
    """
    points = np.atleast_2d(points)
    dirs = np.atleast_2d(dirs)
    normals = np.atleast_2d(normals)
    origins = points + normals * scene.eps_offset
    t, flag = scene.trace(origins, dirs)
    vis = (flag == 0).astype(np.float64)
    return vis, int(np.sum(flag == 2))


@dataclass
class BakeReport:
    final_loss: float
    holdout_accuracy: float
    grazing_failures: int
    steps: int


class VisibilityField:
    """MLP (x, w) -> occlusion logit, with positional encodings 10/4."""

    def __init__(self, hidden=512, depth=4, seed=0, dtype=np.float32):
        self.enc_x = PositionalEncoding(10)
        self.enc_d = PositionalEncoding(4)
        in_dim = self.enc_x.out_dim(3) + self.enc_d.out_dim(3)
        self.net = Mlp([in_dim] + [hidden] * depth + [1], seed=seed, dtype=dtype)
        self.dtype = dtype

    def _features(self, points, dirs):
        return np.concatenate([self.enc_x.encode(np.asarray(points, dtype=self.dtype)),
                               self.enc_d.encode(np.asarray(dirs, dtype=self.dtype))], axis=-1)

    def logits(self, points, dirs):
        return self.net.forward(self._features(points, dirs)).reshape(-1)

    def query(self, points, dirs, chunk=65536):
        """Soft visibility in [0, 1]; inference only, chunked."""
        points = np.atleast_2d(points)
        dirs = np.atleast_2d(dirs)
        out = np.empty(points.shape[0], dtype=np.float64)
        from scipy.special import expit
        feats = None
        for a in range(0, points.shape[0], chunk):
            b = min(a + chunk, points.shape[0])
            x = self._features(points[a:b], dirs[a:b])
            h = x
            last = len(self.net.weights) - 1
            for i, (w, bia) in enumerate(zip(self.net.weights, self.net.biases)):
                h = h @ w.data + bia.data
                if i != last:
                    np.maximum(h, 0.0, out=h)
            out[a:b] = expit(h[:, 0].astype(np.float64))
        return out

    __call__ = query

    def checksum(self):
        return self.net.checksum()

    def save(self, path):
        meta = {"hidden": self.net.sizes[1], "depth": len(self.net.sizes) - 2,
                "pe_x": self.enc_x.freqs, "pe_d": self.enc_d.freqs,
                "sizes": self.net.sizes}
        save_blob(path, VIS_BLOB_TYPE, meta, self.net.param_arrays())

    @classmethod
    def load(cls, path):
        _, meta, arrays = load_blob(path, expect_type=VIS_BLOB_TYPE)
        field = cls(hidden=meta["hidden"], depth=meta["depth"], dtype=arrays[0].dtype.type)
        field.enc_x = PositionalEncoding(meta["pe_x"])
        field.enc_d = PositionalEncoding(meta["pe_d"])
        field.net.load_param_arrays(arrays)
        return field


def bake_visibility(scene: SdfScene, n_points: int = 256, n_rays: int = 16,
                    epochs: int = 200, steps_per_epoch: int = 5, lr: float = 5e-4,
                    seed: int = 0, holdout: int = 2048, log=None):
    """Train the visibility field on freshly sampled labeled rays.

    Each step draws ``n_points`` surface points and ``n_rays`` cosine-weighted
    directions per point, labels them by sphere tracing, and takes one Adam
    step on the cross-entropy.  Deterministic for a fixed seed.
    """
    field = VisibilityField(seed=seed)
    opt = Adam(field.net.params, lr=lr)
    grazing = 0
    loss_val = float("nan")
    step = 0
    for epoch in range(epochs):
        for _ in range(steps_per_epoch):
            pts, nrm, _ = sample_surface_points(scene, n_points, key(seed, 1, step))
            ukey = hash2_np(np.uint64(key(seed, 2, step)),
                            np.arange(n_points * n_rays, dtype=np.uint64))
            u1 = uniform_np(ukey, np.uint64(0)).reshape(n_points, n_rays)
            u2 = uniform_np(ukey, np.uint64(1)).reshape(n_points, n_rays)
            dirs = cosine_dirs(nrm[:, None, :], u1, u2).reshape(-1, 3)
            p_flat = np.repeat(pts, n_rays, axis=0)
            n_flat = np.repeat(nrm, n_rays, axis=0)
            labels, graze = trace_visibility(scene, p_flat, n_flat, dirs)
            grazing += graze
            logits = field.logits(p_flat, dirs)
            y = as_tensor(labels.astype(field.dtype))
            loss = (logits.softplus() - logits * y).mean()
            if not np.isfinite(loss.data):
                raise FloatingPointError(f"visibility bake diverged at step {step} (seed {seed})")
            opt.zero_grad()
            loss.backward()
            opt.step()
            loss_val = float(loss.data)
            step += 1
        if log is not None and (epoch + 1) % max(1, epochs // 10) == 0:
            log(f"bake-vis epoch {epoch + 1}/{epochs} loss {loss_val:.4f}")
    # held-out accuracy on fresh points
    pts, nrm, _ = sample_surface_points(scene, holdout // n_rays + 1, key(seed, 3))
    ukey = hash2_np(np.uint64(key(seed, 4)), np.arange(pts.shape[0] * n_rays, dtype=np.uint64))
    u1 = uniform_np(ukey, np.uint64(0)).reshape(pts.shape[0], n_rays)
    u2 = uniform_np(ukey, np.uint64(1)).reshape(pts.shape[0], n_rays)
    dirs = cosine_dirs(nrm[:, None, :], u1, u2).reshape(-1, 3)
    p_flat = np.repeat(pts, n_rays, axis=0)
    n_flat = np.repeat(nrm, n_rays, axis=0)
    labels, graze = trace_visibility(scene, p_flat, n_flat, dirs)
    pred = field.query(p_flat, dirs) > 0.5
    acc = float(np.mean(pred == (labels > 0.5)))
    return field, BakeReport(final_loss=loss_val, holdout_accuracy=acc,
                             grazing_failures=grazing + graze, steps=step)


_GOLDEN_FRAC = 0.6180339887498949


def lobe_sample_uniforms(s: int, seed: int):
    """Low-variance uniforms for lobe sampling: jittered strata in the energy
    CDF coordinate, golden-ratio lattice (randomly rotated) in azimuth."""
    idx = np.arange(s, dtype=np.uint64)
    kk = hash2_np(np.uint64(key(seed, 0x11A)), idx)
    jitter = uniform_np(kk, np.uint64(0))
    shift = float(uniform_np(np.uint64(key(seed, 0x11B)), np.uint64(0)))
    u1 = (np.arange(s) + jitter) / s
    u2 = (np.arange(s) * _GOLDEN_FRAC + shift) % 1.0
    return u1, u2


def visibility_ratio(field, point, lobe: SphericalGaussian, s: int = 32, seed: int = 0):
    """Fraction of the lobe's energy that is visible from ``point``.

    ``field`` is anything mapping (points [S,3], dirs [S,3]) -> values [S];
    sampling directions proportionally to the lobe makes the energy-weighted
    average a plain mean.  Deterministic for a fixed seed.
    """
    point = np.asarray(point, dtype=np.float64)
    u1, u2 = lobe_sample_uniforms(s, seed)
    axes = np.broadcast_to(lobe.axis, (s, 3))
    dirs = sg_dirs(axes, np.full(s, lobe.sharpness), u1, u2)
    vals = np.asarray(field(np.broadcast_to(point, (s, 3)).copy(), dirs), dtype=np.float64)
    if vals.size == 0 or np.all(vals == 0.0):
        return 0.0
    return float(np.clip(np.mean(vals), 0.0, 1.0))


def modulate_sg(lobe: SphericalGaussian, gamma: float) -> SphericalGaussian:
    """Scale the lobe amplitude by a visibility ratio, keeping axis and sharpness."""
    if gamma < 0.0 or gamma > 1.0:
        warnings.warn(f"visibility ratio {gamma} outside [0,1]; clamping")
        gamma = float(np.clip(gamma, 0.0, 1.0))
    return SphericalGaussian(lobe.axis, lobe.sharpness, lobe.amplitude * gamma)


def horizon_masked(field, normals_lookup):
    """Wrap a field so below-horizon directions read as occluded.

    ``normals_lookup`` maps points [N,3] -> normals [N,3] (usually a closure
    over precomputed shade-point normals).
    """
    def query(points, dirs):
        n = normals_lookup(points)
        above = np.sum(n * dirs, axis=-1) > 0.0
        out = np.zeros(points.shape[0], dtype=np.float64)
        if np.any(above):
            out[above] = np.asarray(field(points[above], dirs[above]), dtype=np.float64)
        return out
    return query
