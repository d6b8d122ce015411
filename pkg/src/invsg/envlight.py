"""Environment light as a bank of SG lobes (default 128).

Lobe axes live on a Fibonacci sphere and stay frozen; fitting and inverse
optimization only touch sharpness and amplitude through softplus
reparameterizations, which keeps lobes from collapsing and preserves the
lobe-count prior.

Lat-long convention: +Y is up, rows run from the north pole (row 0) to the
south pole, columns run azimuth phi in [0, 2pi) with x = sin(t)cos(phi),
z = sin(t)sin(phi).  Solid-angle weights are sin(theta).
"""

import numpy as np

from .autodiff import as_tensor, parameter
from .nets import Adam
from .quadrature import fibonacci_directions
from .rng import key, uniform_np
from .sg import SgMixture, sg_integral_scale


class EnvLight:
    """An SG environment: thin wrapper over SgMixture with IO and helpers."""

    def __init__(self, mixture: SgMixture):
        self.lobes = mixture

    @property
    def m(self):
        return len(self.lobes)

    @property
    def axes(self):
        return self.lobes.axes

    @property
    def sharpness(self):
        return self.lobes.sharpness

    @property
    def amplitudes(self):
        return self.lobes.amplitudes

    def eval(self, dirs):
        return self.lobes.eval(dirs)

    def scaled(self, c: float) -> "EnvLight":
        return EnvLight(SgMixture(self.axes.copy(), self.sharpness.copy(), self.amplitudes * c))

    def total_power(self) -> np.ndarray:
        return np.sum(self.amplitudes * sg_integral_scale(self.sharpness)[:, None], axis=0)


def eval_env(env: EnvLight, w):
    return env.eval(w)


def lobe_spacing(axes) -> float:
    """Mean nearest-neighbor angle of the lobe axes."""
    cos = axes @ axes.T
    np.fill_diagonal(cos, -2.0)
    return float(np.mean(np.arccos(np.clip(np.max(cos, axis=1), -1.0, 1.0))))


def init_lobes(m: int, seed: int = 0) -> EnvLight:
    """Fibonacci-sphere axes (seeded spiral phase), half-max overlapping lobes."""
    if m < 1:
        raise ValueError("need at least one lobe")
    phase = 2.0 * np.pi * float(uniform_np(np.uint64(key(seed, 0xE27)), np.uint64(0)))
    axes = fibonacci_directions(m, phase=phase)
    if m == 1:
        lam0 = 1.0
    else:
        half_angle = 0.5 * lobe_spacing(axes)
        lam0 = np.log(2.0) / (1.0 - np.cos(half_angle))
    amps = np.full((m, 3), 0.05)
    return EnvLight(SgMixture(axes, np.full(m, lam0), amps))


def _inv_softplus(y):
    y = np.asarray(y, dtype=np.float64)
    return np.where(y > 30.0, y, np.log(np.expm1(np.clip(y, 1e-12, None))))


def latlong_dirs(height, width):
    theta = (np.arange(height) + 0.5) / height * np.pi
    phi = (np.arange(width) + 0.5) / width * 2.0 * np.pi
    t, p = np.meshgrid(theta, phi, indexing="ij")
    st = np.sin(t)
    return np.stack([st * np.cos(p), np.cos(t), st * np.sin(p)], axis=-1), st


def fit_from_hdr(image: np.ndarray, m: int = 128, iters: int = 800, seed: int = 0,
                 lr: float = 0.05, checkpoints: int = 10):
    """Fit lobe sharpness/amplitude to a lat-long HDR map (axes frozen).

    Minimizes solid-angle-weighted squared error; reports best-so-far relative
    L2 at evenly spaced checkpoints, so the reported residual never increases.
    Returns (EnvLight, report dict).
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("expected an [H, W, 3] lat-long image")
    if not np.all(np.isfinite(image)) or np.any(image < 0.0):
        raise ValueError("HDR map must be finite and non-negative")
    h, w = image.shape[:2]
    dirs, sinw = latlong_dirs(h, w)
    dirs = dirs.reshape(-1, 3)
    weights = sinw.reshape(-1, 1)
    target = image.reshape(-1, 3)

    init = init_lobes(m, seed)
    cos = dirs @ init.axes.T                     # [HW, M], fixed
    mean_v = max(float(np.mean(target)), 1e-6)
    mu0 = 4.0 * np.pi * mean_v / (m * float(sg_integral_scale(init.sharpness[0])))
    # scaled softplus maps keep the raw parameters O(1) across HDR ranges
    lam_scale = float(init.sharpness[0])
    mu_scale = max(float(np.max(target)) * 0.25, 1e-3)
    p_lam = parameter(_inv_softplus(init.sharpness / lam_scale))
    p_mu = parameter(np.full((m, 3), _inv_softplus(mu0 / mu_scale)))

    cos_t = as_tensor(cos)
    target_t = as_tensor(target)
    weight_t = as_tensor(weights)
    denom = float(np.sum(weights * target * target)) or 1.0

    def model():
        lam = p_lam.softplus() * lam_scale
        mu = p_mu.softplus() * mu_scale
        g = (lam.reshape(1, m) * (cos_t - 1.0)).exp()
        return g @ mu, lam, mu

    opt = Adam([p_lam, p_mu], lr=lr)
    best = None
    history = []
    check_every = max(1, iters // max(checkpoints, 1))
    for it in range(iters):
        opt.zero_grad()
        pred, lam, mu = model()
        diff = pred - target_t
        loss = (weight_t * diff * diff).sum() * (1.0 / denom)
        loss.backward()
        val = float(loss.data)
        if best is None or val < best[0]:
            best = (val, lam.data.copy(), mu.data.copy())
        if (it + 1) % check_every == 0 or it == iters - 1:
            history.append({"iter": it + 1, "rel_l2": float(np.sqrt(best[0]))})
        opt.step()
    env = EnvLight(SgMixture(init.axes, best[1], best[2]))
    return env, {"rel_l2": float(np.sqrt(best[0])), "checkpoints": history}


def save_env(path, env: EnvLight):
    """One lobe per line: axis_x axis_y axis_z sharpness amp_r amp_g amp_b."""
    with open(path, "w") as f:
        for ax, lam, mu in zip(env.axes, env.sharpness, env.amplitudes):
            f.write(" ".join(repr(float(v)) for v in (*ax, lam, *mu)))
            f.write("\n")


def load_env(path) -> EnvLight:
    rows = []
    with open(path) as f:
        for ln, line in enumerate(f):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 7:
                raise ValueError(f"{path}:{ln + 1}: expected 7 numbers per lobe line")
            rows.append([float(v) for v in parts])
    arr = np.array(rows, dtype=np.float64)
    return EnvLight(SgMixture(arr[:, 0:3], arr[:, 3], arr[:, 4:7]))


def synthetic_probe(height: int = 64, width: int = 128, seed: int = 0) -> np.ndarray:
    """Procedural outdoor-ish HDR probe: sky gradient, sun disc, ground, color blobs."""
    dirs, _ = latlong_dirs(height, width)
    y = dirs[..., 1]
    img = np.zeros((height, width, 3))
    sky = np.clip(y, 0.0, 1.0)[..., None] * np.array([0.35, 0.5, 0.9]) + np.array([0.25, 0.3, 0.4])
    ground = (np.array([0.25, 0.18, 0.12]) * (1.0 + 0.3 * np.clip(-y, 0, 1))[..., None])
    blend = np.clip(0.5 + y / 0.3, 0.0, 1.0)[..., None]  # hazy horizon band
    img += blend * sky + (1.0 - blend) * ground
    rng = np.random.default_rng(seed)
    # sun blob broad enough for a frozen-axis lobe bank to resolve (real captures
    # blur the solar disc well past this width anyway)
    sun_dir = np.array([0.45, 0.75, 0.3])
    sun_dir /= np.linalg.norm(sun_dir)
    img += np.exp(22.0 * (dirs @ sun_dir - 1.0))[..., None] * np.array([20.0, 17.0, 13.0])
    for color, sharp in [([2.0, 0.6, 0.3], 18.0), ([0.3, 1.4, 2.2], 12.0), ([0.9, 1.8, 0.5], 25.0)]:
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        img += np.exp(sharp * (dirs @ d - 1.0))[..., None] * np.asarray(color)
    return img
