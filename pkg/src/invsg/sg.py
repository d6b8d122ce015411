"""Spherical-Gaussian algebra.

A lobe ``G(w; axis, sharpness, amplitude) = amplitude * exp(sharpness * (dot(w, axis) - 1))``
is closed under pointwise products and has a closed-form integral over the
sphere, which is what makes SG lighting fast: hemispherical shading integrals
collapse to a handful of exp/norm evaluations per lobe.

All math is float64.  Scalar entry points operate on single lobes; the
``*_many`` helpers take stacked arrays and are what the renderer uses.
"""

from dataclasses import dataclass

import numpy as np

UNIT_TOL = 1e-6          # tolerance for "is a unit vector" contract checks
EPS_SHARP = 1e-4         # sharpness assigned to degenerate product lobes
LAMBDA_COS = 2.133       # single-lobe fit of the clamped cosine max(dot(w,n),0)
MU_COS = 1.17

TWO_PI = 2.0 * np.pi


class ContractError(ValueError):
    """An argument violated an operation's precondition."""


def _as_rgb(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    if a.shape == ():
        a = np.full(3, float(a))
    if a.shape != (3,):
        raise ContractError(f"expected an RGB triple, got shape {a.shape}")
    return a


def check_unit(v: np.ndarray, name: str = "direction") -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v, axis=-1)
    if not np.all(np.abs(n - 1.0) <= 1e-5):
        raise ContractError(f"{name} must be unit length (|norm-1| max {np.max(np.abs(n - 1.0)):.3g})")
    return v


@dataclass(frozen=True)
class SphericalGaussian:
    """One SG lobe: unit axis, positive sharpness, non-negative RGB amplitude."""

    axis: np.ndarray
    sharpness: float
    amplitude: np.ndarray

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=np.float64)
        if axis.shape != (3,):
            raise ContractError(f"axis must be a 3-vector, got shape {axis.shape}")
        if abs(np.linalg.norm(axis) - 1.0) > UNIT_TOL:
            raise ContractError("axis must be unit length within 1e-6")
        if not (self.sharpness > 0.0):
            raise ContractError("sharpness must be positive")
        amp = _as_rgb(self.amplitude)
        if np.any(amp < 0.0):
            raise ContractError("amplitude must be non-negative")
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "sharpness", float(self.sharpness))
        object.__setattr__(self, "amplitude", amp)


class SgMixture:
    """An ordered bank of SG lobes stored as stacked arrays."""

    def __init__(self, axes, sharpness, amplitudes):
        axes = np.atleast_2d(np.asarray(axes, dtype=np.float64))
        sharpness = np.atleast_1d(np.asarray(sharpness, dtype=np.float64))
        amplitudes = np.atleast_2d(np.asarray(amplitudes, dtype=np.float64))
        m = axes.shape[0]
        if m < 1:
            raise ContractError("a mixture needs at least one lobe")
        if axes.shape != (m, 3) or sharpness.shape != (m,) or amplitudes.shape != (m, 3):
            raise ContractError("lobe array shapes disagree")
        if np.any(np.abs(np.linalg.norm(axes, axis=1) - 1.0) > UNIT_TOL):
            raise ContractError("all lobe axes must be unit length")
        if np.any(sharpness <= 0.0):
            raise ContractError("all lobe sharpness values must be positive")
        if np.any(amplitudes < 0.0):
            raise ContractError("all lobe amplitudes must be non-negative")
        self.axes = axes
        self.sharpness = sharpness
        self.amplitudes = amplitudes

    @classmethod
    def from_lobes(cls, lobes):
        lobes = list(lobes)
        return cls(
            np.stack([g.axis for g in lobes]),
            np.array([g.sharpness for g in lobes]),
            np.stack([g.amplitude for g in lobes]),
        )

    def __len__(self):
        return self.axes.shape[0]

    def __getitem__(self, k) -> SphericalGaussian:
        return SphericalGaussian(self.axes[k], self.sharpness[k], self.amplitudes[k])

    def eval(self, dirs: np.ndarray) -> np.ndarray:
        """Sum of all lobes at unit direction(s) ``dirs`` ([..., 3] -> [..., 3])."""
        dirs = check_unit(dirs)
        cos = dirs @ self.axes.T                       # [..., M]
        g = np.exp(self.sharpness * (cos - 1.0))       # [..., M]
        return g @ self.amplitudes                     # [..., 3]


def sg_eval(g: SphericalGaussian, w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if abs(np.linalg.norm(w) - 1.0) > 1e-5:
        raise ContractError("evaluation direction must be unit length")
    return g.amplitude * np.exp(g.sharpness * (float(w @ g.axis) - 1.0))


def sg_eval_many(axes, sharpness, amplitudes, dirs) -> np.ndarray:
    """Per-lobe evaluation with broadcasting: [..., 3] each -> [..., 3]."""
    cos = np.sum(np.asarray(dirs) * np.asarray(axes), axis=-1)
    return np.asarray(amplitudes) * np.exp(np.asarray(sharpness) * (cos - 1.0))[..., None]


def sg_integral(g: SphericalGaussian) -> np.ndarray:
    """Exact integral of the lobe over the whole sphere."""
    return g.amplitude * sg_integral_scale(g.sharpness)


def sg_integral_scale(sharpness):
    """Integral of exp(sharpness*(cos t - 1)) over the sphere: 2pi/l * (1 - exp(-2l))."""
    lam = np.asarray(sharpness, dtype=np.float64)
    return TWO_PI / lam * (-np.expm1(-2.0 * lam))


def sg_product(g1: SphericalGaussian, g2: SphericalGaussian) -> SphericalGaussian:
    """Exact pointwise product of two lobes, itself an SG.

    Degenerate cancellation (antipodal axes with equal sharpness) collapses the
    combined axis; the result is then a near-constant lobe with EPS_SHARP.
    """
    u = g1.sharpness * g1.axis + g2.sharpness * g2.axis
    lam = float(np.linalg.norm(u))
    if lam < EPS_SHARP:
        axis = g1.axis
        lam = EPS_SHARP
    else:
        axis = u / lam
    amp = g1.amplitude * g2.amplitude * np.exp(lam - g1.sharpness - g2.sharpness)
    return SphericalGaussian(axis, lam, amp)


def sg_inner_product(g1: SphericalGaussian, g2: SphericalGaussian) -> np.ndarray:
    """Integral over the sphere of the pointwise product of two lobes."""
    return sg_integral(sg_product(g1, g2))


def sg_product_many(ax1, l1, mu1, ax2, l2, mu2):
    """Batched sg_product on broadcastable stacks; returns (axes, sharpness, amps)."""
    l1 = np.asarray(l1, dtype=np.float64)
    l2 = np.asarray(l2, dtype=np.float64)
    u = l1[..., None] * np.asarray(ax1) + l2[..., None] * np.asarray(ax2)
    lam = np.linalg.norm(u, axis=-1)
    safe = np.maximum(lam, EPS_SHARP)
    axes = np.where(lam[..., None] < EPS_SHARP, np.asarray(ax1) * np.ones_like(u), u / safe[..., None])
    lam = safe
    mu = np.asarray(mu1) * np.asarray(mu2) * np.exp(lam - l1 - l2)[..., None]
    return axes, lam, mu


def sg_inner_product_many(ax1, l1, mu1, ax2, l2, mu2):
    _, lam, mu = sg_product_many(ax1, l1, mu1, ax2, l2, mu2)
    return mu * sg_integral_scale(lam)[..., None]


def clamped_cosine_sg(n) -> SphericalGaussian:
    """Single-SG fit of max(dot(w, n), 0) with the usual least-squares constants."""
    n = check_unit(np.asarray(n, dtype=np.float64), "normal")
    return SphericalGaussian(n, LAMBDA_COS, np.full(3, MU_COS))
