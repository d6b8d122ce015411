"""Simplified dielectric BRDF: Lambertian diffuse + GGX specular, fixed F0.

The exact evaluation feeds the path-tracing oracle; ``specular_to_sg`` is the
single-lobe approximation the fast renderer integrates against environment
lobes.  Roughness r maps to the GGX width as alpha = r^2.  F0 is fixed at
0.02 (dielectric) and never optimized.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .sg import SphericalGaussian

R_MIN = 0.02
F0 = 0.02


@dataclass(frozen=True)
class BrdfParams:
    albedo: np.ndarray
    roughness: float

    def __post_init__(self):
        a = np.asarray(self.albedo, dtype=np.float64)
        if a.shape != (3,) or np.any(a < 0.0) or np.any(a > 1.0):
            raise ValueError("albedo must be an RGB triple in [0, 1]")
        r = float(self.roughness)
        if not (R_MIN <= r <= 1.0):
            raise ValueError(f"roughness must lie in [{R_MIN}, 1]")
        object.__setattr__(self, "albedo", a)
        object.__setattr__(self, "roughness", r)


def ggx_d(cos_h, alpha):
    """GGX normal distribution (cos_h = dot(n, h))."""
    c = np.maximum(cos_h, 0.0)
    denom = c * c * (alpha * alpha - 1.0) + 1.0
    return alpha * alpha / (np.pi * denom * denom)


def smith_g1(cos_v, alpha):
    """Exact Smith masking for GGX, one direction."""
    c = np.maximum(cos_v, 1e-12)
    return 2.0 * c / (c + np.sqrt(alpha * alpha + (1.0 - alpha * alpha) * c * c))


def fresnel_schlick(cos_d):
    return F0 + (1.0 - F0) * (1.0 - np.clip(cos_d, 0.0, 1.0)) ** 5


def eval_brdf_many(albedo, roughness, wi, wo, n, diffuse_only=False):
    """Vectorized BRDF evaluation; zero where either direction is below the horizon.

    Shapes broadcast; albedo [..., 3], roughness [...], directions [..., 3].
    """
    wi = np.asarray(wi, dtype=np.float64)
    wo = np.asarray(wo, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    albedo = np.asarray(albedo, dtype=np.float64)
    roughness = np.asarray(roughness, dtype=np.float64)
    ci = np.sum(wi * n, axis=-1)
    co = np.sum(wo * n, axis=-1)
    above = (ci > 0.0) & (co > 0.0)
    f = np.broadcast_to(albedo / np.pi, np.broadcast_shapes(albedo.shape, wi.shape)).copy()
    if not diffuse_only:
        h = wi + wo
        hn = np.linalg.norm(h, axis=-1, keepdims=True)
        h = h / np.maximum(hn, 1e-300)
        alpha = roughness * roughness
        d = ggx_d(np.sum(n * h, axis=-1), alpha)
        g = smith_g1(ci, alpha) * smith_g1(co, alpha)
        fr = fresnel_schlick(np.sum(wi * h, axis=-1))
        spec = d * g * fr / np.maximum(4.0 * ci * co, 1e-12)
        f = f + spec[..., None]
    return np.where(above[..., None], f, 0.0)


def eval_brdf(p: BrdfParams, wi, wo, n, debug=False):
    """BRDF value for one configuration; below-horizon directions yield zero."""
    wi = np.asarray(wi, dtype=np.float64)
    wo = np.asarray(wo, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    if debug and (wi @ n <= 0.0 or wo @ n <= 0.0):
        warnings.warn("eval_brdf called with a below-horizon direction; returning zero")
    return eval_brdf_many(p.albedo, p.roughness, wi, wo, n)


def reflect(v, n):
    """Mirror v about n (both unit); returns the reflected direction."""
    v = np.asarray(v, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    return 2.0 * np.sum(v * n, axis=-1, keepdims=True) * n - v


def specular_to_sg(p: BrdfParams, wo, n) -> SphericalGaussian:
    """Single-SG fit of the specular lobe in the incident-direction domain.

    The GGX NDF is an SG around the normal with sharpness 2/alpha^2 and peak
    1/(pi alpha^2); warping half vectors to incident directions around the
    mirror direction divides sharpness by 4|dot(n, wo)|, and the amplitude
    carries the Fresnel and masking terms evaluated at the lobe center.
    """
    r = max(p.roughness, R_MIN)
    if p.roughness < R_MIN:
        warnings.warn(f"roughness clamped up to {R_MIN}")
    wo = np.asarray(wo, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    co = float(wo @ n)
    if co <= 0.0:
        raise ValueError("outgoing direction must be in the upper hemisphere")
    alpha = r * r
    axis = reflect(wo, n)
    axis = axis / np.linalg.norm(axis)
    sharp = (2.0 / (alpha * alpha)) / (4.0 * max(co, 1e-4))
    peak = 1.0 / (np.pi * alpha * alpha)
    g = smith_g1(co, alpha) ** 2        # at the lobe center dot(n, wi) == dot(n, wo)
    fr = fresnel_schlick(co)            # half vector == n at the center
    amp = peak * fr * g / (4.0 * co * co)
    return SphericalGaussian(axis, sharp, np.full(3, amp))


def _tangent_frame(n):
    n = np.asarray(n, dtype=np.float64)
    s = np.copysign(1.0, n[..., 2])
    a = -1.0 / (s + n[..., 2])
    b = n[..., 0] * n[..., 1] * a
    t1 = np.stack([1.0 + s * n[..., 0] ** 2 * a, s * b, -s * n[..., 0]], axis=-1)
    t2 = np.stack([b, s + n[..., 1] ** 2 * a, -n[..., 1]], axis=-1)
    return t1, t2


def specular_probability(albedo, roughness):
    """Mixture weight for the specular sampling strategy (sharper lobes get more)."""
    return float(np.clip(0.5 * (1.0 - roughness) + 0.05, 0.05, 0.55))


def brdf_pdf(p: BrdfParams, wo, n, wi, diffuse_only=False):
    """Density of sample_brdf's mixture strategy at wi (solid-angle measure)."""
    wi = np.asarray(wi, dtype=np.float64)
    ci = np.sum(wi * n, axis=-1)
    pdf_d = np.maximum(ci, 0.0) / np.pi
    if diffuse_only:
        return pdf_d
    ps = specular_probability(p.albedo, p.roughness)
    h = wi + wo
    h = h / np.maximum(np.linalg.norm(h, axis=-1, keepdims=True), 1e-300)
    alpha = p.roughness ** 2
    ch = np.sum(h * n, axis=-1)
    doh = np.maximum(np.sum(wo * h, axis=-1), 1e-12)
    pdf_s = ggx_d(ch, alpha) * np.maximum(ch, 0.0) / (4.0 * doh)
    return (1.0 - ps) * pdf_d + ps * pdf_s


def _cosine_sample(n, u1, u2):
    t1, t2 = _tangent_frame(n)
    rr = np.sqrt(u1)
    phi = 2.0 * np.pi * u2
    z = np.sqrt(np.maximum(0.0, 1.0 - u1))
    return rr * np.cos(phi) * t1 + rr * np.sin(phi) * t2 + z * np.asarray(n)


def _ggx_half_sample(n, alpha, u1, u2):
    phi = 2.0 * np.pi * u2
    ct = np.sqrt((1.0 - u1) / (1.0 + (alpha * alpha - 1.0) * u1))
    st = np.sqrt(np.maximum(0.0, 1.0 - ct * ct))
    t1, t2 = _tangent_frame(n)
    return st * np.cos(phi) * t1 + st * np.sin(phi) * t2 + ct * np.asarray(n)


def sample_brdf(p: BrdfParams, wo, n, u, diffuse_only=False):
    """Draw an incident direction; returns (wi, pdf, weight = f*cos/pdf).

    Mixture of cosine-hemisphere and GGX half-vector sampling.  A sample whose
    pdf underflows (or lands below the horizon) is retried once with a
    scrambled uniform pair, then returned with zero weight.
    """
    wo = np.asarray(wo, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    u1, u2 = float(u[0]), float(u[1])
    ps = 0.0 if diffuse_only else specular_probability(p.albedo, p.roughness)
    for attempt in range(2):
        if u1 < 1.0 - ps:
            wi = _cosine_sample(n, u1 / (1.0 - ps), u2)
        else:
            h = _ggx_half_sample(n, p.roughness ** 2, (u1 - (1.0 - ps)) / ps, u2)
            wi = reflect(wo, h)
        wi = wi / np.linalg.norm(wi)
        if wi @ n <= 0.0:
            # a legitimate zero of the integrand, not a numerical failure:
            # keep the sample with zero weight so the estimator stays unbiased
            return wi, float(brdf_pdf(p, wo, n, wi, diffuse_only=diffuse_only)), np.zeros(3)
        pdf = float(brdf_pdf(p, wo, n, wi, diffuse_only=diffuse_only))
        if pdf > 1e-12:
            f = eval_brdf_many(p.albedo, p.roughness, wi, wo, n, diffuse_only=diffuse_only)
            weight = f * (wi @ n) / pdf
            return wi, pdf, weight
        u1 = (u1 + 0.6180339887498949) % 1.0   # pdf underflow: one scrambled retry
        u2 = (u2 + 0.3819660112501051) % 1.0
    return wi, pdf, np.zeros(3)
