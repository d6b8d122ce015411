"""Unbiased Monte-Carlo path tracer: reference images, masks, and the
outgoing-radiance oracle behind indirect baking.

Lighting is environment-only, so BRDF importance sampling with an
environment lookup on escape is unbiased without next-event estimation.
``truncate_to_env`` closes the transport at the bounce cap by substituting
the environment for the missing recursion; it exists for furnace-style
closed-cavity tests and is off for all reference renders.
"""

from dataclasses import dataclass

import numpy as np

from . import pt_kernels as PT
from .camera import Camera
from .envlight import EnvLight
from .imageio import RenderTarget
from .materials import MaterialSet
from .rng import key
from .scene import Ray, SdfScene


@dataclass(frozen=True)
class PtConfig:
    spp: int = 256
    max_bounces: int = 4
    rr_start: int = 3
    seed: int = 0
    truncate_to_env: bool = False

    def __post_init__(self):
        if self.spp < 1 or self.max_bounces < 1:
            raise ValueError("spp and max_bounces must be at least 1")


def _mat_arrays(scene: SdfScene, mats: MaterialSet):
    if int(np.max(scene.prim_region)) >= mats.n_regions:
        raise ValueError("scene references a region with no material")
    return (scene.prim_region, mats.albedo, mats.roughness, mats.diffuse_only)


def _env_arrays(env: EnvLight):
    return (env.axes, env.sharpness, env.amplitudes)


def trace_path(scene: SdfScene, env: EnvLight, mats: MaterialSet, ray: Ray,
               cfg: PtConfig, stream: int = 0) -> np.ndarray:
    """Estimate of outgoing radiance along one camera ray (cfg.spp samples)."""
    rgb, _ = PT.render_rays(scene, _env_arrays(env), _mat_arrays(scene, mats),
                            ray.origin[None, :], ray.direction[None, :],
                            cfg.spp, cfg.max_bounces, cfg.rr_start,
                            cfg.truncate_to_env, key(cfg.seed, stream))
    return rgb[0]


def render_reference(scene: SdfScene, env: EnvLight, mats: MaterialSet,
                     camera: Camera, cfg: PtConfig) -> RenderTarget:
    """Per-pixel trace_path average with an exact hit/miss alpha mask."""
    origins, dirs = camera.rays()
    rgb, alpha = PT.render_rays(scene, _env_arrays(env), _mat_arrays(scene, mats),
                                origins, dirs, cfg.spp, cfg.max_bounces, cfg.rr_start,
                                cfg.truncate_to_env, np.uint64(key(cfg.seed, 0x5EED)))
    h, w = camera.height, camera.width
    return RenderTarget(rgb.reshape(h, w, 3), alpha.reshape(h, w))


def outgoing_radiance_batch(scene: SdfScene, env: EnvLight, mats: MaterialSet,
                            points, normals, regions, out_dirs, cfg: PtConfig,
                            streams) -> np.ndarray:
    """Path-traced L_o at surface points toward out_dirs ([N,3] each).

    ``streams`` is an int array keying each query's RNG stream; identical
    (point, direction, stream) queries return identical estimates.
    """
    dins = -np.asarray(out_dirs, dtype=np.float64)
    from .rng import hash2_np
    keys = hash2_np(np.uint64(key(cfg.seed, 0x0A7)), np.asarray(streams, dtype=np.uint64))
    return PT.outgoing_radiance(scene, _env_arrays(env), _mat_arrays(scene, mats),
                                points, normals, regions, dins, keys,
                                cfg.spp, cfg.max_bounces, cfg.rr_start)
