"""Shared scene/env builders for the test suite."""

import numpy as np

from invsg.envlight import EnvLight
from invsg.materials import MaterialSet
from invsg.scene import build_scene
from invsg.sg import SgMixture


def const_env(value=1.0, rgb=None) -> EnvLight:
    """Near-constant environment: one ultra-broad lobe (flat to ~2e-6)."""
    amp = np.asarray(rgb if rgb is not None else [value] * 3, dtype=np.float64)
    return EnvLight(SgMixture(np.array([[0.0, 0.0, 1.0]]), np.array([1e-6]), amp[None, :]))


def floor_scene(half=6.0, bound=8.0):
    """A thin slab floor at y = 0."""
    return build_scene({
        "bounds": {"center": [0, 0, 0], "radius": bound},
        "primitives": [
            {"id": "floor", "type": "box", "center": [0, -0.2, 0],
             "half_extents": [half, 0.2, half], "region": 0},
        ],
    })


def sphere_scene(radius=1.0, bound=4.0):
    return build_scene({
        "bounds": {"center": [0, 0, 0], "radius": bound},
        "primitives": [
            {"id": "ball", "type": "sphere", "center": [0, 0, 0], "radius": radius, "region": 0},
        ],
    })


def shell_cavity_scene(outer=4.0, inner=3.8):
    """Hollow closed cavity (camera goes inside); SDF positive in the cavity."""
    return build_scene({
        "bounds": {"center": [0, 0, 0], "radius": outer + 1.0},
        "primitives": [
            {"id": "outer", "type": "sphere", "center": [0, 0, 0], "radius": outer, "region": 0},
            {"id": "inner", "type": "sphere", "center": [0, 0, 0], "radius": inner, "region": 0},
        ],
        "csg": {"op": "subtract", "children": ["outer", "inner"]},
    })


def plane_ball_scene():
    """Floor slab plus a sphere hovering just above it: one concave shadow-caster."""
    return build_scene({
        "bounds": {"center": [0, 0.5, 0], "radius": 7.0},
        "primitives": [
            {"id": "floor", "type": "box", "center": [0, -0.2, 0],
             "half_extents": [4.0, 0.2, 4.0], "region": 0},
            {"id": "ball", "type": "sphere", "center": [0, 0.95, 0], "radius": 0.9, "region": 1},
        ],
    })


def lambert_mats(albedo, n_regions=1):
    return MaterialSet.constant(albedo, 1.0, n_regions=n_regions, diffuse_only=True)
