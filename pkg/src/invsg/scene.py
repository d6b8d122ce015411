"""Analytic SDF scenes with material regions.

A scene is a small set of exact primitives (sphere, box, plane, torus)
combined by a CSG tree of min/max combiners, plus a world-space bounding
sphere used to terminate rays.  Primitives are exact SDFs and the combiners
preserve the 1-Lipschitz property, so sphere tracing can step by the full
SDF value without ever crossing the surface.

Scene files are JSON; the exact schema lives in docs/scene_schema.md and the
parser rejects unknown fields.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import sdf_kernels as K

PRIM_SPHERE, PRIM_BOX, PRIM_PLANE, PRIM_TORUS = 0, 1, 2, 3
CSG_LEAF, CSG_UNION, CSG_SUBTRACT, CSG_INTERSECT = 0, 1, 2, 3

_PRIM_FIELDS = {
    "sphere": {"id", "type", "center", "radius", "region"},
    "box": {"id", "type", "center", "half_extents", "region", "rotation_deg"},
    "plane": {"id", "type", "normal", "offset", "region"},
    "torus": {"id", "type", "center", "major_radius", "minor_radius", "region", "rotation_deg"},
}


class SceneError(ValueError):
    """Malformed scene description."""


@dataclass(frozen=True)
class SurfaceHit:
    point: np.ndarray       # world-space position on the surface
    normal: np.ndarray      # outward unit normal
    region: int             # material region id
    t: float                # ray parameter of the hit


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64)
        d = np.asarray(self.direction, dtype=np.float64)
        if abs(np.linalg.norm(d) - 1.0) > 1e-6:
            raise SceneError("ray direction must be unit length")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)


def _rotation_matrix(deg):
    rx, ry, rz = np.radians(np.asarray(deg, dtype=np.float64))
    cx, sx, cy, sy, cz, sz = np.cos(rx), np.sin(rx), np.cos(ry), np.sin(ry), np.cos(rz), np.sin(rz)
    mx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    my = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    mz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return mz @ my @ mx


@dataclass
class SdfScene:
    """Flattened scene ready for the tracing kernels."""

    prim_type: np.ndarray      # [P] int32
    prim_rot: np.ndarray       # [P,3,3] world->local rotation
    prim_trans: np.ndarray     # [P,3] primitive centers
    prim_params: np.ndarray    # [P,4] size parameters / plane coefficients
    prim_region: np.ndarray    # [P] int32
    node_kind: np.ndarray      # [K] int32, children before parents, root last
    node_a: np.ndarray         # [K] int32 (leaf: primitive index)
    node_b: np.ndarray         # [K] int32
    bound_center: np.ndarray   # [3]
    bound_radius: float
    prim_ids: list = field(default_factory=list)
    region_names: dict = field(default_factory=dict)

    @property
    def eps_hit(self) -> float:
        return 1e-5 * self.bound_radius

    @property
    def eps_offset(self) -> float:
        return 10.0 * self.eps_hit

    def kernel_args(self):
        return (self.prim_type, self.prim_rot, self.prim_trans, self.prim_params,
                self.node_kind, self.node_a, self.node_b)

    # -- queries ----------------------------------------------------------

    def sdf(self, points: np.ndarray) -> np.ndarray:
        """Signed distance at one point or a batch of points."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        d = K.sdf_batch(self.kernel_args(), pts)
        return float(d[0]) if np.asarray(points).ndim == 1 else d

    def normal(self, points: np.ndarray) -> np.ndarray:
        """Tetrahedral finite-difference gradient of the SDF, normalized."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        n, ok = K.normal_batch(self.kernel_args(), pts, 2.0 * self.eps_hit)
        if not np.all(ok):
            raise SceneError("zero SDF gradient (CSG edge singularity)")
        return n[0] if np.asarray(points).ndim == 1 else n

    def region_at(self, points: np.ndarray) -> np.ndarray:
        """Region of the primitive whose surface is nearest to each point."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        r = K.region_batch((self.prim_type, self.prim_rot, self.prim_trans,
                            self.prim_params), self.prim_region, pts)
        return int(r[0]) if np.asarray(points).ndim == 1 else r

    def trace(self, origins, dirs):
        """Sphere trace a batch of rays.

        Returns (t, flag) with flag 0 = escaped, 1 = hit, 2 = grazing
        failure (step budget exhausted inside bounds; treated as a miss and
        reported in diagnostics).
        """
        o = np.atleast_2d(np.asarray(origins, dtype=np.float64))
        d = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
        o, d = np.broadcast_arrays(o, d)
        return K.trace_batch(self.kernel_args(), np.ascontiguousarray(o), np.ascontiguousarray(d),
                             self.bound_center, self.bound_radius, self.eps_hit, 256)

    def sphere_trace(self, ray: Ray):
        """Trace one ray; returns a SurfaceHit or None on a miss."""
        t, flag = self.trace(ray.origin[None, :], ray.direction[None, :])
        if flag[0] != 1:
            return None
        p = ray.origin + float(t[0]) * ray.direction
        return SurfaceHit(p, self.normal(p), self.region_at(p), float(t[0]))

    def second_intersection(self, point, normal, direction):
        """Trace onward from a surface point, offset along the normal.

        Retries once with a doubled offset if the ray immediately re-hits
        within the offset distance; raises if it still sticks.
        """
        for k in (1.0, 2.0):
            off = k * self.eps_offset
            origin = np.asarray(point) + off * np.asarray(normal)
            t, flag = self.trace(origin[None, :], np.asarray(direction)[None, :])
            if flag[0] != 1:
                return None
            if t[0] >= off:
                p = origin + float(t[0]) * np.asarray(direction)
                return SurfaceHit(p, self.normal(p), self.region_at(p), float(t[0]))
        raise SceneError("secondary ray keeps self-hitting within the surface offset")


def _parse_primitive(entry, index):
    if not isinstance(entry, dict):
        raise SceneError(f"primitive #{index} is not an object")
    ptype = entry.get("type")
    if ptype not in _PRIM_FIELDS:
        raise SceneError(f"primitive #{index}: unknown type {ptype!r}")
    unknown = set(entry) - _PRIM_FIELDS[ptype]
    if unknown:
        raise SceneError(f"primitive #{index}: unknown fields {sorted(unknown)}")
    rot = np.eye(3)
    if "rotation_deg" in entry:
        rot = _rotation_matrix(entry["rotation_deg"]).T  # store world->local
    trans = np.zeros(3)
    params = np.zeros(4)
    if ptype == "sphere":
        trans = np.asarray(entry["center"], dtype=np.float64)
        params[0] = float(entry["radius"])
        code = PRIM_SPHERE
    elif ptype == "box":
        trans = np.asarray(entry["center"], dtype=np.float64)
        params[:3] = np.asarray(entry["half_extents"], dtype=np.float64)
        code = PRIM_BOX
    elif ptype == "plane":
        n = np.asarray(entry["normal"], dtype=np.float64)
        nn = np.linalg.norm(n)
        if nn == 0:
            raise SceneError(f"primitive #{index}: zero plane normal")
        params[:3] = n / nn
        params[3] = float(entry["offset"])
        code = PRIM_PLANE
    else:
        trans = np.asarray(entry["center"], dtype=np.float64)
        params[0] = float(entry["major_radius"])
        params[1] = float(entry["minor_radius"])
        code = PRIM_TORUS
    return code, rot, trans, params, int(entry["region"]), str(entry["id"])


def _flatten_csg(node, ids, kinds, aidx, bidx):
    """Append node (children first) and return its index."""
    if isinstance(node, str):
        if node not in ids:
            raise SceneError(f"csg references unknown primitive {node!r}")
        kinds.append(CSG_LEAF)
        aidx.append(ids[node])
        bidx.append(-1)
        return len(kinds) - 1
    if not isinstance(node, dict) or set(node) - {"op", "children"}:
        raise SceneError(f"bad csg node: {node!r}")
    op = {"union": CSG_UNION, "subtract": CSG_SUBTRACT, "intersect": CSG_INTERSECT}.get(node.get("op"))
    if op is None:
        raise SceneError(f"unknown csg op {node.get('op')!r}")
    children = node.get("children", [])
    if len(children) < 2:
        raise SceneError("csg node needs at least two children")
    left = _flatten_csg(children[0], ids, kinds, aidx, bidx)
    for child in children[1:]:
        right = _flatten_csg(child, ids, kinds, aidx, bidx)
        kinds.append(op)
        aidx.append(left)
        bidx.append(right)
        left = len(kinds) - 1
    return left


def build_scene(desc: dict) -> SdfScene:
    unknown = set(desc) - {"bounds", "primitives", "csg", "regions"}
    if unknown:
        raise SceneError(f"unknown top-level fields {sorted(unknown)}")
    try:
        bounds = desc["bounds"]
        prims = desc["primitives"]
    except KeyError as e:
        raise SceneError(f"missing required field {e.args[0]!r}")
    if set(bounds) - {"center", "radius"}:
        raise SceneError("bounds accepts only center and radius")
    if not prims:
        raise SceneError("scene needs at least one primitive")

    parsed = [_parse_primitive(p, i) for i, p in enumerate(prims)]
    ids = {}
    for i, (_, _, _, _, _, pid) in enumerate(parsed):
        if pid in ids:
            raise SceneError(f"duplicate primitive id {pid!r}")
        ids[pid] = i

    kinds, aidx, bidx = [], [], []
    csg = desc.get("csg")
    if csg is None:
        csg = {"op": "union", "children": [p[5] for p in parsed]} if len(parsed) > 1 else parsed[0][5]
    _flatten_csg(csg, ids, kinds, aidx, bidx)

    regions = {int(k): str(v) for k, v in desc.get("regions", {}).items()}
    return SdfScene(
        prim_type=np.array([p[0] for p in parsed], dtype=np.int32),
        prim_rot=np.ascontiguousarray(np.stack([p[1] for p in parsed])),
        prim_trans=np.ascontiguousarray(np.stack([p[2] for p in parsed])),
        prim_params=np.ascontiguousarray(np.stack([p[3] for p in parsed])),
        prim_region=np.array([p[4] for p in parsed], dtype=np.int32),
        node_kind=np.array(kinds, dtype=np.int32),
        node_a=np.array(aidx, dtype=np.int32),
        node_b=np.array(bidx, dtype=np.int32),
        bound_center=np.asarray(bounds["center"], dtype=np.float64),
        bound_radius=float(bounds["radius"]),
        prim_ids=[p[5] for p in parsed],
        region_names=regions,
    )


def load_scene(path) -> SdfScene:
    with open(path) as f:
        try:
            desc = json.load(f)
        except json.JSONDecodeError as e:
            raise SceneError(f"{path}: invalid JSON at offset {e.pos}: {e.msg}")
    return build_scene(desc)
