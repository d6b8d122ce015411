"""Outgoing-radiance field backed by the path tracer, with a persistent cache.

This stands in for a radiance field learned from photographs: the scene's
true materials are known here, so outgoing radiance at any surface point is
just a (cached) path-traced estimate.  Cache keys quantize the query so
repeat lookups are bit-identical; entries are invalidated when spp or the
bounce budget changes.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .envlight import EnvLight
from .materials import MaterialSet
from .pathtracer import PtConfig, outgoing_radiance_batch
from .rng import key
from .scene import SdfScene, SurfaceHit

CACHE_MAGIC = b"INVSGRC1"
_QUANT = 4096.0  # cache key quantization (per world unit / per unit direction)


@dataclass
class RadianceField:
    scene: SdfScene
    materials: MaterialSet
    env: EnvLight
    spp: int = 256
    max_bounces: int = 4
    seed: int = 0
    cache: dict = field(default_factory=dict)

    def _cfg(self):
        return PtConfig(spp=self.spp, max_bounces=self.max_bounces, seed=self.seed)

    @staticmethod
    def _quant_key(p, d):
        q = np.round(np.concatenate([p, d]) * _QUANT).astype(np.int64)
        return tuple(int(v) for v in q)

    def query_outgoing(self, hit: SurfaceHit, out_dir: np.ndarray) -> np.ndarray:
        """Path-traced L_o(hit, out_dir); bit-identical on repeat queries."""
        out_dir = np.asarray(out_dir, dtype=np.float64)
        if float(out_dir @ hit.normal) <= 0.0:
            raise ValueError("outgoing direction must be in the upper hemisphere")
        k = self._quant_key(hit.point, out_dir)
        got = self.cache.get(k)
        if got is not None:
            return got.copy()
        val = self.query_many(hit.point[None, :], hit.normal[None, :],
                              np.array([hit.region], dtype=np.int32), out_dir[None, :])[0]
        self.cache[k] = val.copy()
        return val

    def query_many(self, points, normals, regions, out_dirs) -> np.ndarray:
        """Batched query; each row's RNG stream comes from its quantized key."""
        points = np.asarray(points, dtype=np.float64)
        out_dirs = np.asarray(out_dirs, dtype=np.float64)
        streams = np.empty(points.shape[0], dtype=np.uint64)
        for i in range(points.shape[0]):
            streams[i] = np.uint64(key(*self._quant_key(points[i], out_dirs[i])) & ((1 << 64) - 1))
        return outgoing_radiance_batch(self.scene, self.env, self.materials,
                                       points, normals, regions, out_dirs,
                                       self._cfg(), streams)

    # -- persistence --------------------------------------------------------

    def save_cache(self, path):
        ks = np.array(sorted(self.cache.keys()), dtype=np.int64).reshape(-1, 6)
        vs = np.stack([self.cache[tuple(k)] for k in ks]) if len(ks) else np.zeros((0, 3))
        with open(path, "wb") as f:
            f.write(CACHE_MAGIC)
            f.write(struct.pack("<iiq", self.spp, self.max_bounces, ks.shape[0]))
            f.write(ks.tobytes())
            f.write(np.ascontiguousarray(vs, dtype=np.float64).tobytes())

    def load_cache(self, path):
        with open(path, "rb") as f:
            if f.read(8) != CACHE_MAGIC:
                raise ValueError(f"{path}: not a radiance cache")
            spp, bounces, n = struct.unpack("<iiq", f.read(16))
            if spp != self.spp or bounces != self.max_bounces:
                return 0  # stale: tracing parameters changed
            ks = np.frombuffer(f.read(n * 6 * 8), dtype=np.int64).reshape(n, 6)
            vs = np.frombuffer(f.read(n * 3 * 8), dtype=np.float64).reshape(n, 3)
        for k, v in zip(ks, vs):
            self.cache[tuple(int(x) for x in k)] = v.copy()
        return n
