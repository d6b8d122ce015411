"""Per-region material tables (the oracle-side ground truth)."""

import json
from dataclasses import dataclass, field

import numpy as np

from .brdf import R_MIN


@dataclass
class MaterialSet:
    albedo: np.ndarray        # [R, 3] in [0, 1]
    roughness: np.ndarray     # [R] in [R_MIN, 1]
    diffuse_only: np.ndarray  # [R] bool; True disables the specular term

    def __post_init__(self):
        self.albedo = np.atleast_2d(np.asarray(self.albedo, dtype=np.float64))
        self.roughness = np.atleast_1d(np.asarray(self.roughness, dtype=np.float64))
        self.diffuse_only = np.atleast_1d(np.asarray(self.diffuse_only, dtype=np.bool_))
        r = self.albedo.shape[0]
        if self.roughness.shape != (r,) or self.diffuse_only.shape != (r,):
            raise ValueError("material arrays disagree on region count")
        if np.any(self.albedo < 0) or np.any(self.albedo > 1):
            raise ValueError("albedo out of [0, 1]")
        if np.any(self.roughness < R_MIN) or np.any(self.roughness > 1):
            raise ValueError(f"roughness out of [{R_MIN}, 1]")

    @property
    def n_regions(self):
        return self.albedo.shape[0]

    @classmethod
    def constant(cls, albedo, roughness, n_regions=1, diffuse_only=False):
        return cls(np.tile(np.asarray(albedo, dtype=np.float64), (n_regions, 1)),
                   np.full(n_regions, float(roughness)),
                   np.full(n_regions, bool(diffuse_only)))


def load_materials(path) -> MaterialSet:
    with open(path) as f:
        doc = json.load(f)
    extra = set(doc) - {"regions", "diffuse_only"}
    if extra:
        raise ValueError(f"unknown material fields {sorted(extra)}")
    regions = doc["regions"]
    keys = sorted(int(k) for k in regions)
    if keys != list(range(len(keys))):
        raise ValueError("material region ids must be contiguous from 0")
    albedo, rough, donly = [], [], []
    global_donly = bool(doc.get("diffuse_only", False))
    for k in keys:
        entry = regions[str(k)]
        extra = set(entry) - {"albedo", "roughness", "diffuse_only"}
        if extra:
            raise ValueError(f"region {k}: unknown fields {sorted(extra)}")
        albedo.append(entry["albedo"])
        rough.append(entry["roughness"])
        donly.append(bool(entry.get("diffuse_only", global_donly)))
    return MaterialSet(np.asarray(albedo), np.asarray(rough), np.asarray(donly))


def save_materials(path, mats: MaterialSet):
    doc = {"regions": {
        str(k): {
            "albedo": [float(v) for v in mats.albedo[k]],
            "roughness": float(mats.roughness[k]),
            "diffuse_only": bool(mats.diffuse_only[k]),
        } for k in range(mats.n_regions)
    }}
    with open(path, "w") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
        f.write("\n")
