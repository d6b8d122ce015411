"""Pinhole cameras and deterministic orbit generation."""

import json
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Camera:
    origin: np.ndarray
    look_at: np.ndarray
    up: np.ndarray
    fov_deg: float      # vertical field of view
    width: int
    height: int

    def basis(self):
        fwd = np.asarray(self.look_at, dtype=np.float64) - np.asarray(self.origin, dtype=np.float64)
        fwd = fwd / np.linalg.norm(fwd)
        right = np.cross(fwd, np.asarray(self.up, dtype=np.float64))
        right = right / np.linalg.norm(right)
        upv = np.cross(right, fwd)
        return fwd, right, upv

    def rays(self):
        """Per-pixel center rays: (origins [H*W,3], dirs [H*W,3]), row-major from the top."""
        fwd, right, upv = self.basis()
        tan_half = np.tan(np.radians(self.fov_deg) * 0.5)
        aspect = self.width / self.height
        j, i = np.meshgrid(np.arange(self.width), np.arange(self.height))
        u = ((j + 0.5) / self.width * 2.0 - 1.0) * tan_half * aspect
        v = (1.0 - (i + 0.5) / self.height * 2.0) * tan_half
        d = fwd[None, :] + u.reshape(-1, 1) * right[None, :] + v.reshape(-1, 1) * upv[None, :]
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        o = np.broadcast_to(np.asarray(self.origin, dtype=np.float64), d.shape).copy()
        return o, d

    def to_dict(self):
        return {
            "origin": list(map(float, self.origin)),
            "look_at": list(map(float, self.look_at)),
            "up": list(map(float, self.up)),
        }


def orbit_cameras(n_views, target, radius, elevation_deg, fov_deg, width, height, phase=0.0):
    """n_views cameras on a circle around ``target`` at the given elevation."""
    target = np.asarray(target, dtype=np.float64)
    el = np.radians(elevation_deg)
    cams = []
    for k in range(n_views):
        az = phase + 2.0 * np.pi * k / n_views
        pos = target + radius * np.array([np.cos(az) * np.cos(el), np.sin(el), np.sin(az) * np.cos(el)])
        cams.append(Camera(pos, target, np.array([0.0, 1.0, 0.0]), fov_deg, width, height))
    return cams


def save_cameras(path, cams):
    first = cams[0]
    doc = {
        "width": first.width,
        "height": first.height,
        "fov_deg": first.fov_deg,
        "views": [c.to_dict() for c in cams],
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
        f.write("\n")


def load_cameras(path):
    with open(path) as f:
        doc = json.load(f)
    extra = set(doc) - {"width", "height", "fov_deg", "views"}
    if extra:
        raise ValueError(f"unknown camera fields {sorted(extra)}")
    cams = []
    for v in doc["views"]:
        extra = set(v) - {"origin", "look_at", "up"}
        if extra:
            raise ValueError(f"unknown view fields {sorted(extra)}")
        cams.append(Camera(np.asarray(v["origin"], dtype=np.float64),
                           np.asarray(v["look_at"], dtype=np.float64),
                           np.asarray(v["up"], dtype=np.float64),
                           float(doc["fov_deg"]), int(doc["width"]), int(doc["height"])))
    return cams
