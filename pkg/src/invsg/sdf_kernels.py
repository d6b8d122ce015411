"""Sphere-tracing kernels, in numba (scalar loops) and numpy (vectorized) forms.

The scene arrives as flat arrays (see scene.SdfScene.kernel_args); CSG nodes
are stored children-before-parents so evaluation is a single forward pass.
Both backends implement identical arithmetic: march by the full SDF value
(safe for 1-Lipschitz fields), accept at |S| < eps, then sharpen the hit with
a guarded secant so the reported ray parameter is accurate well below eps
even for grazing rays.
"""

import numpy as np

from .backend import USING_NUMBA, jit_kernel, jit_parallel, prange

_REFINE_ITERS = 8
_TET = np.array([[1.0, -1.0, -1.0], [-1.0, -1.0, 1.0], [-1.0, 1.0, -1.0], [1.0, 1.0, 1.0]])


# --------------------------------------------------------------------------
# numba scalar core
# --------------------------------------------------------------------------

@jit_kernel
def _prim_sdf(ptype, rot, trans, params, i, x, y, z):
    px = x - trans[i, 0]
    py = y - trans[i, 1]
    pz = z - trans[i, 2]
    t = ptype[i]
    if t == 2:  # plane: world-space, params hold unit normal + offset
        return x * params[i, 0] + y * params[i, 1] + z * params[i, 2] - params[i, 3]
    lx = rot[i, 0, 0] * px + rot[i, 0, 1] * py + rot[i, 0, 2] * pz
    ly = rot[i, 1, 0] * px + rot[i, 1, 1] * py + rot[i, 1, 2] * pz
    lz = rot[i, 2, 0] * px + rot[i, 2, 1] * py + rot[i, 2, 2] * pz
    if t == 0:  # sphere
        return np.sqrt(lx * lx + ly * ly + lz * lz) - params[i, 0]
    if t == 1:  # box
        qx = abs(lx) - params[i, 0]
        qy = abs(ly) - params[i, 1]
        qz = abs(lz) - params[i, 2]
        ox = qx if qx > 0.0 else 0.0
        oy = qy if qy > 0.0 else 0.0
        oz = qz if qz > 0.0 else 0.0
        outer = np.sqrt(ox * ox + oy * oy + oz * oz)
        m = qx
        if qy > m:
            m = qy
        if qz > m:
            m = qz
        inner = m if m < 0.0 else 0.0
        return outer + inner
    # torus around the local y axis
    ring = np.sqrt(lx * lx + lz * lz) - params[i, 0]
    return np.sqrt(ring * ring + ly * ly) - params[i, 1]


@jit_kernel
def _scene_sdf(ptype, rot, trans, params, kind, na, nb, vals, x, y, z):
    for k in range(kind.shape[0]):
        kk = kind[k]
        if kk == 0:
            vals[k] = _prim_sdf(ptype, rot, trans, params, na[k], x, y, z)
        elif kk == 1:
            a, b = vals[na[k]], vals[nb[k]]
            vals[k] = a if a < b else b
        elif kk == 2:
            a, b = vals[na[k]], -vals[nb[k]]
            vals[k] = a if a > b else b
        else:
            a, b = vals[na[k]], vals[nb[k]]
            vals[k] = a if a > b else b
    return vals[kind.shape[0] - 1]


@jit_kernel
def _trace_one(ptype, rot, trans, params, kind, na, nb, vals,
               ox, oy, oz, dx, dy, dz, bcx, bcy, bcz, br, eps, max_steps):
    """Returns (t, flag): flag 0 = escaped, 1 = hit, 2 = grazing failure."""
    # clip to the bounding sphere
    cx = ox - bcx
    cy = oy - bcy
    cz = oz - bcz
    b = cx * dx + cy * dy + cz * dz
    c = cx * cx + cy * cy + cz * cz - br * br
    disc = b * b - c
    if disc <= 0.0:
        return 0.0, 0
    sq = np.sqrt(disc)
    t_enter = -b - sq
    t_exit = -b + sq
    if t_exit <= 0.0:
        return 0.0, 0
    t = t_enter if t_enter > 0.0 else 0.0
    s_prev = -1.0
    t_prev = t
    for _ in range(max_steps):
        s = _scene_sdf(ptype, rot, trans, params, kind, na, nb, vals,
                       ox + t * dx, oy + t * dy, oz + t * dz)
        if s < eps:
            # guarded secant sharpening toward S(t) = 0
            t0, s0, t1, s1 = t_prev, s_prev, t, s
            if s0 > s1:
                for _ in range(_REFINE_ITERS):
                    if s1 <= 1e-4 * eps:
                        break
                    denom = s1 - s0
                    if denom > -1e-300:
                        break
                    t2 = t1 - s1 * (t1 - t0) / denom
                    if not (t2 > t1):
                        break
                    s2 = _scene_sdf(ptype, rot, trans, params, kind, na, nb, vals,
                                    ox + t2 * dx, oy + t2 * dy, oz + t2 * dz)
                    t0, s0, t1, s1 = t1, s1, t2, s2
                    if s1 <= 0.0:
                        break
            return t1, 1
        if t > t_exit:
            return t, 0
        t_prev, s_prev = t, s
        t = t + s
    return t, 2


@jit_parallel
def _sdf_batch_nb(ptype, rot, trans, params, kind, na, nb, pts, out):
    for j in prange(pts.shape[0]):
        vals = np.empty(kind.shape[0])
        out[j] = _scene_sdf(ptype, rot, trans, params, kind, na, nb, vals,
                            pts[j, 0], pts[j, 1], pts[j, 2])


@jit_parallel
def _normal_batch_nb(ptype, rot, trans, params, kind, na, nb, pts, h, out, ok):
    for j in prange(pts.shape[0]):
        vals = np.empty(kind.shape[0])
        gx = 0.0
        gy = 0.0
        gz = 0.0
        for k in range(4):
            sx = 1.0 if k == 0 or k == 3 else -1.0
            sy = 1.0 if k == 2 or k == 3 else -1.0
            sz = 1.0 if k == 1 or k == 3 else -1.0
            d = _scene_sdf(ptype, rot, trans, params, kind, na, nb, vals,
                           pts[j, 0] + h * sx, pts[j, 1] + h * sy, pts[j, 2] + h * sz)
            gx += sx * d
            gy += sy * d
            gz += sz * d
        n = np.sqrt(gx * gx + gy * gy + gz * gz)
        if n < 1e-12:
            ok[j] = False
            out[j, 0] = 0.0
            out[j, 1] = 0.0
            out[j, 2] = 1.0
        else:
            ok[j] = True
            out[j, 0] = gx / n
            out[j, 1] = gy / n
            out[j, 2] = gz / n


@jit_parallel
def _region_batch_nb(ptype, rot, trans, params, regions, pts, out):
    for j in prange(pts.shape[0]):
        best = 1e300
        reg = regions[0]
        for i in range(ptype.shape[0]):
            d = abs(_prim_sdf(ptype, rot, trans, params, i, pts[j, 0], pts[j, 1], pts[j, 2]))
            if d < best:
                best = d
                reg = regions[i]
        out[j] = reg


@jit_parallel
def _trace_batch_nb(ptype, rot, trans, params, kind, na, nb, origins, dirs,
                    bcx, bcy, bcz, br, eps, max_steps, t_out, flag_out):
    for j in prange(origins.shape[0]):
        vals = np.empty(kind.shape[0])
        t, flag = _trace_one(ptype, rot, trans, params, kind, na, nb, vals,
                             origins[j, 0], origins[j, 1], origins[j, 2],
                             dirs[j, 0], dirs[j, 1], dirs[j, 2],
                             bcx, bcy, bcz, br, eps, max_steps)
        t_out[j] = t
        flag_out[j] = flag


# --------------------------------------------------------------------------
# numpy fallback (vectorized over points / rays)
# --------------------------------------------------------------------------

def _prim_sdf_np(ptype, rot, trans, params, i, pts):
    t = ptype[i]
    if t == 2:
        return pts @ params[i, :3] - params[i, 3]
    p = (pts - trans[i]) @ rot[i].T
    if t == 0:
        return np.linalg.norm(p, axis=-1) - params[i, 0]
    if t == 1:
        q = np.abs(p) - params[i, :3]
        outer = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inner = np.minimum(np.max(q, axis=-1), 0.0)
        return outer + inner
    ring = np.hypot(p[..., 0], p[..., 2]) - params[i, 0]
    return np.hypot(ring, p[..., 1]) - params[i, 1]


def _scene_sdf_np(args, pts):
    ptype, rot, trans, params, kind, na, nb = args
    vals = [None] * kind.shape[0]
    for k in range(kind.shape[0]):
        kk = kind[k]
        if kk == 0:
            vals[k] = _prim_sdf_np(ptype, rot, trans, params, na[k], pts)
        elif kk == 1:
            vals[k] = np.minimum(vals[na[k]], vals[nb[k]])
        elif kk == 2:
            vals[k] = np.maximum(vals[na[k]], -vals[nb[k]])
        else:
            vals[k] = np.maximum(vals[na[k]], vals[nb[k]])
    return vals[-1]


def _trace_batch_np(args, origins, dirs, bc, br, eps, max_steps):
    n = origins.shape[0]
    rel = origins - bc
    b = np.sum(rel * dirs, axis=1)
    c = np.sum(rel * rel, axis=1) - br * br
    disc = b * b - c
    outside = disc <= 0.0
    sq = np.sqrt(np.maximum(disc, 0.0))
    t_enter = -b - sq
    t_exit = -b + sq
    t = np.maximum(t_enter, 0.0)
    flag = np.zeros(n, dtype=np.int8)
    active = ~outside & (t_exit > 0.0)
    t = np.where(active, t, 0.0)
    t_prev = t.copy()
    s_prev = np.full(n, -1.0)
    s_at_hit = np.zeros(n)
    for _ in range(max_steps):
        if not np.any(active):
            break
        idx = np.nonzero(active)[0]
        pos = origins[idx] + t[idx, None] * dirs[idx]
        s = _scene_sdf_np(args, pos)
        hit = s < eps
        hit_idx = idx[hit]
        flag[hit_idx] = 1
        s_at_hit[hit_idx] = s[hit]
        escaped = ~hit & (t[idx] > t_exit[idx])
        flag[idx[escaped]] = 0
        cont = ~hit & ~escaped
        cont_idx = idx[cont]
        t_prev[cont_idx] = t[cont_idx]
        s_prev[cont_idx] = s[cont]
        t[cont_idx] += s[cont]
        active[idx] = cont
    flag[active] = 2  # step budget exhausted inside bounds
    # secant sharpening for hits
    h = np.nonzero(flag == 1)[0]
    if h.size:
        t0, s0 = t_prev[h].copy(), s_prev[h].copy()
        t1, s1 = t[h].copy(), s_at_hit[h].copy()
        live = s0 > s1
        for _ in range(_REFINE_ITERS):
            live = live & (s1 > 1e-4 * eps) & (s1 - s0 < -1e-300)
            if not np.any(live):
                break
            li = np.nonzero(live)[0]
            t2 = t1[li] - s1[li] * (t1[li] - t0[li]) / (s1[li] - s0[li])
            fwd = t2 > t1[li]
            li = li[fwd]
            t2 = t2[fwd]
            live[:] = False
            if li.size == 0:
                break
            pos = origins[h[li]] + t2[:, None] * dirs[h[li]]
            s2 = _scene_sdf_np(args, pos)
            t0[li], s0[li] = t1[li], s1[li]
            t1[li], s1[li] = t2, s2
            live[li] = s2 > 0.0
        t[h] = t1
    return t, flag


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

def sdf_batch(args, pts):
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    if USING_NUMBA:
        out = np.empty(pts.shape[0])
        _sdf_batch_nb(*args, pts, out)
        return out
    return _scene_sdf_np(args, pts)


def normal_batch(args, pts, h):
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    if USING_NUMBA:
        out = np.empty((pts.shape[0], 3))
        ok = np.empty(pts.shape[0], dtype=np.bool_)
        _normal_batch_nb(*args, pts, h, out, ok)
        return out, ok
    grad = np.zeros((pts.shape[0], 3))
    for k in range(4):
        grad += _TET[k] * _scene_sdf_np(args, pts + h * _TET[k])[:, None]
    norm = np.linalg.norm(grad, axis=1)
    ok = norm >= 1e-12
    out = np.where(ok[:, None], grad / np.maximum(norm, 1e-12)[:, None], [0.0, 0.0, 1.0])
    return out, ok


def region_batch(prim_args, regions, pts):
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    ptype, rot, trans, params = prim_args
    if USING_NUMBA:
        out = np.empty(pts.shape[0], dtype=np.int32)
        _region_batch_nb(ptype, rot, trans, params, regions, pts, out)
        return out
    d = np.stack([np.abs(_prim_sdf_np(ptype, rot, trans, params, i, pts))
                  for i in range(ptype.shape[0])])
    return regions[np.argmin(d, axis=0)]


def trace_batch(args, origins, dirs, bc, br, eps, max_steps):
    origins = np.ascontiguousarray(origins, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    if USING_NUMBA:
        t = np.empty(origins.shape[0])
        flag = np.empty(origins.shape[0], dtype=np.int8)
        _trace_batch_nb(*args, origins, dirs, bc[0], bc[1], bc[2], br, eps, max_steps, t, flag)
        return t, flag
    return _trace_batch_np(args, origins, dirs, np.asarray(bc, dtype=np.float64), br, eps, max_steps)
