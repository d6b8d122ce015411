"""Path-tracing kernels: scalar numba loops and a vectorized numpy wavefront.

Both backends consume identical counter-based RNG streams keyed by
(seed, pixel/query, sample, scatter), so images agree across backends to
floating-point roundoff and are independent of thread scheduling.

Per-sample RNG layout: counter = sample * 64 + 3 * scatter + {0, 1: BRDF
uniforms, 2: roulette}.
"""

import numpy as np

from .backend import USING_NUMBA, jit_kernel, jit_parallel, prange
from .rng import hash2, hash2_np, uniform_from, uniform_np
from .sdf_kernels import _prim_sdf, _scene_sdf, _trace_one, _scene_sdf_np, _trace_batch_np
from . import brdf as _brdf

F0 = _brdf.F0


# --------------------------------------------------------------------------
# scalar helpers (numba)
# --------------------------------------------------------------------------

@jit_kernel
def _env_eval_s(eaxes, esharp, eamps, dx, dy, dz):
    r = 0.0
    g = 0.0
    b = 0.0
    for k in range(eaxes.shape[0]):
        w = np.exp(esharp[k] * (dx * eaxes[k, 0] + dy * eaxes[k, 1] + dz * eaxes[k, 2] - 1.0))
        r += eamps[k, 0] * w
        g += eamps[k, 1] * w
        b += eamps[k, 2] * w
    return r, g, b


@jit_kernel
def _normal_one(ptype, rot, trans, params, kind, na, nb, vals, x, y, z, h):
    gx = 0.0
    gy = 0.0
    gz = 0.0
    for k in range(4):
        sx = 1.0 if k == 0 or k == 3 else -1.0
        sy = 1.0 if k == 2 or k == 3 else -1.0
        sz = 1.0 if k == 1 or k == 3 else -1.0
        d = _scene_sdf(ptype, rot, trans, params, kind, na, nb, vals,
                       x + h * sx, y + h * sy, z + h * sz)
        gx += sx * d
        gy += sy * d
        gz += sz * d
    nrm = np.sqrt(gx * gx + gy * gy + gz * gz)
    if nrm < 1e-300:
        return 0.0, 0.0, 1.0
    return gx / nrm, gy / nrm, gz / nrm


@jit_kernel
def _region_one(ptype, rot, trans, params, regions, x, y, z):
    best = 1e300
    reg = regions[0]
    for i in range(ptype.shape[0]):
        d = abs(_prim_sdf(ptype, rot, trans, params, i, x, y, z))
        if d < best:
            best = d
            reg = regions[i]
    return reg


@jit_kernel
def _tangent_frame_s(nx, ny, nz):
    s = 1.0 if nz >= 0.0 else -1.0
    a = -1.0 / (s + nz)
    b = nx * ny * a
    return (1.0 + s * nx * nx * a, s * b, -s * nx,
            b, s + ny * ny * a, -ny)


@jit_kernel
def _spec_prob_s(r):
    p = 0.5 * (1.0 - r) + 0.05
    if p < 0.05:
        p = 0.05
    if p > 0.55:
        p = 0.55
    return p


@jit_kernel
def _ggx_d_s(ch, alpha):
    c = ch if ch > 0.0 else 0.0
    denom = c * c * (alpha * alpha - 1.0) + 1.0
    return alpha * alpha / (np.pi * denom * denom)


@jit_kernel
def _smith_g1_s(c, alpha):
    cc = c if c > 1e-12 else 1e-12
    return 2.0 * cc / (cc + np.sqrt(alpha * alpha + (1.0 - alpha * alpha) * cc * cc))


@jit_kernel
def _pdf_s(rough, donly, wox, woy, woz, nx, ny, nz, wix, wiy, wiz):
    ci = wix * nx + wiy * ny + wiz * nz
    pdf_d = (ci if ci > 0.0 else 0.0) / np.pi
    if donly:
        return pdf_d
    ps = _spec_prob_s(rough)
    hx = wix + wox
    hy = wiy + woy
    hz = wiz + woz
    hn = np.sqrt(hx * hx + hy * hy + hz * hz)
    if hn < 1e-300:
        return (1.0 - ps) * pdf_d
    hx /= hn
    hy /= hn
    hz /= hn
    alpha = rough * rough
    ch = hx * nx + hy * ny + hz * nz
    doh = wox * hx + woy * hy + woz * hz
    if doh < 1e-12:
        doh = 1e-12
    pdf_sp = _ggx_d_s(ch, alpha) * (ch if ch > 0.0 else 0.0) / (4.0 * doh)
    return (1.0 - ps) * pdf_d + ps * pdf_sp


@jit_kernel
def _eval_brdf_s(ar, ag, ab, rough, donly, wix, wiy, wiz, wox, woy, woz, nx, ny, nz):
    ci = wix * nx + wiy * ny + wiz * nz
    co = wox * nx + woy * ny + woz * nz
    if ci <= 0.0 or co <= 0.0:
        return 0.0, 0.0, 0.0
    fr = ar / np.pi
    fg = ag / np.pi
    fb = ab / np.pi
    if not donly:
        hx = wix + wox
        hy = wiy + woy
        hz = wiz + woz
        hn = np.sqrt(hx * hx + hy * hy + hz * hz)
        if hn > 1e-300:
            hx /= hn
            hy /= hn
            hz /= hn
            alpha = rough * rough
            d = _ggx_d_s(hx * nx + hy * ny + hz * nz, alpha)
            g = _smith_g1_s(ci, alpha) * _smith_g1_s(co, alpha)
            cd = wix * hx + wiy * hy + wiz * hz
            if cd < 0.0:
                cd = 0.0
            if cd > 1.0:
                cd = 1.0
            f = F0 + (1.0 - F0) * (1.0 - cd) ** 5
            denom = 4.0 * ci * co
            if denom < 1e-12:
                denom = 1e-12
            spec = d * g * f / denom
            fr += spec
            fg += spec
            fb += spec
    return fr, fg, fb


@jit_kernel
def _sample_brdf_s(ar, ag, ab, rough, donly, wox, woy, woz, nx, ny, nz, u1, u2):
    """Mirror of brdf.sample_brdf; returns (wix, wiy, wiz, pdf, wr, wg, wb)."""
    ps = 0.0 if donly else _spec_prob_s(rough)
    for _ in range(2):
        if u1 < 1.0 - ps:
            uu = u1 / (1.0 - ps)
            t1x, t1y, t1z, t2x, t2y, t2z = _tangent_frame_s(nx, ny, nz)
            rr = np.sqrt(uu)
            phi = 2.0 * np.pi * u2
            zz = np.sqrt(1.0 - uu if uu < 1.0 else 0.0)
            wix = rr * np.cos(phi) * t1x + rr * np.sin(phi) * t2x + zz * nx
            wiy = rr * np.cos(phi) * t1y + rr * np.sin(phi) * t2y + zz * ny
            wiz = rr * np.cos(phi) * t1z + rr * np.sin(phi) * t2z + zz * nz
        else:
            uu = (u1 - (1.0 - ps)) / ps
            alpha = rough * rough
            phi = 2.0 * np.pi * u2
            ct = np.sqrt((1.0 - uu) / (1.0 + (alpha * alpha - 1.0) * uu))
            st = np.sqrt(1.0 - ct * ct if ct < 1.0 else 0.0)
            t1x, t1y, t1z, t2x, t2y, t2z = _tangent_frame_s(nx, ny, nz)
            hx = st * np.cos(phi) * t1x + st * np.sin(phi) * t2x + ct * nx
            hy = st * np.cos(phi) * t1y + st * np.sin(phi) * t2y + ct * ny
            hz = st * np.cos(phi) * t1z + st * np.sin(phi) * t2z + ct * nz
            doh = wox * hx + woy * hy + woz * hz
            wix = 2.0 * doh * hx - wox
            wiy = 2.0 * doh * hy - woy
            wiz = 2.0 * doh * hz - woz
        nrm = np.sqrt(wix * wix + wiy * wiy + wiz * wiz)
        wix /= nrm
        wiy /= nrm
        wiz /= nrm
        if wix * nx + wiy * ny + wiz * nz <= 0.0:
            pdf = _pdf_s(rough, donly, wox, woy, woz, nx, ny, nz, wix, wiy, wiz)
            return wix, wiy, wiz, pdf, 0.0, 0.0, 0.0
        pdf = _pdf_s(rough, donly, wox, woy, woz, nx, ny, nz, wix, wiy, wiz)
        if pdf > 1e-12:
            fr, fg, fb = _eval_brdf_s(ar, ag, ab, rough, donly,
                                      wix, wiy, wiz, wox, woy, woz, nx, ny, nz)
            ci = wix * nx + wiy * ny + wiz * nz
            return wix, wiy, wiz, pdf, fr * ci / pdf, fg * ci / pdf, fb * ci / pdf
        u1 = (u1 + 0.6180339887498949) % 1.0
        u2 = (u2 + 0.3819660112501051) % 1.0
    return wix, wiy, wiz, pdf, 0.0, 0.0, 0.0


@jit_kernel
def _path_from_surface(ptype, rot, trans, params, kind, na, nb, vals,
                       bcx, bcy, bcz, br, eps_hit, eps_off,
                       eaxes, esharp, eamps, regions, alb, rough, donly,
                       px, py, pz, nx, ny, nz, reg, dx, dy, dz,
                       key, sample, max_bounces, rr_start, truncate):
    """One path continuing from a surface interaction with incoming dir d."""
    tr = 1.0
    tg = 1.0
    tb = 1.0
    cr = 0.0
    cg = 0.0
    cb = 0.0
    scatters = 0
    while True:
        if scatters == max_bounces:
            if truncate:
                er, eg, eb = _env_eval_s(eaxes, esharp, eamps, dx, dy, dz)
                cr += tr * er
                cg += tg * eg
                cb += tb * eb
            break
        base = sample * 64 + 3 * scatters
        u1 = uniform_from(key, base)
        u2 = uniform_from(key, base + 1)
        wix, wiy, wiz, pdf, wr, wg, wb = _sample_brdf_s(
            alb[reg, 0], alb[reg, 1], alb[reg, 2], rough[reg], donly[reg],
            -dx, -dy, -dz, nx, ny, nz, u1, u2)
        if wr == 0.0 and wg == 0.0 and wb == 0.0:
            break
        tr *= wr
        tg *= wg
        tb *= wb
        scatters += 1
        if scatters >= rr_start:
            tmax = tr
            if tg > tmax:
                tmax = tg
            if tb > tmax:
                tmax = tb
            p = tmax
            if p < 0.05:
                p = 0.05
            if p > 0.95:
                p = 0.95
            if uniform_from(key, base + 2) >= p:
                break
            tr /= p
            tg /= p
            tb /= p
        ox = px + nx * eps_off
        oy = py + ny * eps_off
        oz = pz + nz * eps_off
        t, flag = _trace_one(ptype, rot, trans, params, kind, na, nb, vals,
                             ox, oy, oz, wix, wiy, wiz, bcx, bcy, bcz, br, eps_hit, 256)
        if flag != 1:
            er, eg, eb = _env_eval_s(eaxes, esharp, eamps, wix, wiy, wiz)
            cr += tr * er
            cg += tg * eg
            cb += tb * eb
            break
        px = ox + t * wix
        py = oy + t * wiy
        pz = oz + t * wiz
        nnx, nny, nnz = _normal_one(ptype, rot, trans, params, kind, na, nb, vals,
                                    px, py, pz, 2.0 * eps_hit)
        if nnx * wix + nny * wiy + nnz * wiz > 0.0:
            nnx = -nnx
            nny = -nny
            nnz = -nnz
        nx, ny, nz = nnx, nny, nnz
        reg = _region_one(ptype, rot, trans, params, regions, px, py, pz)
        dx, dy, dz = wix, wiy, wiz
    return cr, cg, cb


@jit_parallel
def _render_nb(ptype, rot, trans, params, kind, na, nb,
               bcx, bcy, bcz, br, eps_hit, eps_off,
               eaxes, esharp, eamps, regions, alb, rough, donly,
               origins, dirs, spp, max_bounces, rr_start, truncate, seed,
               out_rgb, out_alpha):
    for j in prange(origins.shape[0]):
        vals = np.empty(kind.shape[0])
        ox = origins[j, 0]
        oy = origins[j, 1]
        oz = origins[j, 2]
        dx = dirs[j, 0]
        dy = dirs[j, 1]
        dz = dirs[j, 2]
        t, flag = _trace_one(ptype, rot, trans, params, kind, na, nb, vals,
                             ox, oy, oz, dx, dy, dz, bcx, bcy, bcz, br, eps_hit, 256)
        if flag != 1:
            er, eg, eb = _env_eval_s(eaxes, esharp, eamps, dx, dy, dz)
            out_rgb[j, 0] = er
            out_rgb[j, 1] = eg
            out_rgb[j, 2] = eb
            out_alpha[j] = 0.0
            continue
        out_alpha[j] = 1.0
        px = ox + t * dx
        py = oy + t * dy
        pz = oz + t * dz
        nx, ny, nz = _normal_one(ptype, rot, trans, params, kind, na, nb, vals,
                                 px, py, pz, 2.0 * eps_hit)
        if nx * dx + ny * dy + nz * dz > 0.0:
            nx = -nx
            ny = -ny
            nz = -nz
        reg = _region_one(ptype, rot, trans, params, regions, px, py, pz)
        key = hash2(np.uint64(seed), np.uint64(j))
        ar = 0.0
        ag = 0.0
        ab_ = 0.0
        for s in range(spp):
            cr, cg, cb = _path_from_surface(
                ptype, rot, trans, params, kind, na, nb, vals,
                bcx, bcy, bcz, br, eps_hit, eps_off,
                eaxes, esharp, eamps, regions, alb, rough, donly,
                px, py, pz, nx, ny, nz, reg, dx, dy, dz,
                key, s, max_bounces, rr_start, truncate)
            ar += cr
            ag += cg
            ab_ += cb
        out_rgb[j, 0] = ar / spp
        out_rgb[j, 1] = ag / spp
        out_rgb[j, 2] = ab_ / spp


@jit_parallel
def _outgoing_nb(ptype, rot, trans, params, kind, na, nb,
                 bcx, bcy, bcz, br, eps_hit, eps_off,
                 eaxes, esharp, eamps, regions, alb, rough, donly,
                 pts, normals, regs, dins, keys, spp, max_bounces, rr_start,
                 out_rgb):
    for j in prange(pts.shape[0]):
        vals = np.empty(kind.shape[0])
        ar = 0.0
        ag = 0.0
        ab_ = 0.0
        for s in range(spp):
            cr, cg, cb = _path_from_surface(
                ptype, rot, trans, params, kind, na, nb, vals,
                bcx, bcy, bcz, br, eps_hit, eps_off,
                eaxes, esharp, eamps, regions, alb, rough, donly,
                pts[j, 0], pts[j, 1], pts[j, 2],
                normals[j, 0], normals[j, 1], normals[j, 2], regs[j],
                dins[j, 0], dins[j, 1], dins[j, 2],
                keys[j], s, max_bounces, rr_start, False)
            ar += cr
            ag += cg
            ab_ += cb
        out_rgb[j, 0] = ar / spp
        out_rgb[j, 1] = ag / spp
        out_rgb[j, 2] = ab_ / spp


# --------------------------------------------------------------------------
# numpy wavefront fallback
# --------------------------------------------------------------------------

def _env_eval_np(eaxes, esharp, eamps, dirs):
    g = np.exp(esharp[None, :] * (dirs @ eaxes.T - 1.0))
    return g @ eamps


def _normal_np(scene_args, pts, h):
    tet = np.array([[1.0, -1.0, -1.0], [-1.0, -1.0, 1.0], [-1.0, 1.0, -1.0], [1.0, 1.0, 1.0]])
    grad = np.zeros_like(pts)
    for k in range(4):
        grad += tet[k] * _scene_sdf_np(scene_args, pts + h * tet[k])[:, None]
    nrm = np.linalg.norm(grad, axis=1, keepdims=True)
    return grad / np.maximum(nrm, 1e-300)


def _region_np(scene_args, regions, pts):
    ptype, rot, trans, params = scene_args[:4]
    from .sdf_kernels import _prim_sdf_np
    d = np.stack([np.abs(_prim_sdf_np(ptype, rot, trans, params, i, pts))
                  for i in range(ptype.shape[0])])
    return regions[np.argmin(d, axis=0)]


def _tangent_frame_np(n):
    s = np.copysign(1.0, n[:, 2])
    a = -1.0 / (s + n[:, 2])
    b = n[:, 0] * n[:, 1] * a
    t1 = np.stack([1.0 + s * n[:, 0] ** 2 * a, s * b, -s * n[:, 0]], axis=1)
    t2 = np.stack([b, s + n[:, 1] ** 2 * a, -n[:, 1]], axis=1)
    return t1, t2


def _sample_once_np(alb, rough, donly, wo, n, u1, u2):
    ps = np.where(donly, 0.0, np.clip(0.5 * (1.0 - rough) + 0.05, 0.05, 0.55))
    t1, t2 = _tangent_frame_np(n)
    take_d = u1 < 1.0 - ps
    phi = 2.0 * np.pi * u2
    # diffuse branch
    ud = u1 / (1.0 - ps)
    rr = np.sqrt(ud)
    zz = np.sqrt(np.maximum(0.0, 1.0 - ud))
    wd = rr[:, None] * np.cos(phi)[:, None] * t1 + rr[:, None] * np.sin(phi)[:, None] * t2 + zz[:, None] * n
    # specular branch
    safe_ps = np.where(ps > 0.0, ps, 1.0)
    us = np.clip((u1 - (1.0 - ps)) / safe_ps, 0.0, 1.0)
    alpha = rough * rough
    ct = np.sqrt((1.0 - us) / (1.0 + (alpha * alpha - 1.0) * us))
    st = np.sqrt(np.maximum(0.0, 1.0 - ct * ct))
    h = st[:, None] * np.cos(phi)[:, None] * t1 + st[:, None] * np.sin(phi)[:, None] * t2 + ct[:, None] * n
    ws = 2.0 * np.sum(wo * h, axis=1, keepdims=True) * h - wo
    wi = np.where(take_d[:, None], wd, ws)
    wi = wi / np.linalg.norm(wi, axis=1, keepdims=True)
    ci = np.sum(wi * n, axis=1)
    pdf = _pdf_np(alb, rough, donly, wo, n, wi)
    below = ci <= 0.0
    underflow = ~below & (pdf <= 1e-12)
    f = _eval_brdf_np_rows(alb, rough, donly, wi, wo, n)
    weight = f * (np.maximum(ci, 0.0) / np.maximum(pdf, 1e-300))[:, None]
    weight[below | underflow] = 0.0
    return wi, pdf, weight, underflow


def _sample_brdf_np(alb, rough, donly, wo, n, u1, u2):
    """Vectorized mirror of _sample_brdf_s. Returns (wi, pdf, weight[N,3])."""
    wi, pdf, weight, retry = _sample_once_np(alb, rough, donly, wo, n, u1, u2)
    if np.any(retry):
        r = np.nonzero(retry)[0]
        ru1 = (u1[r] + 0.6180339887498949) % 1.0
        ru2 = (u2[r] + 0.3819660112501051) % 1.0
        wi2, pdf2, w2, again = _sample_once_np(alb[r], rough[r], donly[r], wo[r], n[r], ru1, ru2)
        w2[again] = 0.0
        wi[r], pdf[r], weight[r] = wi2, pdf2, w2
    return wi, pdf, weight


def _pdf_np(alb, rough, donly, wo, n, wi):
    ci = np.sum(wi * n, axis=1)
    pdf_d = np.maximum(ci, 0.0) / np.pi
    ps = np.where(donly, 0.0, np.clip(0.5 * (1.0 - rough) + 0.05, 0.05, 0.55))
    h = wi + wo
    hn = np.linalg.norm(h, axis=1, keepdims=True)
    h = h / np.maximum(hn, 1e-300)
    alpha = rough * rough
    ch = np.sum(h * n, axis=1)
    doh = np.maximum(np.sum(wo * h, axis=1), 1e-12)
    c = np.maximum(ch, 0.0)
    denom = c * c * (alpha * alpha - 1.0) + 1.0
    d = alpha * alpha / (np.pi * denom * denom)
    pdf_s = d * c / (4.0 * doh)
    return (1.0 - ps) * pdf_d + ps * pdf_s


def _eval_brdf_np_rows(alb, rough, donly, wi, wo, n):
    ci = np.sum(wi * n, axis=1)
    co = np.sum(wo * n, axis=1)
    above = (ci > 0.0) & (co > 0.0)
    f = alb / np.pi
    h = wi + wo
    hn = np.linalg.norm(h, axis=1, keepdims=True)
    h = h / np.maximum(hn, 1e-300)
    alpha = rough * rough
    ch = np.sum(h * n, axis=1)
    c = np.maximum(ch, 0.0)
    denom = c * c * (alpha * alpha - 1.0) + 1.0
    d = alpha * alpha / (np.pi * denom * denom)

    def g1(cv):
        cc = np.maximum(cv, 1e-12)
        return 2.0 * cc / (cc + np.sqrt(alpha * alpha + (1.0 - alpha * alpha) * cc * cc))
    cd = np.clip(np.sum(wi * h, axis=1), 0.0, 1.0)
    fres = F0 + (1.0 - F0) * (1.0 - cd) ** 5
    spec = d * g1(ci) * g1(co) * fres / np.maximum(4.0 * ci * co, 1e-12)
    f = f + np.where(donly, 0.0, spec)[:, None]
    return np.where(above[:, None], f, 0.0)


def _render_np(scene_args, bc, br, eps_hit, eps_off, env_arrays, mat_arrays,
               origins, dirs, spp, max_bounces, rr_start, truncate, seed):
    eaxes, esharp, eamps = env_arrays
    regions, alb, rough, donly = mat_arrays
    npix = origins.shape[0]
    t, flag = _trace_batch_np(scene_args, origins, dirs, bc, br, eps_hit, 256)
    alpha = (flag == 1).astype(np.float64)
    out = np.zeros((npix, 3))
    missed = flag != 1
    if np.any(missed):
        out[missed] = _env_eval_np(eaxes, esharp, eamps, dirs[missed])
    hit_idx = np.nonzero(flag == 1)[0]
    if hit_idx.size == 0:
        return out, alpha
    pos = origins[hit_idx] + t[hit_idx, None] * dirs[hit_idx]
    nrm = _normal_np(scene_args, pos, 2.0 * eps_hit)
    flip = np.sum(nrm * dirs[hit_idx], axis=1) > 0.0
    nrm[flip] = -nrm[flip]
    regs = _region_np(scene_args, regions, pos)
    keys = hash2_np(np.uint64(seed), hit_idx.astype(np.uint64))
    accum = np.zeros((hit_idx.size, 3))
    for s in range(spp):
        accum += _paths_from_surface_np(
            scene_args, bc, br, eps_hit, eps_off, env_arrays, mat_arrays,
            pos, nrm, regs, dirs[hit_idx], keys, s, max_bounces, rr_start, truncate)
    out[hit_idx] = accum / spp
    return out, alpha


def _paths_from_surface_np(scene_args, bc, br, eps_hit, eps_off, env_arrays, mat_arrays,
                           pos, nrm, regs, din, keys, sample, max_bounces, rr_start, truncate):
    eaxes, esharp, eamps = env_arrays
    regions, alb, rough, donly = mat_arrays
    m = pos.shape[0]
    contrib = np.zeros((m, 3))
    T = np.ones((m, 3))
    live = np.ones(m, dtype=bool)
    p = pos.copy()
    n = nrm.copy()
    reg = regs.copy()
    d = din.copy()
    scatters = 0
    while True:
        idx = np.nonzero(live)[0]
        if idx.size == 0:
            break
        if scatters == max_bounces:
            if truncate:
                contrib[idx] += T[idx] * _env_eval_np(eaxes, esharp, eamps, d[idx])
            break
        base = np.uint64(sample * 64 + 3 * scatters)
        u1 = uniform_np(keys[idx], base)
        u2 = uniform_np(keys[idx], base + np.uint64(1))
        wi, pdf, w = _sample_brdf_np(alb[reg[idx]], rough[reg[idx]], donly[reg[idx]],
                                     -d[idx], n[idx], u1, u2)
        dead = np.all(w == 0.0, axis=1)
        T[idx] *= w
        live[idx[dead]] = False
        idx = idx[~dead]
        wi = wi[~dead]
        if idx.size == 0:
            scatters += 1
            continue
        scatters += 1
        if scatters >= rr_start:
            pmax = np.clip(np.max(T[idx], axis=1), 0.05, 0.95)
            urr = uniform_np(keys[idx], base + np.uint64(2))
            killed = urr >= pmax
            live[idx[killed]] = False
            T[idx[~killed]] /= pmax[~killed, None]
            idx = idx[~killed]
            wi = wi[~killed]
            if idx.size == 0:
                continue
        o = p[idx] + n[idx] * eps_off
        t, flag = _trace_batch_np(scene_args, o, wi, bc, br, eps_hit, 256)
        escaped = flag != 1
        esc_idx = idx[escaped]
        if esc_idx.size:
            contrib[esc_idx] += T[esc_idx] * _env_eval_np(eaxes, esharp, eamps, wi[escaped])
            live[esc_idx] = False
        hid = idx[~escaped]
        if hid.size:
            hp = o[~escaped] + t[~escaped, None] * wi[~escaped]
            hn = _normal_np(scene_args, hp, 2.0 * eps_hit)
            flip = np.sum(hn * wi[~escaped], axis=1) > 0.0
            hn[flip] = -hn[flip]
            p[hid] = hp
            n[hid] = hn
            reg[hid] = _region_np(scene_args, regions, hp)
            d[hid] = wi[~escaped]
    return contrib


def _outgoing_np(scene_args, bc, br, eps_hit, eps_off, env_arrays, mat_arrays,
                 pts, normals, regs, dins, keys, spp, max_bounces, rr_start):
    accum = np.zeros((pts.shape[0], 3))
    for s in range(spp):
        accum += _paths_from_surface_np(scene_args, bc, br, eps_hit, eps_off,
                                        env_arrays, mat_arrays, pts, normals, regs,
                                        dins, keys, s, max_bounces, rr_start, False)
    return accum / spp


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

def render_rays(scene, env_arrays, mat_arrays, origins, dirs, spp, max_bounces,
                rr_start, truncate, seed):
    origins = np.ascontiguousarray(origins, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    eaxes, esharp, eamps = [np.ascontiguousarray(a) for a in env_arrays]
    regions, alb, rough, donly = mat_arrays
    if USING_NUMBA:
        out = np.empty((origins.shape[0], 3))
        alpha = np.empty(origins.shape[0])
        _render_nb(*scene.kernel_args(),
                   scene.bound_center[0], scene.bound_center[1], scene.bound_center[2],
                   scene.bound_radius, scene.eps_hit, scene.eps_offset,
                   eaxes, esharp, eamps, regions, alb, rough, donly,
                   origins, dirs, spp, max_bounces, rr_start, truncate, np.uint64(seed),
                   out, alpha)
        return out, alpha
    return _render_np(scene.kernel_args(), scene.bound_center, scene.bound_radius,
                      scene.eps_hit, scene.eps_offset, (eaxes, esharp, eamps),
                      (regions, alb, rough, donly), origins, dirs, spp, max_bounces,
                      rr_start, truncate, seed)


def outgoing_radiance(scene, env_arrays, mat_arrays, pts, normals, regs, dins,
                      keys, spp, max_bounces, rr_start):
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    normals = np.ascontiguousarray(normals, dtype=np.float64)
    dins = np.ascontiguousarray(dins, dtype=np.float64)
    keys = np.ascontiguousarray(keys, dtype=np.uint64)
    regs = np.ascontiguousarray(regs, dtype=np.int32)
    eaxes, esharp, eamps = [np.ascontiguousarray(a) for a in env_arrays]
    regions, alb, rough, donly = mat_arrays
    if USING_NUMBA:
        out = np.empty((pts.shape[0], 3))
        _outgoing_nb(*scene.kernel_args(),
                     scene.bound_center[0], scene.bound_center[1], scene.bound_center[2],
                     scene.bound_radius, scene.eps_hit, scene.eps_offset,
                     eaxes, esharp, eamps, regions, alb, rough, donly,
                     pts, normals, regs, dins, keys, spp, max_bounces, rr_start, out)
        return out
    return _outgoing_np(scene.kernel_args(), scene.bound_center, scene.bound_radius,
                        scene.eps_hit, scene.eps_offset, (eaxes, esharp, eamps),
                        (regions, alb, rough, donly), pts, normals, regs, dins,
                        keys, spp, max_bounces, rr_start)
