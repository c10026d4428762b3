"""Hot numeric kernels: numba @njit implementations with pure-numpy fallbacks.

The numba path is used when numba imports cleanly; set SLOTMVD_DISABLE_NUMBA=1
to force the numpy path. Both paths are written to produce bit-identical
results (same expression structure, same reduction order), which is covered by
tests. `benchmarks/bench_kernels.py` compares their throughput.

Kernels here are the profiled hot spots: im2col/col2im behind conv2d,
the ray-cast renderer inner loop, and the 2-D median filter.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLE = os.environ.get("SLOTMVD_DISABLE_NUMBA", "").strip().lower() in (
    "1",
    "true",
    "yes",
)

if not _DISABLE:
    try:
        from numba import njit, prange

        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        HAVE_NUMBA = False
else:
    HAVE_NUMBA = False

if not HAVE_NUMBA:
    prange = range

    def njit(*args, **kwargs):  # type: ignore[misc]
        def wrap(f):
            return f

        if args and callable(args[0]):
            return args[0]
        return wrap


# ---------------------------------------------------------------------------
# im2col / col2im (conv2d forward and input-gradient support)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _im2col_nb(x, kh, kw, stride, pad):
    n, c, h, w = x.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((n, c, kh, kw, ho, wo), dtype=x.dtype)
    for ni in range(n):
        for ci in range(c):
            for i in range(kh):
                for j in range(kw):
                    for oi in range(ho):
                        ii = oi * stride + i - pad
                        if ii < 0 or ii >= h:
                            continue
                        for oj in range(wo):
                            jj = oj * stride + j - pad
                            if 0 <= jj < w:
                                out[ni, ci, i, j, oi, oj] = x[ni, ci, ii, jj]
    return out


def _im2col_np(x, kh, kw, stride, pad):
    n, c, h, w = x.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    sn, sc, sh, sw = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, kh, kw, ho, wo),
        strides=(sn, sc, sh, sw, sh * stride, sw * stride),
        writeable=False,
    )
    return np.ascontiguousarray(view)


def im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """(N,C,H,W) -> patch tensor (N, C, kh, kw, Hout, Wout)."""
    if HAVE_NUMBA:
        return _im2col_nb(np.ascontiguousarray(x), kh, kw, stride, pad)
    return _im2col_np(x, kh, kw, stride, pad)


@njit(cache=True)
def _col2im_nb(cols, h, w, stride, pad):
    n, c, kh, kw, ho, wo = cols.shape
    x = np.zeros((n, c, h, w), dtype=cols.dtype)
    for ni in range(n):
        for ci in range(c):
            for i in range(kh):
                for j in range(kw):
                    for oi in range(ho):
                        ii = oi * stride + i - pad
                        if ii < 0 or ii >= h:
                            continue
                        for oj in range(wo):
                            jj = oj * stride + j - pad
                            if 0 <= jj < w:
                                x[ni, ci, ii, jj] += cols[ni, ci, i, j, oi, oj]
    return x


def _col2im_np(cols, h, w, stride, pad):
    n, c, kh, kw, ho, wo = cols.shape
    x = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            x[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[
                :, :, i, j, :, :
            ]
    if pad:
        return np.ascontiguousarray(x[:, :, pad : pad + h, pad : pad + w])
    return x


def col2im(cols: np.ndarray, h: int, w: int, stride: int, pad: int) -> np.ndarray:
    """Scatter-add inverse of im2col; returns (N,C,H,W)."""
    if HAVE_NUMBA:
        return _col2im_nb(np.ascontiguousarray(cols), h, w, stride, pad)
    return _col2im_np(cols, h, w, stride, pad)


# ---------------------------------------------------------------------------
# 2-D median filter, replicate border
# ---------------------------------------------------------------------------


@njit(cache=True)
def _median2d_nb(img, k):
    h, w = img.shape
    r = k // 2
    out = np.empty_like(img)
    buf = np.empty(k * k, dtype=img.dtype)
    for y in range(h):
        for x in range(w):
            idx = 0
            for dy in range(-r, r + 1):
                yy = y + dy
                if yy < 0:
                    yy = 0
                elif yy >= h:
                    yy = h - 1
                for dx in range(-r, r + 1):
                    xx = x + dx
                    if xx < 0:
                        xx = 0
                    elif xx >= w:
                        xx = w - 1
                    buf[idx] = img[yy, xx]
                    idx += 1
            out[y, x] = np.sort(buf)[(k * k) // 2]
    return out


def _median2d_np(img, k):
    h, w = img.shape
    r = k // 2
    padded = np.pad(img, r, mode="edge")
    win = np.lib.stride_tricks.sliding_window_view(padded, (k, k))
    flat = win.reshape(h, w, k * k)
    return np.sort(flat, axis=-1)[:, :, (k * k) // 2]


def median_filter2d(img: np.ndarray, k: int) -> np.ndarray:
    """Median filter with odd kernel k and clamp-to-border (replicate) edges."""
    if k < 1 or k % 2 == 0:
        raise ValueError(f"median kernel must be odd and >= 1, got {k}")
    if k == 1:
        return img.copy()
    if HAVE_NUMBA:
        return _median2d_nb(np.ascontiguousarray(img), k)
    return _median2d_np(img, k)


# ---------------------------------------------------------------------------
# Ray-cast renderer inner loop
# ---------------------------------------------------------------------------
# Scene primitives are spheres (kind 0, size = radius) and axis-aligned cubes
# (kind 1, size = half edge length). Ground plane z = 0, one directional light.
# Shading: max(0, n.l) * albedo * lit + ambient, clamped to [0, 1].

_T_MIN = 1e-6
_SHADOW_EPS = 1e-5


@njit(cache=True, inline="always")
def _isect_sphere(ox, oy, oz, dx, dy, dz, cx, cy, cz, r):
    px = ox - cx
    py = oy - cy
    pz = oz - cz
    b = px * dx + py * dy + pz * dz
    c = px * px + py * py + pz * pz - r * r
    disc = b * b - c
    if disc < 0.0:
        return -1.0
    s = np.sqrt(disc)
    t = -b - s
    if t > _T_MIN:
        return t
    t = -b + s
    if t > _T_MIN:
        return t
    return -1.0


@njit(cache=True, inline="always")
def _isect_box(ox, oy, oz, dx, dy, dz, cx, cy, cz, half):
    tnear = -1e30
    tfar = 1e30
    for axis in range(3):
        if axis == 0:
            o = ox
            d = dx
            c = cx
        elif axis == 1:
            o = oy
            d = dy
            c = cy
        else:
            o = oz
            d = dz
            c = cz
        lo = c - half
        hi = c + half
        if abs(d) < 1e-12:
            if o < lo or o > hi:
                return -1.0
        else:
            t1 = (lo - o) / d
            t2 = (hi - o) / d
            if t1 > t2:
                t1, t2 = t2, t1
            if t1 > tnear:
                tnear = t1
            if t2 < tfar:
                tfar = t2
            if tnear > tfar:
                return -1.0
    if tnear > _T_MIN:
        return tnear
    if tfar > _T_MIN:
        return tfar
    return -1.0


@njit(cache=True, inline="always")
def _box_normal(px, py, pz, cx, cy, cz, half):
    rx = (px - cx) / half
    ry = (py - cy) / half
    rz = (pz - cz) / half
    ax = abs(rx)
    ay = abs(ry)
    az = abs(rz)
    nx = 0.0
    ny = 0.0
    nz = 0.0
    if ax >= ay and ax >= az:
        nx = 1.0 if rx > 0 else -1.0
    elif ay >= az:
        ny = 1.0 if ry > 0 else -1.0
    else:
        nz = 1.0 if rz > 0 else -1.0
    return nx, ny, nz


@njit(cache=True, inline="always")
def _any_hit(ox, oy, oz, dx, dy, dz, kinds, centers, sizes):
    for m in range(kinds.shape[0]):
        if kinds[m] == 0:
            t = _isect_sphere(
                ox, oy, oz, dx, dy, dz, centers[m, 0], centers[m, 1], centers[m, 2], sizes[m]
            )
        else:
            t = _isect_box(
                ox, oy, oz, dx, dy, dz, centers[m, 0], centers[m, 1], centers[m, 2], sizes[m]
            )
        if t > 0.0:
            return True
    return False


@njit(cache=True, parallel=True)
def _render_nb(ray_o, ray_d, kinds, centers, sizes, albedos, ground_albedo, light, sky, ambient):
    npix = ray_o.shape[0]
    nobj = kinds.shape[0]
    rgb = np.empty((npix, 3), dtype=np.float64)
    ids = np.zeros(npix, dtype=np.int32)
    for p in prange(npix):
        ox = ray_o[p, 0]
        oy = ray_o[p, 1]
        oz = ray_o[p, 2]
        dx = ray_d[p, 0]
        dy = ray_d[p, 1]
        dz = ray_d[p, 2]

        t_best = 1e30
        hit_obj = -1
        for m in range(nobj):
            if kinds[m] == 0:
                t = _isect_sphere(
                    ox, oy, oz, dx, dy, dz, centers[m, 0], centers[m, 1], centers[m, 2], sizes[m]
                )
            else:
                t = _isect_box(
                    ox, oy, oz, dx, dy, dz, centers[m, 0], centers[m, 1], centers[m, 2], sizes[m]
                )
            if t > 0.0 and t < t_best:
                t_best = t
                hit_obj = m

        # ground plane z = 0
        hit_ground = False
        if abs(dz) > 1e-12:
            tg = -oz / dz
            if tg > _T_MIN and tg < t_best:
                t_best = tg
                hit_ground = True
                hit_obj = -1

        if hit_obj < 0 and not hit_ground:
            rgb[p, 0] = sky[0]
            rgb[p, 1] = sky[1]
            rgb[p, 2] = sky[2]
            ids[p] = 0
            continue

        hx = ox + t_best * dx
        hy = oy + t_best * dy
        hz = oz + t_best * dz
        if hit_ground:
            nx, ny, nz = 0.0, 0.0, 1.0
            ar = ground_albedo[0]
            ag = ground_albedo[1]
            ab = ground_albedo[2]
            ids[p] = 0
        else:
            m = hit_obj
            if kinds[m] == 0:
                inv = 1.0 / sizes[m]
                nx = (hx - centers[m, 0]) * inv
                ny = (hy - centers[m, 1]) * inv
                nz = (hz - centers[m, 2]) * inv
            else:
                nx, ny, nz = _box_normal(
                    hx, hy, hz, centers[m, 0], centers[m, 1], centers[m, 2], sizes[m]
                )
            ar = albedos[m, 0]
            ag = albedos[m, 1]
            ab = albedos[m, 2]
            ids[p] = m + 1

        ndotl = nx * light[0] + ny * light[1] + nz * light[2]
        if ndotl < 0.0:
            ndotl = 0.0
        lit = 1.0
        if ndotl > 0.0:
            sx = hx + nx * _SHADOW_EPS
            sy = hy + ny * _SHADOW_EPS
            sz = hz + nz * _SHADOW_EPS
            if _any_hit(sx, sy, sz, light[0], light[1], light[2], kinds, centers, sizes):
                lit = 0.0

        for ch in range(3):
            a = ar if ch == 0 else (ag if ch == 1 else ab)
            v = ndotl * a * lit + ambient
            if v < 0.0:
                v = 0.0
            elif v > 1.0:
                v = 1.0
            rgb[p, ch] = v
    return rgb, ids


def _isect_sphere_np(o, d, c, r):
    p = o - c[None, :]
    b = p[:, 0] * d[:, 0] + p[:, 1] * d[:, 1] + p[:, 2] * d[:, 2]
    cc = p[:, 0] * p[:, 0] + p[:, 1] * p[:, 1] + p[:, 2] * p[:, 2] - r * r
    disc = b * b - cc
    ok = disc >= 0.0
    s = np.sqrt(np.where(ok, disc, 0.0))
    t1 = -b - s
    t2 = -b + s
    t = np.where(t1 > _T_MIN, t1, t2)
    return np.where(ok & (t > _T_MIN), t, -1.0)


def _isect_box_np(o, d, c, half):
    tnear = np.full(o.shape[0], -1e30)
    tfar = np.full(o.shape[0], 1e30)
    miss = np.zeros(o.shape[0], dtype=bool)
    for axis in range(3):
        oa = o[:, axis]
        da = d[:, axis]
        lo = c[axis] - half
        hi = c[axis] + half
        par = np.abs(da) < 1e-12
        miss |= par & ((oa < lo) | (oa > hi))
        safe = np.where(par, 1.0, da)
        t1 = (lo - oa) / safe
        t2 = (hi - oa) / safe
        tsmall = np.minimum(t1, t2)
        tbig = np.maximum(t1, t2)
        tnear = np.where(par, tnear, np.maximum(tnear, tsmall))
        tfar = np.where(par, tfar, np.minimum(tfar, tbig))
    miss |= tnear > tfar
    t = np.where(tnear > _T_MIN, tnear, tfar)
    return np.where(~miss & (t > _T_MIN), t, -1.0)


def _render_np(ray_o, ray_d, kinds, centers, sizes, albedos, ground_albedo, light, sky, ambient):
    npix = ray_o.shape[0]
    nobj = kinds.shape[0]

    t_all = np.full((nobj, npix), -1.0)
    for m in range(nobj):
        if kinds[m] == 0:
            t_all[m] = _isect_sphere_np(ray_o, ray_d, centers[m], sizes[m])
        else:
            t_all[m] = _isect_box_np(ray_o, ray_d, centers[m], sizes[m])
    t_obj = np.where(t_all > 0.0, t_all, 1e30)
    if nobj:
        hit_obj = np.argmin(t_obj, axis=0)
        t_best = t_obj[hit_obj, np.arange(npix)]
    else:
        hit_obj = np.zeros(npix, dtype=np.int64)
        t_best = np.full(npix, 1e30)

    dz = ray_d[:, 2]
    safe_dz = np.where(np.abs(dz) > 1e-12, dz, 1.0)
    tg = -ray_o[:, 2] / safe_dz
    ground = (np.abs(dz) > 1e-12) & (tg > _T_MIN) & (tg < t_best)
    t_best = np.where(ground, tg, t_best)
    obj_hit = (~ground) & (t_best < 1e30)

    hit_any = ground | obj_hit
    hit_pt = ray_o + t_best[:, None] * ray_d

    normal = np.zeros((npix, 3))
    albedo = np.zeros((npix, 3))
    ids = np.zeros(npix, dtype=np.int32)
    normal[ground, 2] = 1.0
    albedo[ground] = ground_albedo
    for m in range(nobj):
        sel = obj_hit & (hit_obj == m)
        if not np.any(sel):
            continue
        if kinds[m] == 0:
            normal[sel] = (hit_pt[sel] - centers[m]) * (1.0 / sizes[m])
        else:
            rel = (hit_pt[sel] - centers[m]) / sizes[m]
            arel = np.abs(rel)
            axis = np.argmax(arel, axis=1)
            nb = np.zeros_like(rel)
            rows = np.arange(rel.shape[0])
            nb[rows, axis] = np.where(rel[rows, axis] > 0, 1.0, -1.0)
            normal[sel] = nb
        albedo[sel] = albedos[m]
        ids[sel] = m + 1

    ndotl = np.maximum(
        0.0, normal[:, 0] * light[0] + normal[:, 1] * light[1] + normal[:, 2] * light[2]
    )
    shadow_origin = hit_pt + normal * _SHADOW_EPS
    lit = np.ones(npix)
    check = hit_any & (ndotl > 0.0)
    if np.any(check) and nobj:
        so = shadow_origin[check]
        sd = np.broadcast_to(light, (so.shape[0], 3))
        blocked = np.zeros(so.shape[0], dtype=bool)
        for m in range(nobj):
            if kinds[m] == 0:
                tm = _isect_sphere_np(so, sd, centers[m], sizes[m])
            else:
                tm = _isect_box_np(so, sd, centers[m], sizes[m])
            blocked |= tm > 0.0
        lit_check = np.where(blocked, 0.0, 1.0)
        lit[check] = lit_check

    shade = np.clip(ndotl[:, None] * albedo * lit[:, None] + ambient, 0.0, 1.0)
    rgb = np.where(hit_any[:, None], shade, np.broadcast_to(sky, (npix, 3)))
    return rgb, ids


def render_rays(
    ray_o: np.ndarray,
    ray_d: np.ndarray,
    kinds: np.ndarray,
    centers: np.ndarray,
    sizes: np.ndarray,
    albedos: np.ndarray,
    ground_albedo: np.ndarray,
    light: np.ndarray,
    sky: np.ndarray,
    ambient: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Shade a flat bundle of rays against the primitive list.

    Returns (rgb (P,3) float64 in [0,1], instance ids (P,) int32 with 0 for
    background/ground).
    """
    ray_o = np.ascontiguousarray(ray_o, dtype=np.float64)
    ray_d = np.ascontiguousarray(ray_d, dtype=np.float64)
    kinds = np.ascontiguousarray(kinds, dtype=np.int32)
    centers = np.ascontiguousarray(centers, dtype=np.float64).reshape(-1, 3)
    sizes = np.ascontiguousarray(sizes, dtype=np.float64)
    albedos = np.ascontiguousarray(albedos, dtype=np.float64).reshape(-1, 3)
    ground_albedo = np.asarray(ground_albedo, dtype=np.float64)
    light = np.asarray(light, dtype=np.float64)
    sky = np.asarray(sky, dtype=np.float64)
    if HAVE_NUMBA:
        return _render_nb(
            ray_o, ray_d, kinds, centers, sizes, albedos, ground_albedo, light, sky, ambient
        )
    return _render_np(
        ray_o, ray_d, kinds, centers, sizes, albedos, ground_albedo, light, sky, ambient
    )
