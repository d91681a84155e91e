"""Compiled hot loops.

Everything here mirrors the plain-Python semantics in tracer.py, bvh.py,
sampling.py, and reference.py, restated over flat arrays for numba. The
Python modules stay the readable statement of what the math is; these kernels
are what the renderer actually runs per pixel. Cross-agreement between the
two is covered by tests.

Determinism contract: every pixel is computed independently from (pixel
coordinates, frame index, seed), accumulated in a fixed order, so a render is
bitwise reproducible for any thread count and schedule.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

from .gaussians import SH_C0, SH_C1, SH_C2, SH_C3
from .sampling import DEFAULT_COEFFS, SLOT_OFFSET

_INF = math.inf
_TMAX = float(np.finfo(np.float64).max)
_STACK_SIZE = 128

_HA1 = DEFAULT_COEFFS.a1
_HB1 = DEFAULT_COEFFS.b1
_HA2X, _HA2Y = DEFAULT_COEFFS.a2
_HB2X = DEFAULT_COEFFS.b2[0]

_U64 = np.uint64
_M32 = _U64(0xFFFFFFFF)
_INV32 = 1.0 / 4294967296.0

_SH_C2_0, _SH_C2_1, _SH_C2_2, _SH_C2_3, _SH_C2_4 = SH_C2
_SH_C3_0, _SH_C3_1, _SH_C3_2, _SH_C3_3, _SH_C3_4, _SH_C3_5, _SH_C3_6 = SH_C3


# ---------------------------------------------------------------------------
# randomness
# ---------------------------------------------------------------------------


@njit(cache=True)
def _fract(x):
    r = x - math.floor(x)
    if r >= 1.0:
        r = 0.0
    return r


@njit(cache=True)
def _hash_position(x, y, z, slot):
    if slot != 0:
        z = z + slot * SLOT_OFFSET
    r1 = _fract(_HB1 * math.sin(_HA1 * z))
    s = _HA2X * (x + r1) + _HA2Y * (y + r1)
    return _fract(_HB2X * math.sin(s))


@njit(cache=True)
def _wang32(x):
    x = x & _M32
    x = (x ^ _U64(61)) ^ (x >> _U64(16))
    x = (x * _U64(9)) & _M32
    x = x ^ (x >> _U64(4))
    x = (x * _U64(0x27D4EB2D)) & _M32
    x = x ^ (x >> _U64(15))
    return x


def _sobol_dim2_directions() -> np.ndarray:
    m = 1
    v = np.zeros(32, dtype=np.uint64)
    for k in range(32):
        v[k] = m << (31 - k)
        m = m ^ (m << 1)
        m &= (1 << (k + 2)) - 1
    return v


_SOBOL_V2 = _sobol_dim2_directions()


@njit(cache=True)
def _sobol2_bits(index):
    i = index & _M32
    i = ((i & _U64(0x55555555)) << _U64(1)) | ((i >> _U64(1)) & _U64(0x55555555))
    i = ((i & _U64(0x33333333)) << _U64(2)) | ((i >> _U64(2)) & _U64(0x33333333))
    i = ((i & _U64(0x0F0F0F0F)) << _U64(4)) | ((i >> _U64(4)) & _U64(0x0F0F0F0F))
    i = ((i & _U64(0x00FF00FF)) << _U64(8)) | ((i >> _U64(8)) & _U64(0x00FF00FF))
    x = ((i << _U64(16)) | (i >> _U64(16))) & _M32
    y = _U64(0)
    j = index & _M32
    k = 0
    while j != _U64(0):
        if j & _U64(1) != _U64(0):
            y ^= _SOBOL_V2[k]
        j >>= _U64(1)
        k += 1
    return x, y & _M32


@njit(cache=True)
def _pixel_jitter(px, py, frame, seed):
    base = _wang32(
        ((_U64(px) * _U64(0x9E3779B1)) & _M32)
        ^ ((_U64(py) * _U64(0x85EBCA77)) & _M32)
        ^ ((_U64(seed) * _U64(0xC2B2AE3D)) & _M32)
    )
    sx = _wang32(base ^ _U64(0x68E31DA4))
    sy = _wang32(base ^ _U64(0xB5297A4D))
    bx, by = _sobol2_bits(_U64(frame))
    return np.float64(bx ^ sx) * _INV32, np.float64(by ^ sy) * _INV32


@njit(cache=True)
def hash_position_batch(points, slot, out):
    for i in range(points.shape[0]):
        out[i] = _hash_position(points[i, 0], points[i, 1], points[i, 2], slot)


@njit(cache=True)
def pixel_jitter_batch(px, py, frames, seed, out):
    for i in range(frames.shape[0]):
        jx, jy = _pixel_jitter(px, py, frames[i], seed)
        out[i, 0] = jx
        out[i, 1] = jy


# ---------------------------------------------------------------------------
# per-primitive response
# ---------------------------------------------------------------------------


@njit(cache=True)
def _candidate(means, cov6, opac, pid, ox, oy, oz, dx, dy, dz, mode, s2):
    """(valid, t, residual, hitx, hity, hitz) of one primitive along one ray.

    residual is the squared Mahalanobis distance at the peak; callers derive
    alpha = opacity * exp(-residual / 2) only for candidates that survive
    their range checks, keeping exp off the brute-force hot path. The Python
    tracer mirrors this exact expression order so that depths and hit
    positions (and hence hash draws) agree bit for bit with compiled traces.
    """
    mx = means[pid, 0]
    my = means[pid, 1]
    mz = means[pid, 2]
    a00 = cov6[pid, 0]
    a01 = cov6[pid, 1]
    a02 = cov6[pid, 2]
    a11 = cov6[pid, 3]
    a12 = cov6[pid, 4]
    a22 = cov6[pid, 5]
    vx = ox - mx
    vy = oy - my
    vz = oz - mz
    avx = a00 * vx + a01 * vy + a02 * vz
    avy = a01 * vx + a11 * vy + a12 * vz
    avz = a02 * vx + a12 * vy + a22 * vz
    adx = a00 * dx + a01 * dy + a02 * dz
    ady = a01 * dx + a11 * dy + a12 * dz
    adz = a02 * dx + a12 * dy + a22 * dz
    dad = dx * adx + dy * ady + dz * adz
    if not np.isfinite(dad) or dad <= 0.0:
        return False, 0.0, 0.0, 0.0, 0.0, 0.0
    dav = dx * avx + dy * avy + dz * avz
    vav = vx * avx + vy * avy + vz * avz
    residual = vav - dav * dav / dad
    if residual < 0.0:
        residual = 0.0
    if mode == 0:
        t = -dav / dad
        mah = residual
    else:
        t = (mx - ox) * dx + (my - oy) * dy + (mz - oz) * dz
        hx = vx + t * dx
        hy = vy + t * dy
        hz = vz + t * dz
        mah = (
            hx * (a00 * hx + a01 * hy + a02 * hz)
            + hy * (a01 * hx + a11 * hy + a12 * hz)
            + hz * (a02 * hx + a12 * hy + a22 * hz)
        )
    if not np.isfinite(t) or mah > s2:
        return False, 0.0, residual, 0.0, 0.0, 0.0
    return True, t, residual, ox + t * dx, oy + t * dy, oz + t * dz


@njit(cache=True)
def _sh_color(sh, deg, pid, x, y, z):
    r = SH_C0 * sh[pid, 0, 0]
    g = SH_C0 * sh[pid, 1, 0]
    b = SH_C0 * sh[pid, 2, 0]
    if deg >= 1:
        r = r - SH_C1 * y * sh[pid, 0, 1] + SH_C1 * z * sh[pid, 0, 2] - SH_C1 * x * sh[pid, 0, 3]
        g = g - SH_C1 * y * sh[pid, 1, 1] + SH_C1 * z * sh[pid, 1, 2] - SH_C1 * x * sh[pid, 1, 3]
        b = b - SH_C1 * y * sh[pid, 2, 1] + SH_C1 * z * sh[pid, 2, 2] - SH_C1 * x * sh[pid, 2, 3]
    if deg >= 2:
        xx = x * x
        yy = y * y
        zz = z * z
        b0 = x * y
        b1 = y * z
        b2 = 2.0 * zz - xx - yy
        b3 = x * z
        b4 = xx - yy
        for ch in range(3):
            val = (
                _SH_C2_0 * b0 * sh[pid, ch, 4]
                + _SH_C2_1 * b1 * sh[pid, ch, 5]
                + _SH_C2_2 * b2 * sh[pid, ch, 6]
                + _SH_C2_3 * b3 * sh[pid, ch, 7]
                + _SH_C2_4 * b4 * sh[pid, ch, 8]
            )
            if ch == 0:
                r += val
            elif ch == 1:
                g += val
            else:
                b += val
        if deg >= 3:
            c0 = y * (3.0 * xx - yy)
            c1 = b0 * z
            c2 = y * (4.0 * zz - xx - yy)
            c3 = z * (2.0 * zz - 3.0 * xx - 3.0 * yy)
            c4 = x * (4.0 * zz - xx - yy)
            c5 = z * b4
            c6 = x * (xx - 3.0 * yy)
            for ch in range(3):
                val = (
                    _SH_C3_0 * c0 * sh[pid, ch, 9]
                    + _SH_C3_1 * c1 * sh[pid, ch, 10]
                    + _SH_C3_2 * c2 * sh[pid, ch, 11]
                    + _SH_C3_3 * c3 * sh[pid, ch, 12]
                    + _SH_C3_4 * c4 * sh[pid, ch, 13]
                    + _SH_C3_5 * c5 * sh[pid, ch, 14]
                    + _SH_C3_6 * c6 * sh[pid, ch, 15]
                )
                if ch == 0:
                    r += val
                elif ch == 1:
                    g += val
                else:
                    b += val
    r += 0.5
    g += 0.5
    b += 0.5
    if r < 0.0:
        r = 0.0
    if g < 0.0:
        g = 0.0
    if b < 0.0:
        b = 0.0
    return r, g, b


# ---------------------------------------------------------------------------
# traversal
# ---------------------------------------------------------------------------


@njit(cache=True)
def _slab_entry(lo, hi, nid, ox, oy, oz, dx, dy, dz, t_min, t_max):
    t0 = t_min
    t1 = t_max
    if dx != 0.0:
        ta = (lo[nid, 0] - ox) / dx
        tb = (hi[nid, 0] - ox) / dx
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
        if t0 > t1:
            return _INF
    elif ox < lo[nid, 0] or ox > hi[nid, 0]:
        return _INF
    if dy != 0.0:
        ta = (lo[nid, 1] - oy) / dy
        tb = (hi[nid, 1] - oy) / dy
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
        if t0 > t1:
            return _INF
    elif oy < lo[nid, 1] or oy > hi[nid, 1]:
        return _INF
    if dz != 0.0:
        ta = (lo[nid, 2] - oz) / dz
        tb = (hi[nid, 2] - oz) / dz
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
        if t0 > t1:
            return _INF
    elif oz < lo[nid, 2] or oz > hi[nid, 2]:
        return _INF
    return t0


@njit(cache=True)
def _trace_slots(
    node_lo, node_hi, node_left, node_right, node_count, prim_order, prim_lo, prim_hi,
    means, cov6, opac,
    ox, oy, oz, dx, dy, dz, t_min, t_max0,
    mode, s2, clip, slot_t, slot_id,
):
    """One stochastic walk filling per-slot nearest accepted (t, id)."""
    nslots = slot_t.shape[0]
    for k in range(nslots):
        slot_t[k] = _INF
        slot_id[k] = -1
    if node_lo.shape[0] == 0:
        return
    far = t_max0
    entry = _slab_entry(node_lo, node_hi, 0, ox, oy, oz, dx, dy, dz, t_min, far)
    if entry == _INF:
        return
    stack_id = np.empty(_STACK_SIZE, np.int64)
    stack_t = np.empty(_STACK_SIZE, np.float64)
    stack_id[0] = 0
    stack_t[0] = entry
    sp = 1
    while sp > 0:
        sp -= 1
        nid = stack_id[sp]
        if stack_t[sp] > far:
            continue
        cnt = node_count[nid]
        if cnt > 0:
            start = node_left[nid]
            for idx in range(start, start + cnt):
                pid = prim_order[idx]
                if _slab_entry(prim_lo, prim_hi, pid, ox, oy, oz, dx, dy, dz, t_min, far) == _INF:
                    continue
                valid, t, resid, hx, hy, hz = _candidate(
                    means, cov6, opac, pid, ox, oy, oz, dx, dy, dz, mode, s2
                )
                if not valid or t <= t_min or t >= t_max0:
                    continue
                alpha = opac[pid] * math.exp(-0.5 * resid)
                improved = False
                for k in range(nslots):
                    if t < slot_t[k] and _hash_position(hx, hy, hz, k) < alpha:
                        slot_t[k] = t
                        slot_id[k] = pid
                        improved = True
                if improved and clip:
                    worst = slot_t[0]
                    for k in range(1, nslots):
                        if slot_t[k] > worst:
                            worst = slot_t[k]
                    if worst < far:
                        far = worst
        else:
            lid = node_left[nid]
            rid = node_right[nid]
            el = _slab_entry(node_lo, node_hi, lid, ox, oy, oz, dx, dy, dz, t_min, far)
            er = _slab_entry(node_lo, node_hi, rid, ox, oy, oz, dx, dy, dz, t_min, far)
            if el <= er:
                if er != _INF:
                    stack_id[sp] = rid
                    stack_t[sp] = er
                    sp += 1
                if el != _INF:
                    stack_id[sp] = lid
                    stack_t[sp] = el
                    sp += 1
            else:
                if el != _INF:
                    stack_id[sp] = lid
                    stack_t[sp] = el
                    sp += 1
                if er != _INF:
                    stack_id[sp] = rid
                    stack_t[sp] = er
                    sp += 1
    return


@njit(cache=True)
def _transmittance_one(
    node_lo, node_hi, node_left, node_right, node_count, prim_order, prim_lo, prim_hi,
    means, cov6, opac,
    ox, oy, oz, dx, dy, dz, t_min, t_max,
    mode, s2,
):
    """Product of (1 - alpha) over every valid candidate; no clipping."""
    result = 1.0
    if node_lo.shape[0] == 0:
        return result
    entry = _slab_entry(node_lo, node_hi, 0, ox, oy, oz, dx, dy, dz, t_min, t_max)
    if entry == _INF:
        return result
    stack_id = np.empty(_STACK_SIZE, np.int64)
    sp = 1
    stack_id[0] = 0
    while sp > 0:
        sp -= 1
        nid = stack_id[sp]
        cnt = node_count[nid]
        if cnt > 0:
            start = node_left[nid]
            for idx in range(start, start + cnt):
                pid = prim_order[idx]
                if _slab_entry(prim_lo, prim_hi, pid, ox, oy, oz, dx, dy, dz, t_min, t_max) == _INF:
                    continue
                valid, t, resid, hx, hy, hz = _candidate(
                    means, cov6, opac, pid, ox, oy, oz, dx, dy, dz, mode, s2
                )
                if valid and t > t_min and t < t_max:
                    result *= 1.0 - opac[pid] * math.exp(-0.5 * resid)
        else:
            lid = node_left[nid]
            rid = node_right[nid]
            if _slab_entry(node_lo, node_hi, lid, ox, oy, oz, dx, dy, dz, t_min, t_max) != _INF:
                stack_id[sp] = lid
                sp += 1
            if _slab_entry(node_lo, node_hi, rid, ox, oy, oz, dx, dy, dz, t_min, t_max) != _INF:
                stack_id[sp] = rid
                sp += 1
    return result


# ---------------------------------------------------------------------------
# exact per-ray compositing (brute force, no BVH)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _exact_ray(
    means, cov6, opac, sh, deg,
    ox, oy, oz, dx, dy, dz, t_min, t_max,
    mode, s2, bgr, bgg, bgb,
    t_buf, a_buf, id_buf,
):
    n = means.shape[0]
    m = 0
    for pid in range(n):
        valid, t, resid, hx, hy, hz = _candidate(
            means, cov6, opac, pid, ox, oy, oz, dx, dy, dz, mode, s2
        )
        if valid and t > t_min and t < t_max:
            t_buf[m] = t
            a_buf[m] = opac[pid] * math.exp(-0.5 * resid)
            id_buf[m] = pid
            m += 1
    order = np.argsort(t_buf[:m], kind="mergesort")
    r = 0.0
    g = 0.0
    b = 0.0
    trans = 1.0
    for i in range(m):
        j = order[i]
        alpha = a_buf[j]
        cr, cg, cb = _sh_color(sh, deg, id_buf[j], dx, dy, dz)
        w = trans * alpha
        r += w * cr
        g += w * cg
        b += w * cb
        trans *= 1.0 - alpha
    r += trans * bgr
    g += trans * bgg
    b += trans * bgb
    return r, g, b, 1.0 - trans


@njit(cache=True)
def _biased_ray(
    means, cov6, opac, sh, deg,
    ox, oy, oz, dx, dy, dz, t_min, t_max,
    mode, s2, kk, bgr, bgg, bgb,
    t_buf, a_buf, id_buf,
):
    """Stochastic acceptance, then composite only the kk nearest accepted."""
    n = means.shape[0]
    m = 0
    for pid in range(n):
        valid, t, resid, hx, hy, hz = _candidate(
            means, cov6, opac, pid, ox, oy, oz, dx, dy, dz, mode, s2
        )
        if not valid or t <= t_min or t >= t_max:
            continue
        alpha = opac[pid] * math.exp(-0.5 * resid)
        if _hash_position(hx, hy, hz, 0) < alpha:
            t_buf[m] = t
            a_buf[m] = alpha
            id_buf[m] = pid
            m += 1
    order = np.argsort(t_buf[:m], kind="mergesort")
    r = 0.0
    g = 0.0
    b = 0.0
    trans = 1.0
    take = m if m < kk else kk
    for i in range(take):
        j = order[i]
        alpha = a_buf[j]
        cr, cg, cb = _sh_color(sh, deg, id_buf[j], dx, dy, dz)
        w = trans * alpha
        r += w * cr
        g += w * cg
        b += w * cb
        trans *= 1.0 - alpha
    r += trans * bgr
    g += trans * bgg
    b += trans * bgb
    return r, g, b


# ---------------------------------------------------------------------------
# batch drivers over explicit rays
# ---------------------------------------------------------------------------


@njit(cache=True, parallel=True)
def trace_batch(
    node_lo, node_hi, node_left, node_right, node_count, prim_order, prim_lo, prim_hi,
    means, cov6, opac,
    origins, directions, t_min, t_max,
    mode, s2, clip, out_t, out_id,
):
    for i in prange(origins.shape[0]):
        _trace_slots(
            node_lo, node_hi, node_left, node_right, node_count, prim_order, prim_lo, prim_hi,
            means, cov6, opac,
            origins[i, 0], origins[i, 1], origins[i, 2],
            directions[i, 0], directions[i, 1], directions[i, 2],
            t_min, t_max, mode, s2, clip, out_t[i], out_id[i],
        )


@njit(cache=True, parallel=True)
def transmittance_batch(
    node_lo, node_hi, node_left, node_right, node_count, prim_order, prim_lo, prim_hi,
    means, cov6, opac,
    origins, directions, t_min, t_max,
    mode, s2, out,
):
    for i in prange(origins.shape[0]):
        out[i] = _transmittance_one(
            node_lo, node_hi, node_left, node_right, node_count, prim_order, prim_lo, prim_hi,
            means, cov6, opac,
            origins[i, 0], origins[i, 1], origins[i, 2],
            directions[i, 0], directions[i, 1], directions[i, 2],
            t_min, t_max, mode, s2,
        )


@njit(cache=True, parallel=True)
def biased_batch(
    means, cov6, opac, sh, deg,
    origins, directions, t_min, t_max,
    mode, s2, kk, bgr, bgg, bgb, out_rgb,
):
    n = means.shape[0]
    for i in prange(origins.shape[0]):
        t_buf = np.empty(n, np.float64)
        a_buf = np.empty(n, np.float64)
        id_buf = np.empty(n, np.int64)
        r, g, b = _biased_ray(
            means, cov6, opac, sh, deg,
            origins[i, 0], origins[i, 1], origins[i, 2],
            directions[i, 0], directions[i, 1], directions[i, 2],
            t_min, t_max, mode, s2, kk, bgr, bgg, bgb,
            t_buf, a_buf, id_buf,
        )
        out_rgb[i, 0] = r
        out_rgb[i, 1] = g
        out_rgb[i, 2] = b


@njit(cache=True, parallel=True)
def exact_batch(
    means, cov6, opac, sh, deg,
    origins, directions, t_min, t_max,
    mode, s2, bgr, bgg, bgb, out_rgb, out_op,
):
    n = means.shape[0]
    for i in prange(origins.shape[0]):
        t_buf = np.empty(n, np.float64)
        a_buf = np.empty(n, np.float64)
        id_buf = np.empty(n, np.int64)
        r, g, b, op = _exact_ray(
            means, cov6, opac, sh, deg,
            origins[i, 0], origins[i, 1], origins[i, 2],
            directions[i, 0], directions[i, 1], directions[i, 2],
            t_min, t_max, mode, s2, bgr, bgg, bgb,
            t_buf, a_buf, id_buf,
        )
        out_rgb[i, 0] = r
        out_rgb[i, 1] = g
        out_rgb[i, 2] = b
        out_op[i] = op


# ---------------------------------------------------------------------------
# full-frame renderers
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _camera_dir(ex, ey, ez, rx, ry, rz, ux, uy, uz, fx, fy, fz, half_w, half_h, u, v):
    ddx = fx + u * half_w * rx + v * half_h * ux
    ddy = fy + u * half_w * ry + v * half_h * uy
    ddz = fz + u * half_w * rz + v * half_h * uz
    inv = 1.0 / math.sqrt(ddx * ddx + ddy * ddy + ddz * ddz)
    return ddx * inv, ddy * inv, ddz * inv


@njit(cache=True, parallel=True)
def render_stochastic(
    node_lo, node_hi, node_left, node_right, node_count, prim_order, prim_lo, prim_hi,
    means, cov6, opac, sh, deg,
    ex, ey, ez, rx, ry, rz, ux, uy, uz, fx, fy, fz, half_w, half_h,
    width, height, passes, nslots, mode, s2, clip, seed,
    bgr, bgg, bgb, out_rgb, out_op,
):
    tiles_x = (width + 15) // 16
    tiles_y = (height + 15) // 16
    for tile in prange(tiles_x * tiles_y):
        ty = tile // tiles_x
        tx = tile % tiles_x
        slot_t = np.empty(nslots, np.float64)
        slot_id = np.empty(nslots, np.int64)
        y_end = min((ty + 1) * 16, height)
        x_end = min((tx + 1) * 16, width)
        for py in range(ty * 16, y_end):
            for px in range(tx * 16, x_end):
                acc_r = 0.0
                acc_g = 0.0
                acc_b = 0.0
                acc_o = 0.0
                for f in range(passes):
                    jx, jy = _pixel_jitter(px, py, f, seed)
                    u = 2.0 * (px + jx) / width - 1.0
                    v = 1.0 - 2.0 * (py + jy) / height
                    dx, dy, dz = _camera_dir(
                        ex, ey, ez, rx, ry, rz, ux, uy, uz, fx, fy, fz, half_w, half_h, u, v
                    )
                    _trace_slots(
                        node_lo, node_hi, node_left, node_right, node_count,
                        prim_order, prim_lo, prim_hi, means, cov6, opac,
                        ex, ey, ez, dx, dy, dz, 0.0, _TMAX,
                        mode, s2, clip, slot_t, slot_id,
                    )
                    for k in range(nslots):
                        pid = slot_id[k]
                        if pid >= 0:
                            cr, cg, cb = _sh_color(sh, deg, pid, dx, dy, dz)
                            acc_r += cr
                            acc_g += cg
                            acc_b += cb
                            acc_o += 1.0
                        else:
                            acc_r += bgr
                            acc_g += bgg
                            acc_b += bgb
                inv = 1.0 / (passes * nslots)
                out_rgb[py, px, 0] = acc_r * inv
                out_rgb[py, px, 1] = acc_g * inv
                out_rgb[py, px, 2] = acc_b * inv
                out_op[py, px] = acc_o * inv


@njit(cache=True, parallel=True)
def render_exact(
    means, cov6, opac, sh, deg,
    ex, ey, ez, rx, ry, rz, ux, uy, uz, fx, fy, fz, half_w, half_h,
    width, height, frames, mode, s2, seed,
    bgr, bgg, bgb, out_rgb, out_op,
):
    """Brute-force exact compositing, averaged over the same jitter sequence
    the stochastic renderer would use."""
    n = means.shape[0]
    tiles_x = (width + 15) // 16
    tiles_y = (height + 15) // 16
    for tile in prange(tiles_x * tiles_y):
        ty = tile // tiles_x
        tx = tile % tiles_x
        t_buf = np.empty(n, np.float64)
        a_buf = np.empty(n, np.float64)
        id_buf = np.empty(n, np.int64)
        y_end = min((ty + 1) * 16, height)
        x_end = min((tx + 1) * 16, width)
        for py in range(ty * 16, y_end):
            for px in range(tx * 16, x_end):
                acc_r = 0.0
                acc_g = 0.0
                acc_b = 0.0
                acc_o = 0.0
                for f in range(frames):
                    jx, jy = _pixel_jitter(px, py, f, seed)
                    u = 2.0 * (px + jx) / width - 1.0
                    v = 1.0 - 2.0 * (py + jy) / height
                    dx, dy, dz = _camera_dir(
                        ex, ey, ez, rx, ry, rz, ux, uy, uz, fx, fy, fz, half_w, half_h, u, v
                    )
                    r, g, b, op = _exact_ray(
                        means, cov6, opac, sh, deg,
                        ex, ey, ez, dx, dy, dz, 0.0, _TMAX,
                        mode, s2, bgr, bgg, bgb,
                        t_buf, a_buf, id_buf,
                    )
                    acc_r += r
                    acc_g += g
                    acc_b += b
                    acc_o += op
                inv = 1.0 / frames
                out_rgb[py, px, 0] = acc_r * inv
                out_rgb[py, px, 1] = acc_g * inv
                out_rgb[py, px, 2] = acc_b * inv
                out_op[py, px] = acc_o * inv
