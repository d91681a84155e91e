"""Stochastic splat tracing.

One BVH walk per ray. Every primitive the walk reaches is turned into a
candidate (depth, alpha, position) and accepted with probability alpha using
the position-keyed hash; the tracer keeps the closest accepted candidate and
shrinks the ray interval to it, so later parts of the walk can be skipped.
Because acceptance depends only on the hit position (never on visit order or
on earlier decisions), clipping the interval cannot change the outcome: the
closest accepted hit is identical with clipping on or off.

Averaged over many runs, shading the closest accepted hit reproduces exact
sorted compositing without ever sorting, which is the point of the estimator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import bvh as bvh_mod
from .assets import SplatAsset
from .gaussians import (
    DEFAULT_CUTOFF,
    Gaussian3D,
    Ray,
    depth_center,
    eval_color,
    is_negligible,
    ray_peak_1d,
)
from .sampling import hash_position

_INF = math.inf


@dataclass
class HitRecord:
    """Result of one stochastic trace: accepted primitive id and its depth.

    prim_id is None on a miss, in which case t is +inf.
    """

    prim_id: int | None
    t: float

    def __post_init__(self):
        if self.prim_id is None:
            if self.t != _INF:
                raise ValueError("miss records must carry t = +inf")
        else:
            self.prim_id = int(self.prim_id)
            self.t = float(self.t)
            if not math.isfinite(self.t):
                raise ValueError("hit records must carry a finite depth")

    @property
    def hit(self) -> bool:
        return self.prim_id is not None


@dataclass
class MultiSampleState:
    """Per-slot nearest accepted hits of a multi-sample trace."""

    slots: list[HitRecord]

    def __post_init__(self):
        if not self.slots:
            raise ValueError("multi-sample state needs at least one slot")


def _accepts(xi: float, alpha: float) -> bool:
    # Russian-roulette acceptance: the candidate survives when the uniform
    # draw falls below its alpha, so P(accept) == alpha exactly.
    return xi < alpha


def _candidate(pack, pid: int, origin, direction, depth_mode: str, s2: float):
    """(t, alpha, position) of one packed primitive along a ray, or None.

    None means the response is negligible (outside the cutoff ellipsoid) or
    the covariance quadratic is unusable for this direction. No range check
    and no randomness here; callers layer those on top.

    The arithmetic deliberately mirrors the compiled kernel expression for
    expression: both evaluate IEEE doubles in the same order, so depths and
    hit positions agree bit for bit and the position-keyed hash draws
    identical numbers on either path.
    """
    mx, my, mz = pack.means[pid]
    a00, a01, a02, a11, a12, a22 = pack.cov_inv6[pid]
    ox, oy, oz = origin
    dx, dy, dz = direction
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
    if not math.isfinite(dad) or dad <= 0.0:
        return None
    dav = dx * avx + dy * avy + dz * avz
    vav = vx * avx + vy * avy + vz * avz
    residual = vav - dav * dav / dad
    if residual < 0.0:
        residual = 0.0
    if depth_mode == "mean":
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
    if not math.isfinite(t) or mah > s2:
        return None
    alpha = float(pack.opacities[pid]) * math.exp(-0.5 * residual)
    return float(t), alpha, np.array([ox + t * dx, oy + t * dy, oz + t * dz])


def intersect_primitive(
    g: Gaussian3D,
    ray: Ray,
    depth_mode: str = "mean",
    s: float = DEFAULT_CUTOFF,
    slot: int = 0,
) -> float | None:
    """Stochastic intersection of one primitive: the accepted depth or None.

    The candidate must fall strictly inside (ray.t_min, ray.t_max) and inside
    the cutoff ellipsoid; it is then accepted with probability alpha using the
    hash of its position.
    """
    _require_mode(depth_mode)
    t_peak, alpha = ray_peak_1d(g, ray)
    t = t_peak if depth_mode == "mean" else depth_center(g, ray)
    if not math.isfinite(t) or not ray.t_min < t < ray.t_max:
        return None
    pos = ray.origin + t * ray.direction
    if is_negligible(g, pos, s):
        return None
    if _accepts(hash_position(pos, slot), alpha):
        return t
    return None


def _require_mode(depth_mode: str) -> None:
    if depth_mode not in ("mean", "center"):
        raise ValueError(f"unknown depth mode {depth_mode!r}")


def trace_single(
    bvh: bvh_mod.Bvh,
    scene: SplatAsset,
    ray: Ray,
    depth_mode: str = "mean",
    s: float = DEFAULT_CUTOFF,
    clip: bool = True,
    slot: int = 0,
) -> HitRecord:
    """One stochastic trace; returns the closest accepted hit.

    clip=True shrinks the working ray's t_max to each accepted depth, letting
    the BVH walk skip everything provably farther. clip=False keeps the full
    interval; the result is identical either way (acceptance is keyed to
    positions, and a closer accepted hit can never appear behind the clip).
    """
    _require_mode(depth_mode)
    pack = scene.packed
    s2 = s * s
    work = replace(ray)
    limit = ray.t_max
    best_t = _INF
    best_id = -1

    def visit(pid: int) -> None:
        nonlocal best_t, best_id
        cand = _candidate(pack, pid, work.origin, work.direction, depth_mode, s2)
        if cand is None:
            return
        t, alpha, pos = cand
        if not (work.t_min < t < limit and t < best_t):
            return
        if _accepts(hash_position(pos, slot), alpha):
            best_t = t
            best_id = pid
            if clip:
                work.t_max = t

    bvh_mod.traverse(bvh, work, visit)
    if best_id < 0:
        return HitRecord(None, _INF)
    return HitRecord(best_id, best_t)


def trace_multi(
    bvh: bvh_mod.Bvh,
    scene: SplatAsset,
    ray: Ray,
    n: int,
    depth_mode: str = "mean",
    s: float = DEFAULT_CUTOFF,
    clip: bool = True,
) -> MultiSampleState:
    """n stochastic samples from a single BVH walk.

    Slot k draws its acceptance from hash_position(pos, slot=k), so the slots
    are mutually decorrelated while sharing candidate evaluations. With
    clipping the walk's far bound is the farthest per-slot best (any slot
    might still improve below it); n=1 reproduces trace_single exactly.
    """
    _require_mode(depth_mode)
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")
    pack = scene.packed
    s2 = s * s
    work = replace(ray)
    limit = ray.t_max
    slot_t = [_INF] * n
    slot_id = [-1] * n

    def visit(pid: int) -> None:
        cand = _candidate(pack, pid, work.origin, work.direction, depth_mode, s2)
        if cand is None:
            return
        t, alpha, pos = cand
        if not work.t_min < t < limit:
            return
        improved = False
        for k in range(n):
            if t < slot_t[k] and _accepts(hash_position(pos, k), alpha):
                slot_t[k] = t
                slot_id[k] = pid
                improved = True
        if improved and clip:
            far = max(slot_t)
            if far < work.t_max:
                work.t_max = far

    bvh_mod.traverse(bvh, work, visit)
    return MultiSampleState(
        [HitRecord(pid, t) if pid >= 0 else HitRecord(None, _INF) for pid, t in zip(slot_id, slot_t)]
    )


def shade_ray(
    hit: HitRecord,
    scene: SplatAsset,
    ray: Ray,
    background,
) -> tuple[np.ndarray, float]:
    """(radiance, opacity) of one stochastic sample.

    A hit shades the accepted primitive's view-dependent color with opacity 1;
    a miss returns the background with opacity 0. The mean of this estimator
    over runs equals the exact composited radiance and opacity.
    """
    if hit.prim_id is None:
        return np.asarray(background, dtype=np.float64).reshape(3).copy(), 0.0
    return eval_color(scene[hit.prim_id], ray.direction), 1.0


def transmittance(
    bvh: bvh_mod.Bvh,
    scene: SplatAsset,
    ray: Ray,
    depth_mode: str = "mean",
    s: float = DEFAULT_CUTOFF,
) -> float:
    """Deterministic transmittance: product of (1 - alpha) over the ray.

    No randomness and no clipping; the product is order independent, so the
    BVH visit order does not matter.
    """
    _require_mode(depth_mode)
    pack = scene.packed
    s2 = s * s
    result = 1.0

    def visit(pid: int) -> None:
        nonlocal result
        cand = _candidate(pack, pid, ray.origin, ray.direction, depth_mode, s2)
        if cand is None:
            return
        t, alpha, _pos = cand
        if ray.t_min < t < ray.t_max:
            result *= 1.0 - alpha

    bvh_mod.traverse(bvh, ray, visit)
    return result


def biased_depth_trace(
    bvh: bvh_mod.Bvh,
    scene: SplatAsset,
    ray: Ray,
    k: int,
    background,
    depth_mode: str = "mean",
    s: float = DEFAULT_CUTOFF,
) -> np.ndarray:
    """Composite only the k nearest accepted candidates (a biased baseline).

    Candidates are accepted stochastically as in trace_single, but instead of
    keeping one, the k nearest accepted are composited front to back with
    their original alphas and the background behind them. Truncating at k
    biases the estimate toward the background; k=1 is the most biased. Used
    as a contrast case for the unbiased single-hit estimator.
    """
    _require_mode(depth_mode)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    pack = scene.packed
    s2 = s * s
    accepted: list[tuple[float, int, float]] = []

    def visit(pid: int) -> None:
        cand = _candidate(pack, pid, ray.origin, ray.direction, depth_mode, s2)
        if cand is None:
            return
        t, alpha, pos = cand
        if not ray.t_min < t < ray.t_max:
            return
        if _accepts(hash_position(pos, 0), alpha):
            accepted.append((t, pid, alpha))

    bvh_mod.traverse(bvh, ray, visit)
    accepted.sort()
    bg = np.asarray(background, dtype=np.float64).reshape(3)
    radiance = np.zeros(3)
    trans = 1.0
    for t, pid, alpha in accepted[:k]:
        radiance += trans * alpha * eval_color(scene[pid], ray.direction)
        trans *= 1.0 - alpha
    return radiance + trans * bg


def candidate_colors(scene: SplatAsset, candidates: Sequence, direction) -> np.ndarray:
    """View-dependent colors of a candidate list, as an (M, 3) array."""
    return np.array(
        [eval_color(scene[c.prim_id], direction) for c in candidates], dtype=np.float64
    ).reshape(len(candidates), 3)
