"""Built-in correctness checks, runnable via ``splatray validate``.

Each check pins the stochastic machinery against an independent expectation:
exhaustive enumeration for compositing, binomial statistics for acceptance,
brute force for the BVH, uniformity tests for the hash. They are smaller
(faster) cousins of the full test suite, meant as a field diagnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import bvh as bvh_mod
from . import kernels, reference, tracer
from .assets import SplatAsset
from .config import RenderSettings
from .gaussians import Ray
from .render import render, scene_bvh, _bvh_args, _scene_args
from .sampling import hash_position
from .synthetic import front_camera, pancake_stack, random_cloud

_TMAX = float(np.finfo(np.float64).max)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _jittered_rays(n: int, seed: int, lateral: float = 0.4) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    origins = np.zeros((n, 3))
    origins[:, 0] = rng.uniform(-lateral, lateral, n)
    origins[:, 1] = rng.uniform(-lateral, lateral, n)
    origins[:, 2] = -5.0
    directions = np.tile(np.array([0.0, 0.0, 1.0]), (n, 1))
    return origins, directions


def check_enumeration_identity(seed: int = 0) -> CheckResult:
    """Enumerated expectation of the stochastic estimator == exact compositing."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(50):
        m = int(rng.integers(1, 11))
        asset = random_cloud(m, seed=int(rng.integers(1 << 30)), extent=1.0,
                             scale_range=(0.2, 0.8), opacity_range=(0.05, 0.95))
        ray = Ray(origin=[0.0, 0.0, -4.0], direction=[0.0, 0.0, 1.0])
        cands = reference.collect_candidates(asset, ray)
        colors = tracer.candidate_colors(asset, cands, ray.direction)
        bg = rng.uniform(0, 1, 3)
        lhs_rgb, lhs_op = reference.enumerate_expectation(cands, colors, bg)
        rhs_rgb, rhs_op = reference.composite_sorted(cands, colors, bg)
        worst = max(worst, float(np.max(np.abs(lhs_rgb - rhs_rgb))), abs(lhs_op - rhs_op))
    return CheckResult(
        "enumeration matches sorted compositing",
        worst <= 1e-12,
        f"max abs difference {worst:.3e} (tolerance 1e-12)",
    )


def check_unbiased_mean(seed: int = 0, n: int = 20000) -> CheckResult:
    """Mean of single-hit shading matches exact compositing on a layered scene.

    Uses asymmetric alphas (0.3 front, 0.8 back) so a flipped acceptance
    comparison shifts the front layer's coverage from 0.3 to 0.7 and the check
    fails loudly. Runs through the plain-Python tracer.
    """
    asset = pancake_stack([0.3, 0.8], [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    bvh = scene_bvh(asset, RenderSettings().cutoff_s)
    origins, dirs = _jittered_rays(n, seed)
    acc = np.zeros(3)
    bg = np.zeros(3)
    for i in range(n):
        ray = Ray(origin=origins[i], direction=dirs[i])
        hit = tracer.trace_single(bvh, asset, ray)
        rgb, _ = tracer.shade_ray(hit, asset, ray, bg)
        acc += rgb
    mean = acc / n
    expect = np.array([0.3, 0.0, 0.7 * 0.8])
    se = np.sqrt(np.array([0.3 * 0.7, 1e-12, 0.56 * 0.44]) / n)
    dev = np.abs(mean - expect)
    ok = bool(np.all(dev <= 4.0 * se + 1e-9))
    return CheckResult(
        "single-hit estimator is unbiased",
        ok,
        f"mean {np.array2string(mean, precision=4)} vs expected {expect} "
        f"(largest deviation {dev.max():.4f}, 4 SE = {(4 * se).max():.4f})",
    )


def check_miss_rate(seed: int = 0, n: int = 200000) -> CheckResult:
    """Miss frequency matches the product of transparencies."""
    alphas = [0.15, 0.4, 0.25, 0.6]
    asset = pancake_stack(alphas, [[0.5, 0.5, 0.5]] * 4)
    bvh = scene_bvh(asset, RenderSettings().cutoff_s)
    origins, dirs = _jittered_rays(n, seed)
    out_t = np.empty((n, 1))
    out_id = np.empty((n, 1), np.int64)
    kernels.trace_batch(
        *_bvh_args(bvh), *_scene_args(asset), origins, dirs, 0.0, _TMAX,
        0, 8.0, True, out_t, out_id,
    )
    p_miss = float(np.prod([1 - a for a in alphas]))
    observed = float(np.mean(out_id[:, 0] < 0))
    sigma = math.sqrt(p_miss * (1 - p_miss) / n)
    ok = abs(observed - p_miss) <= 4.0 * sigma
    return CheckResult(
        "miss rate equals product of transparencies",
        ok,
        f"observed {observed:.5f} vs {p_miss:.5f} (4 sigma = {4 * sigma:.5f})",
    )


def check_bvh_equivalence(seed: int = 0, n_rays: int = 200, n_prims: int = 3000) -> CheckResult:
    """Traversal visits a superset of, and filters to, the brute-force candidates."""
    asset = random_cloud(n_prims, seed=seed)
    s = RenderSettings().cutoff_s
    bvh = scene_bvh(asset, s)
    rng = np.random.default_rng(seed + 1)
    mismatches = 0
    for _ in range(n_rays):
        origin = rng.uniform(-4, 4, 3)
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        ray = Ray(origin=origin, direction=direction)
        visited: list[int] = []
        bvh_mod.traverse(bvh, ray, visited.append)
        valid, t, _ = reference.candidate_fields(asset, origin, direction, "mean", s)
        valid = valid & (t > ray.t_min) & (t < ray.t_max)
        brute = set(np.nonzero(valid)[0].tolist())
        via_bvh = {pid for pid in visited if valid[pid]}
        if via_bvh != brute:
            mismatches += 1
    return CheckResult(
        "BVH visits exactly the brute-force candidate set",
        mismatches == 0,
        f"{mismatches} mismatching rays out of {n_rays}",
    )


def check_hash_uniformity(seed: int = 0, n: int = 200000) -> CheckResult:
    """Position hash outputs are uniform on [0, 1)."""
    rng = np.random.default_rng(seed)
    points = rng.uniform(-3, 3, size=(n, 3))
    xi = np.empty(n)
    kernels.hash_position_batch(points, 0, xi)
    counts, _ = np.histogram(xi, bins=128, range=(0.0, 1.0))
    chi2, p = stats.chisquare(counts)
    mean = float(xi.mean())
    ok = p > 0.001 and abs(mean - 0.5) < 0.005
    return CheckResult(
        "position hash is uniform",
        bool(ok),
        f"chi-square p = {p:.4f}, mean = {mean:.5f}",
    )


def check_clipping_neutrality(seed: int = 0, n_rays: int = 2000, n_prims: int = 2000) -> CheckResult:
    """Clipped and unclipped traces agree exactly."""
    asset = random_cloud(n_prims, seed=seed)
    bvh = scene_bvh(asset, RenderSettings().cutoff_s)
    rng = np.random.default_rng(seed + 7)
    origins = rng.uniform(-4, 4, size=(n_rays, 3))
    dirs = rng.normal(size=(n_rays, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    outs = []
    for clip in (True, False):
        out_t = np.empty((n_rays, 1))
        out_id = np.empty((n_rays, 1), np.int64)
        kernels.trace_batch(
            *_bvh_args(bvh), *_scene_args(asset), origins, dirs, 0.0, _TMAX,
            0, 8.0, clip, out_t, out_id,
        )
        outs.append((out_t.copy(), out_id.copy()))
    same = np.array_equal(outs[0][0], outs[1][0]) and np.array_equal(outs[0][1], outs[1][1])
    hits = int(np.sum(outs[0][1] >= 0))
    return CheckResult(
        "early termination does not change results",
        bool(same),
        f"{n_rays} rays ({hits} hits) identical with and without clipping",
    )


def check_determinism(seed: int = 0) -> CheckResult:
    """Repeated renders are bitwise identical."""
    asset = random_cloud(500, seed=seed)
    camera = front_camera()
    settings = RenderSettings(width=48, height=32, spp=16, seed=seed)
    a = render(asset, camera, settings)
    b = render(asset, camera, settings)
    same = np.array_equal(a.rgb, b.rgb) and np.array_equal(a.opacity, b.opacity)
    return CheckResult(
        "renders are bitwise reproducible",
        bool(same),
        "two identical renders compared elementwise",
    )


def run_all(seed: int = 0) -> list[CheckResult]:
    return [
        check_enumeration_identity(seed),
        check_unbiased_mean(seed),
        check_miss_rate(seed),
        check_bvh_equivalence(seed),
        check_hash_uniformity(seed),
        check_clipping_neutrality(seed),
        check_determinism(seed),
    ]
