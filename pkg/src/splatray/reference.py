"""Exact reference evaluators the stochastic tracer is checked against.

Everything here is deliberately brute force: candidates come from evaluating
every primitive against the ray (no acceleration structure), compositing
follows the sorted front-to-back recurrence, and expected values come from
enumerating all 2^M acceptance outcomes of a candidate list.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .assets import SplatAsset
from .gaussians import DEFAULT_CUTOFF, Gaussian3D, IntersectionCandidate, Ray

ENUMERATION_LIMIT = 20


def candidate_fields(
    asset: SplatAsset,
    origin: np.ndarray,
    direction: np.ndarray,
    depth_mode: str = "mean",
    s: float = DEFAULT_CUTOFF,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-primitive (valid, t, alpha) arrays for one ray, all primitives.

    valid is True where the depth is finite and the response position lies
    inside the Mahalanobis-radius-s ellipsoid; the (t_min, t_max) range check
    is applied by the caller. The same math backs collect_candidates and the
    brute-force cross-checks, so both always agree bit for bit.
    """
    if depth_mode not in ("mean", "center"):
        raise ValueError(f"unknown depth mode {depth_mode!r}")
    pack = asset.packed
    o = np.asarray(origin, dtype=np.float64).reshape(3)
    d = np.asarray(direction, dtype=np.float64).reshape(3)
    a = pack.cov_inv  # (n, 3, 3)
    v = o - pack.means  # (n, 3)
    av = np.einsum("nij,nj->ni", a, v)
    ad = np.einsum("nij,j->ni", a, d)
    d_a_d = ad @ d
    d_a_v = np.einsum("ni,i->n", av, d)
    v_a_v = np.einsum("ni,ni->n", av, v)
    ok = np.isfinite(d_a_d) & (d_a_d > 0.0)
    safe = np.where(ok, d_a_d, 1.0)
    residual = np.maximum(v_a_v - d_a_v * d_a_v / safe, 0.0)
    alpha = pack.opacities * np.exp(-0.5 * residual)
    if depth_mode == "mean":
        t = -d_a_v / safe
        mah = residual
    else:
        t = (pack.means - o) @ d
        h = (o - pack.means) + t[:, None] * d[None, :]
        mah = np.einsum("ni,nij,nj->n", h, a, h)
    valid = ok & np.isfinite(t) & (mah <= s * s)
    return valid, t, alpha


def collect_candidates(
    scene: SplatAsset | Sequence[Gaussian3D],
    ray: Ray,
    depth_mode: str = "mean",
    s: float = DEFAULT_CUTOFF,
) -> list[IntersectionCandidate]:
    """All non-negligible candidates along a ray, sorted by (t, prim_id).

    A candidate qualifies when its depth lies strictly inside
    (ray.t_min, ray.t_max) and its position is inside the cutoff ellipsoid.
    """
    if not isinstance(scene, SplatAsset):
        scene = SplatAsset.from_gaussians(scene)
    valid, t, alpha = candidate_fields(scene, ray.origin, ray.direction, depth_mode, s)
    valid = valid & (t > ray.t_min) & (t < ray.t_max)
    ids = np.nonzero(valid)[0]
    order = np.lexsort((ids, t[ids]))
    out = []
    for i in ids[order]:
        pos = ray.origin + t[i] * ray.direction
        out.append(IntersectionCandidate(int(i), float(t[i]), float(alpha[i]), pos))
    return out


def _check_sorted(candidates: Sequence[IntersectionCandidate]) -> np.ndarray:
    alphas = np.array([c.alpha for c in candidates], dtype=np.float64)
    ts = [c.t for c in candidates]
    if any(b < a for a, b in zip(ts, ts[1:])):
        raise ValueError("candidates must be sorted by depth")
    return alphas


def composite_sorted(
    candidates: Sequence[IntersectionCandidate],
    colors: np.ndarray,
    background,
) -> tuple[np.ndarray, float]:
    """Front-to-back alpha compositing of depth-sorted candidates.

    Returns (radiance, opacity) where radiance includes the background term
    weighted by the transmittance left after all candidates:

        L = sum_i T_i alpha_i c_i + T_end bg,   T_i = prod_{j<i} (1 - alpha_j).
    """
    alphas = _check_sorted(candidates)
    colors = np.asarray(colors, dtype=np.float64).reshape(len(candidates), 3)
    bg = np.asarray(background, dtype=np.float64).reshape(3)
    radiance = np.zeros(3)
    transmittance = 1.0
    for alpha, color in zip(alphas, colors):
        radiance += transmittance * alpha * color
        transmittance *= 1.0 - alpha
    radiance += transmittance * bg
    return radiance, 1.0 - transmittance


def enumerate_expectation(
    candidates: Sequence[IntersectionCandidate],
    colors: np.ndarray,
    background,
) -> tuple[np.ndarray, float]:
    """Expected stochastic radiance by enumerating all 2^M acceptance outcomes.

    Each candidate is independently accepted with probability alpha_i; a run
    shades the closest accepted candidate (or the background when none is
    accepted). The expectation sums shade(outcome) * P(outcome) over every
    outcome explicitly, with no compositing shortcut, which is what makes it
    an independent check of composite_sorted. Refuses M > 20.
    """
    m = len(candidates)
    if m > ENUMERATION_LIMIT:
        raise ValueError(f"enumeration over {m} candidates exceeds limit {ENUMERATION_LIMIT}")
    alphas = _check_sorted(candidates)
    colors = np.asarray(colors, dtype=np.float64).reshape(m, 3)
    bg = np.asarray(background, dtype=np.float64).reshape(3)
    if m == 0:
        return bg.copy(), 0.0
    outcomes = np.arange(1 << m, dtype=np.uint64)
    # bits[o, i] == 1 when outcome o accepts candidate i.
    bits = (outcomes[:, None] >> np.arange(m, dtype=np.uint64)[None, :]) & np.uint64(1)
    accepted = bits.astype(bool)
    probs = np.where(accepted, alphas[None, :], 1.0 - alphas[None, :]).prod(axis=1)
    any_hit = accepted.any(axis=1)
    first = np.argmax(accepted, axis=1)
    shade = np.where(any_hit[:, None], colors[first], bg[None, :])
    radiance = (probs[:, None] * shade).sum(axis=0)
    opacity = float(probs[any_hit].sum())
    return radiance, opacity


def transmittance_product(candidates: Sequence[IntersectionCandidate]) -> float:
    """Product of (1 - alpha) over candidates; order independent."""
    result = 1.0
    for c in candidates:
        result *= 1.0 - c.alpha
    return result


def exact_pixel(
    asset: SplatAsset,
    ray: Ray,
    colors_for,
    background,
    depth_mode: str = "mean",
    s: float = DEFAULT_CUTOFF,
) -> tuple[np.ndarray, float]:
    """Exact composited radiance and opacity for one ray.

    colors_for maps a list of candidates to an (M, 3) color array; typically
    view-dependent SH evaluation of the hit primitives.
    """
    cands = collect_candidates(asset, ray, depth_mode, s)
    colors = colors_for(cands)
    return composite_sorted(cands, colors, background)
