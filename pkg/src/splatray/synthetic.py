"""Synthetic assets for tests, validation checks, and benchmarks.

The "pancake" scenes stack primitives that are enormous laterally and thin
along the view axis. On-axis rays then see alphas that are independent of the
lateral hit position to near machine precision, which makes exact statistical
expectations trivial to state.
"""

from __future__ import annotations

import numpy as np

from .assets import SplatAsset
from .config import CameraConfig
from .gaussians import solid_sh

_IDENTITY_Q = np.array([1.0, 0.0, 0.0, 0.0])


def pancake_stack(
    alphas,
    colors,
    z0: float = 2.0,
    spacing: float = 1.0,
    lateral: float = 1e6,
    thickness: float = 0.05,
) -> SplatAsset:
    """Layers perpendicular to +z at z0, z0 + spacing, ...; alpha[i] on axis.

    Rays parallel to +z hitting anywhere within a few thousand units of the
    axis see per-layer alphas equal to the requested values to ~1e-12.
    """
    alphas = np.atleast_1d(np.asarray(alphas, dtype=np.float64))
    colors = np.asarray(colors, dtype=np.float64).reshape(len(alphas), 3)
    n = alphas.shape[0]
    means = np.zeros((n, 3))
    means[:, 2] = z0 + spacing * np.arange(n)
    return SplatAsset(
        means=means,
        rotations=np.tile(_IDENTITY_Q, (n, 1)),
        scales=np.tile([lateral, lateral, thickness], (n, 1)),
        opacities=alphas.copy(),
        sh=np.stack([solid_sh(c) for c in colors]),
    )


def two_layer_scene() -> SplatAsset:
    """A red and a blue layer, both alpha 0.5, red in front.

    On a black background the exact expected radiance of the single-hit
    estimator along +z is (0.5, 0, 0.25) with opacity 0.75.
    """
    return pancake_stack([0.5, 0.5], [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


def random_cloud(
    n: int,
    seed: int = 0,
    extent: float = 4.0,
    scale_range: tuple[float, float] = (0.02, 0.25),
    opacity_range: tuple[float, float] = (0.1, 0.95),
    sh_degree: int = 0,
) -> SplatAsset:
    """n random anisotropic primitives in a centered box of the given extent."""
    rng = np.random.default_rng(seed)
    means = rng.uniform(-extent / 2, extent / 2, size=(n, 3))
    q = rng.normal(size=(n, 4))
    scales = np.exp(rng.uniform(np.log(scale_range[0]), np.log(scale_range[1]), size=(n, 3)))
    opac = rng.uniform(*opacity_range, size=n)
    bands = (sh_degree + 1) ** 2
    sh = np.zeros((n, 3, bands))
    sh[:, :, 0] = (rng.uniform(0.05, 0.95, size=(n, 3)) - 0.5) / 0.28209479177387814
    if bands > 1:
        sh[:, :, 1:] = rng.normal(scale=0.12, size=(n, 3, bands - 1))
    return SplatAsset(means=means, rotations=q, scales=scales, opacities=opac, sh=sh)


def anisotropic_sheets(n: int, seed: int = 0, extent: float = 3.0) -> SplatAsset:
    """Stretched, tilted primitives; peak and center depths disagree strongly.

    Mimics the geometry rasterizer-trained assets settle into: flat sheets
    oriented every which way, where ordering by center depth and ordering by
    per-ray peak depth frequently differ.
    """
    rng = np.random.default_rng(seed)
    means = rng.uniform(-extent / 2, extent / 2, size=(n, 3))
    q = rng.normal(size=(n, 4))
    base = np.exp(rng.uniform(np.log(0.05), np.log(0.4), size=(n, 1)))
    aspect = rng.uniform(8.0, 30.0, size=(n, 1))
    scales = np.concatenate([base * aspect, base * aspect, base], axis=1)
    opac = rng.uniform(0.2, 0.9, size=n)
    sh = np.zeros((n, 3, 1))
    sh[:, :, 0] = (rng.uniform(0.05, 0.95, size=(n, 3)) - 0.5) / 0.28209479177387814
    return SplatAsset(means=means, rotations=q, scales=scales, opacities=opac, sh=sh)


def front_camera(distance: float = 6.0, fov_deg: float = 45.0) -> CameraConfig:
    """Camera on -z looking at the origin."""
    return CameraConfig(position=np.array([0.0, 0.0, -distance]), fov_deg=fov_deg)
