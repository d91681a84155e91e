"""Camera rays, full-frame rendering, image metrics, and image output.

The renderer shoots ceil(spp / multisample) jittered primary rays per pixel,
draws `multisample` stochastic samples from each BVH walk, and averages the
shaded results. Pixels are mutually independent and each one consumes a
deterministic jitter/hash stream, so output images are bitwise reproducible
for a given (asset, camera, settings) regardless of thread count.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np
from PIL import Image

from . import bvh as bvh_mod
from . import kernels
from .assets import SplatAsset
from .config import CameraConfig, RenderSettings
from .gaussians import Ray
from .sampling import pixel_jitter

_TMAX = float(np.finfo(np.float64).max)


@dataclass
class AccumBuffer:
    """Resolved framebuffer: per-pixel mean radiance, mean opacity, and the
    per-pixel sample count that produced them."""

    rgb: np.ndarray
    opacity: np.ndarray
    spp: int

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb, dtype=np.float64)
        self.opacity = np.asarray(self.opacity, dtype=np.float64)
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3 or self.rgb.shape[:2] != self.opacity.shape:
            raise ValueError("AccumBuffer shapes disagree")
        self.spp = int(self.spp)
        if self.spp < 1:
            raise ValueError("sample count must be positive")

    @property
    def width(self) -> int:
        return int(self.rgb.shape[1])

    @property
    def height(self) -> int:
        return int(self.rgb.shape[0])


def camera_basis(camera: CameraConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Orthonormal (forward, right, up) of a look-at camera."""
    fwd = camera.look_at - camera.position
    fwd = fwd / np.linalg.norm(fwd)
    right = np.cross(fwd, camera.up)
    n = np.linalg.norm(right)
    if n < 1e-12:
        raise ValueError("camera up vector is parallel to the view direction")
    right = right / n
    up = np.cross(right, fwd)
    return fwd, right, up


def generate_camera_ray(
    camera: CameraConfig,
    settings: RenderSettings,
    pixel,
    frame: int,
) -> Ray:
    """Primary ray through a jittered position inside the given pixel.

    The jitter comes from the pixel's scrambled low-discrepancy sequence at
    the given frame index, so ray streams are deterministic per
    (pixel, frame, settings.seed).
    """
    fwd, right, up = camera_basis(camera)
    jx, jy = pixel_jitter(pixel, frame, settings.seed)
    px, py = int(pixel[0]), int(pixel[1])
    if not (0 <= px < settings.width and 0 <= py < settings.height):
        raise ValueError(f"pixel {pixel} outside {settings.width}x{settings.height}")
    half_h = math.tan(math.radians(camera.fov_deg) / 2.0)
    half_w = half_h * (settings.width / settings.height)
    u = 2.0 * (px + jx) / settings.width - 1.0
    v = 1.0 - 2.0 * (py + jy) / settings.height
    d = fwd + u * half_w * right + v * half_h * up
    d = d / np.linalg.norm(d)
    return Ray(origin=camera.position.copy(), direction=d)


def scene_bvh(asset: SplatAsset, s: float) -> bvh_mod.Bvh:
    """BVH over the asset's cutoff-ellipsoid AABBs."""
    lo, hi = asset.aabb_arrays(s)
    return bvh_mod.build((lo, hi))


def _bvh_args(b: bvh_mod.Bvh) -> tuple:
    return (
        b.node_lo, b.node_hi, b.node_left, b.node_right, b.node_count,
        b.prim_order, b.prim_lo, b.prim_hi,
    )


def _scene_args(asset: SplatAsset) -> tuple:
    pack = asset.packed
    return pack.means, pack.cov_inv6, pack.opacities


def set_threads(threads: int | None) -> int:
    """Clamp and apply a worker-thread request; returns the effective count."""
    if threads is None:
        return numba.get_num_threads()
    limit = numba.config.NUMBA_NUM_THREADS
    effective = max(1, min(int(threads), limit))
    numba.set_num_threads(effective)
    return effective


def render(
    asset: SplatAsset,
    camera: CameraConfig,
    settings: RenderSettings,
    bvh: bvh_mod.Bvh | None = None,
    threads: int | None = None,
) -> AccumBuffer:
    """Render a frame; stochastic by default, exact when reference_mode is set.

    The reference path composites every primitive along every ray in sorted
    order (no acceleration structure, no randomness beyond the shared pixel
    jitter), averaged over the same ceil(spp / multisample) jittered rays the
    stochastic path uses.
    """
    set_threads(threads)
    pack = asset.packed
    fwd, right, up = camera_basis(camera)
    half_h = math.tan(math.radians(camera.fov_deg) / 2.0)
    half_w = half_h * (settings.width / settings.height)
    cam = (
        float(camera.position[0]), float(camera.position[1]), float(camera.position[2]),
        float(right[0]), float(right[1]), float(right[2]),
        float(up[0]), float(up[1]), float(up[2]),
        float(fwd[0]), float(fwd[1]), float(fwd[2]),
        half_w, half_h,
    )
    rgb = np.zeros((settings.height, settings.width, 3))
    op = np.zeros((settings.height, settings.width))
    mode = 0 if settings.depth_mode == "mean" else 1
    s2 = settings.cutoff_s * settings.cutoff_s
    bg = settings.background
    if settings.reference_mode:
        kernels.render_exact(
            pack.means, pack.cov_inv6, pack.opacities, pack.sh, pack.sh_degree,
            *cam,
            settings.width, settings.height, settings.passes, mode, s2, settings.seed,
            bg[0], bg[1], bg[2], rgb, op,
        )
        return AccumBuffer(rgb, op, settings.passes)
    if bvh is None:
        bvh = scene_bvh(asset, settings.cutoff_s)
    kernels.render_stochastic(
        *_bvh_args(bvh),
        pack.means, pack.cov_inv6, pack.opacities, pack.sh, pack.sh_degree,
        *cam,
        settings.width, settings.height, settings.passes, settings.multisample,
        mode, s2, True, settings.seed,
        bg[0], bg[1], bg[2], rgb, op,
    )
    return AccumBuffer(rgb, op, settings.samples_per_pixel)


def image_metrics(image: AccumBuffer, reference: AccumBuffer) -> dict:
    """MSE / PSNR of an image against a reference, plus mean opacity error.

    PSNR uses peak = max(1, reference max) so LDR scenes get the familiar
    scale and HDR references stay meaningful.
    """
    if image.rgb.shape != reference.rgb.shape:
        raise ValueError(
            f"image shapes disagree: {image.rgb.shape} vs {reference.rgb.shape}"
        )
    diff = image.rgb - reference.rgb
    mse = float(np.mean(diff * diff))
    peak = max(1.0, float(reference.rgb.max()))
    psnr = math.inf if mse == 0.0 else 10.0 * math.log10(peak * peak / mse)
    return {
        "mse": mse,
        "psnr": psnr,
        "mean_abs_opacity_error": float(np.mean(np.abs(image.opacity - reference.opacity))),
    }


def _srgb_encode(linear: np.ndarray) -> np.ndarray:
    c = np.clip(linear, 0.0, 1.0)
    return np.where(c <= 0.0031308, 12.92 * c, 1.055 * np.power(c, 1.0 / 2.4) - 0.055)


def write_image(buffer: AccumBuffer, path, fmt: str | None = None) -> None:
    """Write a render to disk.

    png: 8-bit RGBA, radiance sRGB-encoded, opacity as linear alpha.
    pfm: 32-bit float RGB, linear light, bottom-up little-endian rows; the
    lossless interchange format, reread bit for bit by read_pfm.
    """
    path = Path(path)
    if fmt is None:
        fmt = path.suffix.lstrip(".").lower() or "png"
    fmt = fmt.lower()
    if fmt == "png":
        rgb8 = np.round(_srgb_encode(buffer.rgb) * 255.0).astype(np.uint8)
        a8 = np.round(np.clip(buffer.opacity, 0.0, 1.0) * 255.0).astype(np.uint8)
        rgba = np.dstack([rgb8, a8])
        Image.fromarray(rgba, mode="RGBA").save(path)
    elif fmt == "pfm":
        data = np.ascontiguousarray(buffer.rgb[::-1].astype("<f4"))
        with open(path, "wb") as f:
            f.write(b"PF\n")
            f.write(f"{buffer.width} {buffer.height}\n".encode("ascii"))
            f.write(b"-1.0\n")
            f.write(data.tobytes())
    else:
        raise ValueError(f"unknown image format {fmt!r} (expected png or pfm)")


def read_pfm(path) -> np.ndarray:
    """Read a color PFM written by write_image; returns float32 (h, w, 3)."""
    with open(path, "rb") as f:
        if f.readline().strip() != b"PF":
            raise ValueError("not a color PFM file")
        dims = f.readline().split()
        w, h = int(dims[0]), int(dims[1])
        scale = float(f.readline().strip())
        count = w * h * 3
        raw = f.read(count * 4)
        if len(raw) != count * 4:
            raise ValueError("truncated PFM payload")
        endian = "<" if scale < 0 else ">"
        data = np.array(struct.unpack(f"{endian}{count}f", raw), dtype=np.float32)
    return data.reshape(h, w, 3)[::-1].copy()
