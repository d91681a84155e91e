"""splatray: unbiased stochastic ray tracing of 3D Gaussian splat clouds on CPU.

Instead of sorting the semi-transparent primitives along each ray, the tracer
accepts at most one of them per walk with probability equal to its alpha and
shades only that survivor. Averaged over samples this reproduces exact sorted
alpha compositing, so the renderer is a Monte Carlo estimator whose reference
answer ships alongside it (``reference_mode`` / the ``--reference`` flag).
"""

from .assets import EmptyAssetError, PlyFormatError, SplatAsset, load_ply, save_ply
from .bvh import Bvh, build, traverse
from .config import (
    CameraConfig,
    ConfigError,
    RenderSettings,
    load_scene_config,
)
from .gaussians import (
    DEFAULT_CUTOFF,
    Aabb,
    DegenerateCovarianceError,
    Gaussian3D,
    IntersectionCandidate,
    Ray,
    compute_aabb,
    covariance,
    depth_center,
    eval_color,
    is_negligible,
    ray_peak_1d,
)
from .reference import collect_candidates, composite_sorted, enumerate_expectation
from .render import (
    AccumBuffer,
    generate_camera_ray,
    image_metrics,
    read_pfm,
    render,
    scene_bvh,
    write_image,
)
from .sampling import HashCoefficients, hash_position, hash_scalar, pixel_jitter
from .tracer import (
    HitRecord,
    MultiSampleState,
    biased_depth_trace,
    intersect_primitive,
    shade_ray,
    trace_multi,
    trace_single,
    transmittance,
)

__version__ = "0.1.0"

__all__ = [
    "Aabb",
    "AccumBuffer",
    "Bvh",
    "CameraConfig",
    "ConfigError",
    "DEFAULT_CUTOFF",
    "DegenerateCovarianceError",
    "EmptyAssetError",
    "Gaussian3D",
    "HashCoefficients",
    "HitRecord",
    "IntersectionCandidate",
    "MultiSampleState",
    "PlyFormatError",
    "Ray",
    "RenderSettings",
    "SplatAsset",
    "biased_depth_trace",
    "build",
    "collect_candidates",
    "composite_sorted",
    "compute_aabb",
    "covariance",
    "depth_center",
    "enumerate_expectation",
    "eval_color",
    "generate_camera_ray",
    "hash_position",
    "hash_scalar",
    "image_metrics",
    "intersect_primitive",
    "is_negligible",
    "load_ply",
    "load_scene_config",
    "pixel_jitter",
    "ray_peak_1d",
    "read_pfm",
    "render",
    "save_ply",
    "scene_bvh",
    "shade_ray",
    "trace_multi",
    "trace_single",
    "transmittance",
    "traverse",
    "write_image",
]
