"""Anisotropic 3D Gaussian primitives and the per-primitive math a ray tracer needs.

A primitive is an unnormalized Gaussian density

    G(x) = exp(-0.5 * (x - mu)^T Sigma^-1 (x - mu))

with covariance factored as Sigma = R S^2 R^T, where R is the rotation matrix of
a unit quaternion and S = diag(scale). The response of a primitive to a ray is a
1D Gaussian in the ray parameter t; its peak value scaled by the primitive's
base opacity is the alpha used for compositing and for stochastic acceptance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Mahalanobis radius beyond which a primitive's response is treated as zero.
# exp(-0.5 * 8) ~ 0.018, i.e. everything below ~2% of the peak is ignored.
DEFAULT_CUTOFF = 2.0 * math.sqrt(2.0)

# Real spherical harmonics constants, degrees 0..3, in the usual splat-asset
# evaluation order.
SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)

_FINITE_MAX = float(np.finfo(np.float64).max)


class DegenerateCovarianceError(ValueError):
    """Raised when a covariance cannot support the ray response computation."""


@dataclass
class Aabb:
    """Axis-aligned box given by two corners, lo <= hi componentwise."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=np.float64).reshape(3)
        self.hi = np.asarray(self.hi, dtype=np.float64).reshape(3)
        if not (np.isfinite(self.lo).all() and np.isfinite(self.hi).all()):
            raise ValueError("Aabb corners must be finite")
        if np.any(self.lo > self.hi):
            raise ValueError(f"Aabb has lo > hi: {self.lo} vs {self.hi}")

    def union(self, other: "Aabb") -> "Aabb":
        return Aabb(np.minimum(self.lo, other.lo), np.maximum(self.hi, other.hi))

    def contains(self, point) -> bool:
        p = np.asarray(point, dtype=np.float64)
        return bool(np.all(p >= self.lo) and np.all(p <= self.hi))


@dataclass
class Ray:
    """Ray origin + direction with an active parameter interval (t_min, t_max).

    The interval is open: responses at exactly t_min or t_max do not count.
    t_max defaults to the largest finite float64, the stand-in for "unbounded".
    Direction need not be unit length; all depth values are in units of it.
    """

    origin: np.ndarray
    direction: np.ndarray
    t_min: float = 0.0
    t_max: float = _FINITE_MAX

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.direction = np.asarray(self.direction, dtype=np.float64).reshape(3)
        self.t_min = float(self.t_min)
        self.t_max = float(self.t_max)
        if not np.isfinite(self.origin).all():
            raise ValueError("ray origin must be finite")
        if not np.isfinite(self.direction).all() or not np.any(self.direction != 0.0):
            raise ValueError("ray direction must be finite and nonzero")
        if not (np.isfinite(self.t_min) and np.isfinite(self.t_max)):
            raise ValueError("ray interval must be finite")
        if self.t_max < self.t_min:
            raise ValueError(f"ray has t_max < t_min: {self.t_max} < {self.t_min}")


@dataclass
class Gaussian3D:
    """One splat primitive.

    rotation is a quaternion in (w, x, y, z) order; it is normalized on
    construction. scale holds the three positive standard deviations along the
    primitive's local axes. sh_coeffs is a (3, K) array of spherical harmonics
    coefficients per color channel with K in {1, 4, 9, 16}.
    """

    mean: np.ndarray
    rotation: np.ndarray
    scale: np.ndarray
    base_opacity: float
    sh_coeffs: np.ndarray = field(default_factory=lambda: np.zeros((3, 1)))

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(3)
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(4)
        self.scale = np.asarray(self.scale, dtype=np.float64).reshape(3)
        self.base_opacity = float(self.base_opacity)
        self.sh_coeffs = np.asarray(self.sh_coeffs, dtype=np.float64)
        if not np.isfinite(self.mean).all():
            raise ValueError("mean must be finite")
        norm = float(np.linalg.norm(self.rotation))
        if not np.isfinite(norm) or norm < 1e-12:
            raise ValueError("rotation quaternion must have nonzero norm")
        self.rotation = self.rotation / norm
        if not np.isfinite(self.scale).all() or np.any(self.scale <= 0.0):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")
        if not (0.0 <= self.base_opacity <= 1.0):
            raise ValueError(f"base_opacity must lie in [0, 1], got {self.base_opacity}")
        if self.sh_coeffs.ndim != 2 or self.sh_coeffs.shape[0] != 3:
            raise ValueError("sh_coeffs must have shape (3, K)")
        if self.sh_coeffs.shape[1] not in (1, 4, 9, 16):
            raise ValueError(f"unsupported SH band count {self.sh_coeffs.shape[1]}")

    @property
    def sh_degree(self) -> int:
        return {1: 0, 4: 1, 9: 2, 16: 3}[self.sh_coeffs.shape[1]]


@dataclass
class IntersectionCandidate:
    """A primitive's response along a specific ray: depth, alpha, hit position."""

    prim_id: int
    t: float
    alpha: float
    position: np.ndarray

    def __post_init__(self):
        self.prim_id = int(self.prim_id)
        self.t = float(self.t)
        self.alpha = float(self.alpha)
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        if not math.isfinite(self.t):
            raise ValueError("candidate depth must be finite")
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError(f"candidate alpha must lie in [0, 1], got {self.alpha}")


def rotation_matrix(quaternion) -> np.ndarray:
    """3x3 rotation matrix of a unit quaternion (w, x, y, z), local to world."""
    q = np.asarray(quaternion, dtype=np.float64).reshape(4)
    w, x, y, z = q
    return np.array(
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    )


def covariance(g: Gaussian3D) -> np.ndarray:
    """World-space covariance R S^2 R^T. Symmetric positive definite."""
    r = rotation_matrix(g.rotation)
    return (r * (g.scale**2)) @ r.T


def covariance_inverse(g: Gaussian3D) -> np.ndarray:
    """Inverse covariance, raising DegenerateCovarianceError when unusable."""
    try:
        inv = np.linalg.inv(covariance(g))
    except np.linalg.LinAlgError as exc:
        raise DegenerateCovarianceError(f"covariance is singular: {exc}") from exc
    if not np.isfinite(inv).all():
        raise DegenerateCovarianceError("covariance inverse is not finite")
    return inv


def compute_aabb(g: Gaussian3D, s: float = DEFAULT_CUTOFF) -> Aabb:
    """Tight axis-aligned box around the level set at Mahalanobis radius s.

    The level set is the ellipsoid ||S^-1 R^T (x - mu)|| = s, i.e. the rotated
    box with half extents s * scale. The box is the componentwise min/max of
    its eight rotated corners.
    """
    if s <= 0.0:
        raise ValueError(f"cutoff radius must be positive, got {s}")
    r = rotation_matrix(g.rotation)
    half = s * g.scale
    signs = np.array(
        [[sx, sy, sz] for sx in (-1.0, 1.0) for sy in (-1.0, 1.0) for sz in (-1.0, 1.0)]
    )
    corners = (signs * half) @ r.T
    return Aabb(g.mean + corners.min(axis=0), g.mean + corners.max(axis=0))


def ray_peak_1d(g: Gaussian3D, ray: Ray) -> tuple[float, float]:
    """Depth and alpha of the peak response of a primitive along a ray.

    Substituting x = o + t d into the exponent gives a quadratic in t; the
    minimizer is

        t_peak = -(d^T A v) / (d^T A d),   A = Sigma^-1,  v = o - mu,

    and the value there, v^T A v - (d^T A v)^2 / (d^T A d), is the squared
    Mahalanobis distance from the ray line to the Gaussian center. Returns
    (t_peak, alpha) with alpha = base_opacity * G(o + t_peak d) <= base_opacity.
    """
    a = covariance_inverse(g)
    v = ray.origin - g.mean
    d = ray.direction
    av = a @ v
    d_a_d = float(d @ (a @ d))
    if not math.isfinite(d_a_d) or d_a_d <= 0.0:
        raise DegenerateCovarianceError(f"ray response quadratic has d^T A d = {d_a_d}")
    d_a_v = float(d @ av)
    v_a_v = float(v @ av)
    t_peak = -d_a_v / d_a_d
    residual = v_a_v - d_a_v * d_a_v / d_a_d
    if residual < 0.0:
        residual = 0.0  # mathematically >= 0; guard roundoff
    alpha = g.base_opacity * math.exp(-0.5 * residual)
    return t_peak, alpha


def is_negligible(g: Gaussian3D, position, s: float = DEFAULT_CUTOFF) -> bool:
    """True when a position lies outside the Mahalanobis-radius-s ellipsoid.

    Equivalent to (x - mu)^T Sigma^-1 (x - mu) > s^2, so the set of
    non-negligible positions is exactly the ellipsoid the AABB bounds.
    """
    if s <= 0.0:
        raise ValueError(f"cutoff radius must be positive, got {s}")
    a = covariance_inverse(g)
    v = np.asarray(position, dtype=np.float64).reshape(3) - g.mean
    return float(v @ (a @ v)) > s * s


def depth_center(g: Gaussian3D, ray: Ray) -> float:
    """Depth of the primitive center projected onto the ray: dot(mu - o, d).

    An alternative depth convention to the 1D peak. It matches how
    rasterizers order splats (by center depth along the view axis) and is
    independent of the ray's lateral offset. With a non-unit direction the
    value is scaled by |d|^2, consistent with t in units of the direction
    only for unit d; callers use unit directions.
    """
    return float((g.mean - ray.origin) @ ray.direction)


def eval_color(g: Gaussian3D, view_dir) -> np.ndarray:
    """RGB color of a primitive seen from direction view_dir (unit, toward it).

    Standard real-SH evaluation up to the primitive's degree, plus the 0.5
    offset convention used by splat assets, clamped to be nonnegative.
    """
    d = np.asarray(view_dir, dtype=np.float64).reshape(3)
    n = float(np.linalg.norm(d))
    if not math.isfinite(n) or n == 0.0:
        raise ValueError("view direction must be finite and nonzero")
    x, y, z = d / n
    sh = g.sh_coeffs
    color = SH_C0 * sh[:, 0]
    if sh.shape[1] > 1:
        color = color - SH_C1 * y * sh[:, 1] + SH_C1 * z * sh[:, 2] - SH_C1 * x * sh[:, 3]
    if sh.shape[1] > 4:
        xx, yy, zz = x * x, y * y, z * z
        xy, yz, xz = x * y, y * z, x * z
        color = (
            color
            + SH_C2[0] * xy * sh[:, 4]
            + SH_C2[1] * yz * sh[:, 5]
            + SH_C2[2] * (2.0 * zz - xx - yy) * sh[:, 6]
            + SH_C2[3] * xz * sh[:, 7]
            + SH_C2[4] * (xx - yy) * sh[:, 8]
        )
    if sh.shape[1] > 9:
        color = (
            color
            + SH_C3[0] * y * (3.0 * xx - yy) * sh[:, 9]
            + SH_C3[1] * xy * z * sh[:, 10]
            + SH_C3[2] * y * (4.0 * zz - xx - yy) * sh[:, 11]
            + SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy) * sh[:, 12]
            + SH_C3[4] * x * (4.0 * zz - xx - yy) * sh[:, 13]
            + SH_C3[5] * z * (xx - yy) * sh[:, 14]
            + SH_C3[6] * x * (xx - 3.0 * yy) * sh[:, 15]
        )
    return np.maximum(color + 0.5, 0.0)


def solid_sh(rgb) -> np.ndarray:
    """Degree-0 SH coefficients that evaluate to the given RGB from any view."""
    c = np.asarray(rgb, dtype=np.float64).reshape(3)
    return ((c - 0.5) / SH_C0).reshape(3, 1)
