"""Splat asset container and PLY ingestion.

Assets follow the common splat-viewer PLY layout: one float32 vertex element
with positions, log-space scales (``scale_0..2``), an unnormalized quaternion
(``rot_0..3``, scalar first), logit-space opacity, DC spherical harmonics
(``f_dc_0..2``) and optional higher-order coefficients (``f_rest_*``, stored
channel major). Loading applies the activations (exp, sigmoid, quaternion
normalization) so the in-memory arrays always satisfy the primitive
invariants.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .gaussians import Gaussian3D, rotation_matrix

# Scale components smaller than this fraction of the scene extent are clamped
# up, so a degenerate (flat or point-like) input cannot produce a singular
# covariance.
SCALE_FLOOR_FRACTION = 1e-8

_REST_COUNTS = {0: 0, 9: 1, 24: 2, 45: 3}  # f_rest property count -> SH degree

_PLY_DTYPES = {
    "float": np.float32,
    "float32": np.float32,
    "double": np.float64,
    "float64": np.float64,
    "uchar": np.uint8,
    "uint8": np.uint8,
    "char": np.int8,
    "int8": np.int8,
    "short": np.int16,
    "int16": np.int16,
    "ushort": np.uint16,
    "uint16": np.uint16,
    "int": np.int32,
    "int32": np.int32,
    "uint": np.uint32,
    "uint32": np.uint32,
}


class PlyFormatError(ValueError):
    """Raised when a PLY file cannot be interpreted as a splat asset."""


class EmptyAssetError(ValueError):
    """Raised when an asset contains no primitives."""


@dataclass
class SplatAsset:
    """Structure-of-arrays splat cloud.

    means (n, 3), rotations (n, 4) unit quaternions (w, x, y, z), scales
    (n, 3) positive, opacities (n,) in [0, 1], sh (n, 3, K) with K in
    {1, 4, 9, 16}.
    """

    means: np.ndarray
    rotations: np.ndarray
    scales: np.ndarray
    opacities: np.ndarray
    sh: np.ndarray
    source_path: str = ""

    def __post_init__(self):
        self.means = np.ascontiguousarray(self.means, dtype=np.float64)
        self.rotations = np.ascontiguousarray(self.rotations, dtype=np.float64)
        self.scales = np.ascontiguousarray(self.scales, dtype=np.float64)
        self.opacities = np.ascontiguousarray(self.opacities, dtype=np.float64)
        self.sh = np.ascontiguousarray(self.sh, dtype=np.float64)
        n = self.means.shape[0]
        if n == 0:
            raise EmptyAssetError("asset has no primitives")
        if self.means.shape != (n, 3) or self.rotations.shape != (n, 4) or self.scales.shape != (n, 3):
            raise ValueError("mismatched asset array shapes")
        if self.opacities.shape != (n,) or self.sh.ndim != 3 or self.sh.shape[:2] != (n, 3):
            raise ValueError("mismatched asset array shapes")
        if self.sh.shape[2] not in (1, 4, 9, 16):
            raise ValueError(f"unsupported SH band count {self.sh.shape[2]}")
        for name, arr in (("means", self.means), ("rotations", self.rotations),
                          ("scales", self.scales), ("opacities", self.opacities),
                          ("sh", self.sh)):
            if not np.isfinite(arr).all():
                raise ValueError(f"asset field {name} contains non-finite values")
        norms = np.linalg.norm(self.rotations, axis=1)
        if np.any(norms < 1e-12):
            raise ValueError("asset contains zero-norm rotation quaternions")
        self.rotations = self.rotations / norms[:, None]
        if np.any(self.scales <= 0.0):
            raise ValueError("asset scales must be positive")
        if np.any(self.opacities < 0.0) or np.any(self.opacities > 1.0):
            raise ValueError("asset opacities must lie in [0, 1]")

    def __len__(self) -> int:
        return int(self.means.shape[0])

    def __getitem__(self, i: int) -> Gaussian3D:
        if not -len(self) <= i < len(self):
            raise IndexError(i)
        return Gaussian3D(
            mean=self.means[i],
            rotation=self.rotations[i],
            scale=self.scales[i],
            base_opacity=float(self.opacities[i]),
            sh_coeffs=self.sh[i],
        )

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def sh_degree(self) -> int:
        return {1: 0, 4: 1, 9: 2, 16: 3}[self.sh.shape[2]]

    @classmethod
    def from_gaussians(cls, gaussians, source_path: str = "") -> "SplatAsset":
        gs = list(gaussians)
        if not gs:
            raise EmptyAssetError("asset has no primitives")
        bands = max(g.sh_coeffs.shape[1] for g in gs)
        sh = np.zeros((len(gs), 3, bands))
        for i, g in enumerate(gs):
            sh[i, :, : g.sh_coeffs.shape[1]] = g.sh_coeffs
        return cls(
            means=np.array([g.mean for g in gs]),
            rotations=np.array([g.rotation for g in gs]),
            scales=np.array([g.scale for g in gs]),
            opacities=np.array([g.base_opacity for g in gs]),
            sh=sh,
            source_path=source_path,
        )

    @cached_property
    def packed(self) -> "PackedScene":
        """Flat arrays (including inverse covariances) for the fast paths."""
        n = len(self)
        rot = np.empty((n, 3, 3))
        for i in range(n):
            rot[i] = rotation_matrix(self.rotations[i])
        cov = np.einsum("nij,nj,nkj->nik", rot, self.scales**2, rot)
        cov_inv = np.linalg.inv(cov)
        cov_inv = 0.5 * (cov_inv + np.transpose(cov_inv, (0, 2, 1)))
        if not np.isfinite(cov_inv).all():
            raise ValueError("asset contains singular covariances")
        cov_inv6 = np.stack(
            [
                cov_inv[:, 0, 0], cov_inv[:, 0, 1], cov_inv[:, 0, 2],
                cov_inv[:, 1, 1], cov_inv[:, 1, 2], cov_inv[:, 2, 2],
            ],
            axis=1,
        )
        return PackedScene(
            means=self.means,
            cov_inv=cov_inv,
            cov_inv6=np.ascontiguousarray(cov_inv6),
            opacities=self.opacities,
            sh=self.sh,
            sh_degree=self.sh_degree,
            rot=rot,
        )

    def aabb_arrays(self, s: float) -> tuple[np.ndarray, np.ndarray]:
        """Per-primitive AABB lo/hi arrays at Mahalanobis radius s."""
        if s <= 0.0:
            raise ValueError(f"cutoff radius must be positive, got {s}")
        rot = self.packed.rot
        half = s * self.scales
        signs = np.array(
            [[sx, sy, sz] for sx in (-1.0, 1.0) for sy in (-1.0, 1.0) for sz in (-1.0, 1.0)]
        )
        # (n, 8, 3) world-space corner offsets of each rotated box.
        corners = np.einsum("nij,knj->nki", rot, signs[:, None, :] * half[None, :, :])
        return self.means + corners.min(axis=1), self.means + corners.max(axis=1)


@dataclass
class PackedScene:
    means: np.ndarray
    cov_inv: np.ndarray
    cov_inv6: np.ndarray
    opacities: np.ndarray
    sh: np.ndarray
    sh_degree: int
    rot: np.ndarray


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _logit(p: np.ndarray) -> np.ndarray:
    q = np.clip(p, 1e-12, 1.0 - 1e-12)
    return np.log(q / (1.0 - q))


def _parse_header(stream) -> tuple[str, int, list[tuple[str, np.dtype]]]:
    line = stream.readline()
    if line.strip() != b"ply":
        raise PlyFormatError("missing 'ply' magic")
    fmt = None
    props: list[tuple[str, np.dtype]] = []
    count = None
    in_vertex = False
    while True:
        raw = stream.readline()
        if not raw:
            raise PlyFormatError("unterminated header")
        line = raw.decode("ascii", errors="replace").strip()
        if not line or line.startswith("comment") or line.startswith("obj_info"):
            continue
        if line == "end_header":
            break
        fields = line.split()
        if fields[0] == "format":
            if len(fields) < 2 or fields[1] not in ("ascii", "binary_little_endian"):
                raise PlyFormatError(f"unsupported format: {line}")
            fmt = fields[1]
        elif fields[0] == "element":
            if fields[1] == "vertex":
                if count is not None:
                    raise PlyFormatError("multiple vertex elements")
                count = int(fields[2])
                in_vertex = True
            else:
                if count is None:
                    raise PlyFormatError("vertex element must come first")
                in_vertex = False
        elif fields[0] == "property":
            if not in_vertex:
                continue
            if fields[1] == "list":
                raise PlyFormatError("list properties are not supported")
            if fields[1] not in _PLY_DTYPES:
                raise PlyFormatError(f"unsupported property type {fields[1]}")
            props.append((fields[2], np.dtype(_PLY_DTYPES[fields[1]]).newbyteorder("<")))
    if fmt is None or count is None:
        raise PlyFormatError("header lacks format or vertex element")
    return fmt, count, props


def load_ply(path) -> SplatAsset:
    """Load a splat PLY file, applying the standard activations.

    Raises PlyFormatError for malformed or unsupported files and
    EmptyAssetError when the vertex element is empty.
    """
    path = Path(path)
    with open(path, "rb") as f:
        fmt, count, props = _parse_header(f)
        if count == 0:
            raise EmptyAssetError(f"{path} has an empty vertex element")
        names = [name for name, _ in props]
        if len(set(names)) != len(names):
            raise PlyFormatError("duplicate vertex properties")
        dtype = np.dtype([(name, dt) for name, dt in props])
        if fmt == "binary_little_endian":
            data = np.fromfile(f, dtype=dtype, count=count)
            if data.shape[0] != count:
                raise PlyFormatError(f"expected {count} vertices, file ended early")
        else:
            text = f.read().decode("ascii", errors="replace")
            rows = text.split()
            need = count * len(props)
            if len(rows) < need:
                raise PlyFormatError(f"expected {need} ascii values, got {len(rows)}")
            flat = np.array(rows[:need], dtype=np.float64).reshape(count, len(props))
            data = np.zeros(count, dtype=dtype)
            for j, name in enumerate(names):
                data[name] = flat[:, j]

    def column(name: str) -> np.ndarray:
        if name not in names:
            raise PlyFormatError(f"missing vertex property {name!r}")
        return np.asarray(data[name], dtype=np.float64)

    means = np.stack([column("x"), column("y"), column("z")], axis=1)
    scales = np.exp(np.stack([column(f"scale_{i}") for i in range(3)], axis=1))
    rots = np.stack([column(f"rot_{i}") for i in range(4)], axis=1)
    opac = _sigmoid(column("opacity"))

    rest_names = sorted(
        (n for n in names if re.fullmatch(r"f_rest_\d+", n)),
        key=lambda n: int(n.rsplit("_", 1)[1]),
    )
    if len(rest_names) not in _REST_COUNTS:
        raise PlyFormatError(
            f"unsupported f_rest count {len(rest_names)} (expected one of {sorted(_REST_COUNTS)})"
        )
    degree = _REST_COUNTS[len(rest_names)]
    bands = (degree + 1) ** 2
    sh = np.zeros((count, 3, bands))
    for ch in range(3):
        sh[:, ch, 0] = column(f"f_dc_{ch}")
    if degree > 0:
        rest = np.stack([column(n) for n in rest_names], axis=1)  # (count, 3*(bands-1))
        sh[:, :, 1:] = rest.reshape(count, 3, bands - 1)  # channel-major layout

    norms = np.linalg.norm(rots, axis=1)
    bad = np.where(norms < 1e-12)[0]
    if bad.size:
        raise PlyFormatError(f"zero-norm rotation at vertex {int(bad[0])}")
    rots = rots / norms[:, None]

    if not np.isfinite(means).all():
        raise PlyFormatError("non-finite position values")
    extent = float(np.linalg.norm(means.max(axis=0) - means.min(axis=0)))
    if extent == 0.0:
        extent = 1.0
    scales = np.maximum(scales, SCALE_FLOOR_FRACTION * extent)

    return SplatAsset(
        means=means,
        rotations=rots,
        scales=scales,
        opacities=opac,
        sh=sh,
        source_path=str(path),
    )


def save_ply(asset: SplatAsset, path, binary: bool = True) -> None:
    """Write an asset in the splat PLY layout (inverse activations applied)."""
    path = Path(path)
    n = len(asset)
    bands = asset.sh.shape[2]
    rest = 3 * (bands - 1)
    names = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
    names += [f"f_rest_{i}" for i in range(rest)]
    names += ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]

    table = np.zeros((n, len(names)), dtype=np.float32)
    table[:, 0:3] = asset.means
    table[:, 6:9] = asset.sh[:, :, 0]
    if rest:
        table[:, 9 : 9 + rest] = asset.sh[:, :, 1:].reshape(n, rest)
    col = 9 + rest
    table[:, col] = _logit(asset.opacities)
    table[:, col + 1 : col + 4] = np.log(asset.scales)
    table[:, col + 4 : col + 8] = asset.rotations

    header = ["ply"]
    header.append("format binary_little_endian 1.0" if binary else "format ascii 1.0")
    header.append(f"element vertex {n}")
    header.extend(f"property float {name}" for name in names)
    header.append("end_header")

    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            f.write(np.ascontiguousarray(table, dtype="<f4").tobytes())
        else:
            buf = io.StringIO()
            np.savetxt(buf, table, fmt="%.9g")
            f.write(buf.getvalue().encode("ascii"))


def scene_extent(asset: SplatAsset) -> float:
    """Diagonal length of the bounding box of the primitive centers."""
    return float(np.linalg.norm(asset.means.max(axis=0) - asset.means.min(axis=0)))
