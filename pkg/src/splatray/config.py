"""Render settings, camera description, and the flat scene-config format.

Scene configs are plain text, one ``key = value`` pair per line, ``#`` for
comments. Vectors are comma separated. Unknown keys are rejected so typos
fail loudly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .gaussians import DEFAULT_CUTOFF

DEPTH_MODES = ("mean", "center")
MULTISAMPLE_MAX = 256


class ConfigError(ValueError):
    """Raised for malformed scene configs or invalid setting values."""


@dataclass
class CameraConfig:
    """Pinhole camera: position, target, up hint, and vertical field of view."""

    position: np.ndarray
    look_at: np.ndarray = field(default_factory=lambda: np.zeros(3))
    up: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    fov_deg: float = 60.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        self.look_at = np.asarray(self.look_at, dtype=np.float64).reshape(3)
        self.up = np.asarray(self.up, dtype=np.float64).reshape(3)
        self.fov_deg = float(self.fov_deg)
        for name, v in (("position", self.position), ("look_at", self.look_at), ("up", self.up)):
            if not np.isfinite(v).all():
                raise ConfigError(f"camera {name} must be finite")
        if np.allclose(self.position, self.look_at):
            raise ConfigError("camera position and look_at coincide")
        if np.linalg.norm(self.up) < 1e-12:
            raise ConfigError("camera up vector is zero")
        if not 0.0 < self.fov_deg < 180.0:
            raise ConfigError(f"fov_deg must lie in (0, 180), got {self.fov_deg}")


@dataclass
class RenderSettings:
    """Everything about a render that is not the camera or the asset."""

    width: int = 640
    height: int = 480
    spp: int = 64
    depth_mode: str = "mean"
    cutoff_s: float = DEFAULT_CUTOFF
    multisample: int = 1
    background: np.ndarray = field(default_factory=lambda: np.zeros(3))
    seed: int = 0
    reference_mode: bool = False

    def __post_init__(self):
        self.width = int(self.width)
        self.height = int(self.height)
        self.spp = int(self.spp)
        self.multisample = int(self.multisample)
        self.seed = int(self.seed)
        self.cutoff_s = float(self.cutoff_s)
        self.background = np.asarray(self.background, dtype=np.float64).reshape(3)
        self.reference_mode = bool(self.reference_mode)
        if self.width < 1 or self.height < 1:
            raise ConfigError(f"image size must be positive, got {self.width}x{self.height}")
        if self.spp < 1:
            raise ConfigError(f"spp must be >= 1, got {self.spp}")
        if self.depth_mode not in DEPTH_MODES:
            raise ConfigError(f"depth_mode must be one of {DEPTH_MODES}, got {self.depth_mode!r}")
        if not 1 <= self.multisample <= MULTISAMPLE_MAX:
            raise ConfigError(f"multisample must lie in [1, {MULTISAMPLE_MAX}], got {self.multisample}")
        if self.cutoff_s <= 0.0 or not np.isfinite(self.cutoff_s):
            raise ConfigError(f"cutoff_s must be positive and finite, got {self.cutoff_s}")
        if not np.isfinite(self.background).all() or np.any(self.background < 0.0):
            raise ConfigError("background must be finite and nonnegative")

    @property
    def passes(self) -> int:
        """Traversals per pixel: ceil(spp / multisample)."""
        return -(-self.spp // self.multisample)

    @property
    def samples_per_pixel(self) -> int:
        """Effective per-pixel sample count, passes * multisample >= spp."""
        return self.passes * self.multisample


def parse_vec3(text: str) -> np.ndarray:
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != 3:
        raise ConfigError(f"expected three comma-separated numbers, got {text!r}")
    try:
        return np.array([float(p) for p in parts])
    except ValueError as exc:
        raise ConfigError(f"bad vector {text!r}: {exc}") from exc


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


_VEC_KEYS = {"cam_pos", "cam_look_at", "cam_up", "background"}
_INT_KEYS = {"width", "height", "spp", "multisample", "seed"}
_FLOAT_KEYS = {"fov_deg", "cutoff_s"}
_STR_KEYS = {"asset", "depth_mode"}
_BOOL_KEYS = {"reference"}
CONFIG_KEYS = sorted(_VEC_KEYS | _INT_KEYS | _FLOAT_KEYS | _STR_KEYS | _BOOL_KEYS)


def load_scene_config(path) -> tuple[str | None, CameraConfig, RenderSettings]:
    """Parse a scene config file.

    Returns (asset_path, camera, settings). asset_path is resolved relative
    to the config file's directory and may be None when the config does not
    name one (callers decide whether that is an error). cam_pos is required.
    """
    path = Path(path)
    values: dict[str, object] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r} (known: {', '.join(CONFIG_KEYS)})")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        try:
            if key in _VEC_KEYS:
                values[key] = parse_vec3(value)
            elif key in _INT_KEYS:
                values[key] = int(value)
            elif key in _FLOAT_KEYS:
                values[key] = float(value)
            elif key in _BOOL_KEYS:
                values[key] = _parse_bool(value)
            else:
                values[key] = value
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc

    if "cam_pos" not in values:
        raise ConfigError(f"{path}: missing required key 'cam_pos'")

    camera = CameraConfig(
        position=values["cam_pos"],
        look_at=values.get("cam_look_at", np.zeros(3)),
        up=values.get("cam_up", np.array([0.0, 1.0, 0.0])),
        fov_deg=values.get("fov_deg", 60.0),
    )
    settings = RenderSettings(
        width=values.get("width", 640),
        height=values.get("height", 480),
        spp=values.get("spp", 64),
        depth_mode=values.get("depth_mode", "mean"),
        cutoff_s=values.get("cutoff_s", DEFAULT_CUTOFF),
        multisample=values.get("multisample", 1),
        background=values.get("background", np.zeros(3)),
        seed=values.get("seed", 0),
        reference_mode=values.get("reference", False),
    )
    asset = values.get("asset")
    if asset is not None:
        asset = str((path.parent / str(asset)).resolve())
    return asset, camera, settings
