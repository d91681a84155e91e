"""Stateless randomness for the tracer.

Two generators live here:

* a trigonometric hash that maps a 3D position (plus a decorrelation slot) to
  a uniform number in [0, 1). Acceptance decisions key off hit positions, not
  traversal state, so they are independent of the order in which primitives
  are visited.
* a per-pixel low-discrepancy jitter built from the first two dimensions of a
  Sobol sequence, decorrelated across pixels (and seeds) by XORing the Sobol
  bits with a per-pixel scramble. The XOR preserves the sequence's
  stratification while giving every pixel its own sample set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_MASK32 = 0xFFFFFFFF
_INV32 = 1.0 / 4294967296.0  # 2^-32

# Offset added to the hashed z coordinate per slot; an irrational stride
# (fractional part of the golden ratio) keeps slots of the same position
# decorrelated.
SLOT_OFFSET = 0.6180339887498949


@dataclass(frozen=True)
class HashCoefficients:
    """Constants of the trig hash: r(q) = fract(b * sin(a . q))."""

    a1: float
    b1: float
    a2: tuple[float, float]
    b2: tuple[float, float]


DEFAULT_COEFFS = HashCoefficients(
    a1=91.3458,
    b1=47453.5453,
    a2=(12.9898, 78.233),
    b2=(43758.5453, 43758.5453),
)


def _fract(x: float) -> float:
    r = x - math.floor(x)
    # math.floor is exact, but r can round up to 1.0 when x is a hair below
    # an integer; keep the contract of [0, 1).
    return r if r < 1.0 else 0.0


def hash_scalar(q: float, coeffs: HashCoefficients = DEFAULT_COEFFS) -> float:
    """Hash one float to [0, 1): fract(b1 * sin(a1 * q))."""
    return _fract(coeffs.b1 * math.sin(coeffs.a1 * float(q)))


def hash_position(position, slot: int = 0, coeffs: HashCoefficients = DEFAULT_COEFFS) -> float:
    """Hash a 3D position (and slot index) to a uniform number in [0, 1).

    The z coordinate is hashed to a scalar first; that scalar perturbs x and y
    before the 2D stage, chaining all three coordinates into the output:

        xi = fract(b2 * sin(a2 . (p_xy + r1(p_z))))   (first component)

    slot shifts z by slot * SLOT_OFFSET so that several independent decisions
    can be drawn from the same position.
    """
    p = np.asarray(position, dtype=np.float64).reshape(3)
    z = float(p[2])
    if slot:
        z = z + float(slot) * SLOT_OFFSET
    r1 = hash_scalar(z, coeffs)
    s = coeffs.a2[0] * (float(p[0]) + r1) + coeffs.a2[1] * (float(p[1]) + r1)
    return _fract(coeffs.b2[0] * math.sin(s))


# ---------------------------------------------------------------------------
# Sobol pixel jitter
# ---------------------------------------------------------------------------


def _sobol_dim2_directions() -> np.ndarray:
    """Direction numbers for the second Sobol dimension (primitive poly x^2+x+1)."""
    m = 1
    v = np.zeros(32, dtype=np.uint64)
    for k in range(32):
        v[k] = m << (31 - k)
        m = m ^ (m << 1)
        m &= (1 << (k + 2)) - 1
    return v


_SOBOL_V2 = _sobol_dim2_directions()


def _bit_reverse32(i: int) -> int:
    i &= _MASK32
    i = ((i & 0x55555555) << 1) | ((i >> 1) & 0x55555555)
    i = ((i & 0x33333333) << 2) | ((i >> 2) & 0x33333333)
    i = ((i & 0x0F0F0F0F) << 4) | ((i >> 4) & 0x0F0F0F0F)
    i = ((i & 0x00FF00FF) << 8) | ((i >> 8) & 0x00FF00FF)
    return ((i << 16) | (i >> 16)) & _MASK32


def _sobol2_bits(index: int) -> tuple[int, int]:
    """32-bit fixed-point coordinates of Sobol point `index` in dimensions 0, 1."""
    x = _bit_reverse32(index)
    y = 0
    i = index & _MASK32
    k = 0
    while i:
        if i & 1:
            y ^= int(_SOBOL_V2[k])
        i >>= 1
        k += 1
    return x, y & _MASK32


def _hash32(x: int) -> int:
    """Integer scrambler (Wang hash), 32-bit in, 32-bit out."""
    x &= _MASK32
    x = (x ^ 61) ^ (x >> 16)
    x = (x * 9) & _MASK32
    x ^= x >> 4
    x = (x * 0x27D4EB2D) & _MASK32
    x ^= x >> 15
    return x


def pixel_jitter(pixel, frame: int, seed: int = 0) -> np.ndarray:
    """Sub-pixel sample offset in [0, 1)^2 for a pixel at a given frame index.

    For a fixed pixel the sequence over frames is a digitally shifted Sobol
    (0, 2)-sequence, so any prefix of length 2^k is stratified. Different
    pixels (or seeds) get different shifts and so look mutually uncorrelated.
    """
    px, py = int(pixel[0]), int(pixel[1])
    frame = int(frame)
    if frame < 0:
        raise ValueError("frame index must be nonnegative")
    sx, sy = _pixel_scramble(px, py, int(seed))
    bx, by = _sobol2_bits(frame)
    return np.array([(bx ^ sx) * _INV32, (by ^ sy) * _INV32])


def _pixel_scramble(px: int, py: int, seed: int) -> tuple[int, int]:
    base = _hash32(
        ((px & _MASK32) * 0x9E3779B1) & _MASK32
        ^ ((py & _MASK32) * 0x85EBCA77) & _MASK32
        ^ ((seed & _MASK32) * 0xC2B2AE3D) & _MASK32
    )
    return _hash32(base ^ 0x68E31DA4), _hash32(base ^ 0xB5297A4D)
