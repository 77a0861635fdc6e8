"""Temporal phase unwrapping with a complementary Gray-code pattern set.

The n main patterns hold the reflected Gray code of the fringe order; their
transitions line up with the wrapped phase jumps. The one extra pattern is
the Gray pattern of double frequency shifted by half a fringe, so its
transitions sit at fringe centers instead. Decoding picks the safe source
per point: away from the phase jump the main code is used directly, and
inside a half-fringe of a jump the order comes from the half-shifted code,
which no bit transition can corrupt there. This keeps the decoded order
exact even when the wrapped phase wobbles across a fringe boundary.

Orders live in the convention of wrapped phase in (-pi, pi]: fringe k
covers continuous phase (2*pi*k - pi, 2*pi*k + pi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fppkit.formats import FloatMap
from fppkit.phase import TWO_PI


@dataclass(frozen=True)
class GraycodeSet:
    """n_bits+1 binary patterns plus the per-pixel binarization reference."""

    num_fringes: int
    code_images: tuple
    threshold: FloatMap

    def __post_init__(self):
        images = tuple(
            m if isinstance(m, FloatMap) else FloatMap(m) for m in self.code_images
        )
        if len(images) < 2:
            raise ValueError("need at least one code pattern plus the complement")
        if 2 ** self.n_bits < self.num_fringes:
            raise ValueError(
                f"{self.n_bits} code bits cannot address {self.num_fringes} fringes"
            )
        for img in images + (self.threshold,):
            if img.shape != images[0].shape:
                raise ValueError("code images and threshold must share dimensions")
        object.__setattr__(self, "code_images", images)

    @property
    def n_bits(self) -> int:
        return len(self.code_images) - 1


def gray_to_binary(bits) -> np.ndarray:
    """Decode MSB-first Gray-code bit planes into integers."""
    value = None
    prev = None
    for g in bits:
        g = np.asarray(g).astype(np.int64)
        prev = g if prev is None else prev ^ g
        value = prev if value is None else (value << 1) | prev
    if value is None:
        raise ValueError("no bit planes given")
    return value


def linear_carrier(num_fringes: int, dims, direction: str = "vertical") -> np.ndarray:
    """Continuous carrier phase spanning the image with whole fringes.

    Pixels sample at half-integer centers and the carrier is anchored at the
    start of fringe 0, so the per-pixel order runs exactly 0..num_fringes-1.
    """
    height, width = dims
    if direction == "vertical":
        coord, extent = np.arange(width, dtype=np.float64), width
    elif direction == "horizontal":
        coord, extent = np.arange(height, dtype=np.float64), height
    else:
        raise ValueError(f"unknown fringe direction {direction!r}")
    profile = TWO_PI * num_fringes * (coord + 0.5) / extent - np.pi
    if direction == "vertical":
        return np.tile(profile, (height, 1))
    return np.tile(profile[:, None], (1, width))


def _padded_bits(num_fringes: int) -> int:
    if num_fringes < 1:
        raise ValueError("need at least one fringe")
    return max(1, math.ceil(math.log2(num_fringes)))


def graycode_bits_from_phase(phase, num_fringes: int) -> tuple:
    """Render the n_bits+1 binary patterns for a continuous phase map.

    The half-fringe index h = ceil(phase/pi) addresses an (n_bits+1)-bit Gray
    code whose top bits are the main fringe code and whose lowest bit is the
    half-shifted complementary pattern.
    """
    phase = phase.data if isinstance(phase, FloatMap) else np.asarray(phase, dtype=np.float64)
    n_bits = _padded_bits(num_fringes)
    h = np.ceil(phase / np.pi).astype(np.int64)
    if h.size and (h.min() < 0 or h.max() >= 2 ** (n_bits + 1)):
        raise ValueError(
            f"phase spans half-fringe indices {h.min()}..{h.max()}, "
            f"outside the {n_bits + 1}-bit code range"
        )
    gray = h ^ (h >> 1)
    planes = []
    for bit in range(n_bits, -1, -1):
        planes.append(((gray >> bit) & 1).astype(np.float64))
    return tuple(planes)


def synthesize_graycode(
    num_fringes: int, dims, direction: str = "vertical"
) -> GraycodeSet:
    """Ideal pattern set for the linear carrier; threshold reference 0.5."""
    carrier = linear_carrier(num_fringes, dims, direction)
    planes = graycode_bits_from_phase(carrier, num_fringes)
    return GraycodeSet(
        num_fringes=num_fringes,
        code_images=tuple(FloatMap(p) for p in planes),
        threshold=FloatMap(np.full(dims, 0.5)),
    )


def decode_fringe_order(code_set: GraycodeSet, phi):
    """Per-point fringe order from binarized patterns and wrapped phase.

    Returns (k, valid); points whose decoded order falls outside
    [0, num_fringes) are marked invalid with k = 0.
    """
    phi = phi.data if isinstance(phi, FloatMap) else np.asarray(phi, dtype=np.float64)
    if phi.shape != code_set.threshold.shape:
        raise ValueError(f"phase {phi.shape} != patterns {code_set.threshold.shape}")
    threshold = code_set.threshold.data
    bits = [img.data > threshold for img in code_set.code_images]
    k1 = gray_to_binary(bits[:-1])
    k2 = gray_to_binary(bits)
    k2p = (k2 + 1) // 2
    k = np.where(phi < -np.pi / 2, k2p, np.where(phi >= np.pi / 2, k2p - 1, k1))
    valid = (k >= 0) & (k < code_set.num_fringes)
    return np.where(valid, k, 0), valid


def tpu_unwrap(phi, k) -> FloatMap:
    """Continuous phase by fringe order: phi + 2*pi*k, exact per point."""
    validity = phi.validity if isinstance(phi, FloatMap) else None
    phi = phi.data if isinstance(phi, FloatMap) else np.asarray(phi, dtype=np.float64)
    k = np.asarray(k)
    if phi.shape != k.shape:
        raise ValueError(f"phase {phi.shape} != order map {k.shape}")
    return FloatMap(phi + TWO_PI * k, validity=validity)
