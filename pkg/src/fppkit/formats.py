"""In-memory containers and bit-exact file formats shared across the pipeline.

File formats (all little-endian, row-major, top-left origin):

* ``.fpm``  — float map: ASCII header ``FPM1\\n<width> <height>\\n`` followed
  by width*height IEEE-754 binary32 values.
* ``.pgm``  — 3-class label map: binary PGM ``P5\\n<width> <height>\\n255\\n``
  with one raw byte per point, values restricted to {0, 1, 2}.
* ``.k16``  — fringe-order raster: ASCII header ``K16\\n<width> <height>\\n``
  followed by width*height int16 values.

Validity is never serialized inside ``.fpm``; invalid/background points are
conveyed separately as label maps. Containers are immutable after
construction (backing arrays are marked read-only), so they are safe to
share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

FPM_MAGIC = b"FPM1"
K16_MAGIC = b"K16"
PGM_MAGIC = b"P5"


class FormatError(ValueError):
    """Malformed or inconsistent file content."""


class MagicError(FormatError):
    """Header magic does not identify the expected format."""


class SizeMismatchError(FormatError):
    """Payload length disagrees with the header dimensions."""


class NonFiniteValueError(FormatError):
    """NaN or infinity where only finite values are allowed."""


class InvalidLabelError(FormatError):
    """Label value outside the 3-class alphabet {0, 1, 2}."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class FloatMap:
    """Single-channel H x W map of finite real values.

    ``validity`` is an optional per-point boolean mask (True = valid). Points
    that are invalid carry the value 0 by convention throughout the pipeline.
    """

    data: np.ndarray
    validity: Optional[np.ndarray] = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError(f"float map must be 2-D, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise NonFiniteValueError("float map contains NaN or Inf")
        object.__setattr__(self, "data", _freeze(data))
        if self.validity is not None:
            validity = np.asarray(self.validity, dtype=bool)
            if validity.shape != data.shape:
                raise ValueError(
                    f"validity shape {validity.shape} != data shape {data.shape}"
                )
            object.__setattr__(self, "validity", _freeze(validity))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def valid_mask(self) -> np.ndarray:
        """Validity as a boolean array; all-true when no mask is attached."""
        if self.validity is None:
            return np.ones(self.data.shape, dtype=bool)
        return self.validity.copy()

    def with_validity(self, validity: np.ndarray) -> "FloatMap":
        return FloatMap(self.data, validity)


@dataclass(frozen=True)
class FringeStack:
    """N co-registered phase-shifted intensity images of one scan, N >= 3."""

    frames: tuple

    def __post_init__(self):
        frames = tuple(
            f if isinstance(f, FloatMap) else FloatMap(f) for f in self.frames
        )
        if len(frames) < 3:
            raise ValueError(f"need at least 3 phase-shifting steps, got {len(frames)}")
        shape = frames[0].shape
        for i, f in enumerate(frames):
            if f.shape != shape:
                raise ValueError(
                    f"frame {i} shape {f.shape} differs from frame 0 shape {shape}"
                )
        object.__setattr__(self, "frames", frames)

    @property
    def n_steps(self) -> int:
        return len(self.frames)

    @property
    def height(self) -> int:
        return self.frames[0].height

    @property
    def width(self) -> int:
        return self.frames[0].width

    def as_array(self) -> np.ndarray:
        """Stack frames into an (N, H, W) float64 array."""
        return np.stack([f.data for f in self.frames])


@dataclass(frozen=True)
class LabelMap:
    """Per-point 3-class map: 0 background, 1 unreliable, 2 reliable."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise ValueError(f"label map must be 2-D, got shape {labels.shape}")
        if labels.size and not np.all(np.isin(labels, (0, 1, 2))):
            bad = labels[~np.isin(labels, (0, 1, 2))].flat[0]
            raise InvalidLabelError(f"label value {bad!r} outside {{0, 1, 2}}")
        object.__setattr__(self, "labels", _freeze(labels.astype(np.uint8)))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self) -> tuple:
        return self.labels.shape


@dataclass(frozen=True)
class PMIImage:
    """Three-channel composite: normalized phase, modulation, and background."""

    phase: FloatMap
    modulation: FloatMap
    intensity: FloatMap

    def __post_init__(self):
        if not (self.phase.shape == self.modulation.shape == self.intensity.shape):
            raise ValueError("PMI channels must share dimensions")
        for name in ("phase", "modulation", "intensity"):
            ch = getattr(self, name)
            if ch.data.size and (ch.data.min() < 0.0 or ch.data.max() > 1.0):
                raise ValueError(f"PMI {name} channel outside [0, 1]")

    @property
    def shape(self) -> tuple:
        return self.phase.shape

    def channels(self) -> tuple:
        return (self.phase, self.modulation, self.intensity)


# ---------------------------------------------------------------------------
# .fpm codec

def encode_fpm(map_: FloatMap) -> bytes:
    """Serialize a float map to FPM1 bytes (binary32, little-endian)."""
    if not np.all(np.isfinite(map_.data)):
        raise NonFiniteValueError("refusing to encode non-finite values")
    header = FPM_MAGIC + b"\n" + f"{map_.width} {map_.height}".encode("ascii") + b"\n"
    return header + map_.data.astype("<f4").tobytes()


def decode_fpm(blob: bytes) -> FloatMap:
    """Parse FPM1 bytes back into a float map. Inverse of :func:`encode_fpm`."""
    magic, _, rest = blob.partition(b"\n")
    if magic != FPM_MAGIC:
        raise MagicError(f"bad magic {magic[:8]!r}, expected {FPM_MAGIC!r}")
    dims, _, payload = rest.partition(b"\n")
    try:
        w_s, h_s = dims.split()
        width, height = int(w_s), int(h_s)
    except ValueError as e:
        raise FormatError(f"malformed dimension line {dims!r}") from e
    if width <= 0 or height <= 0:
        raise FormatError(f"non-positive dimensions {width} x {height}")
    expected = width * height * 4
    if len(payload) != expected:
        raise SizeMismatchError(
            f"payload is {len(payload)} bytes, header implies {expected}"
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(height, width)
    if not np.all(np.isfinite(values)):
        raise NonFiniteValueError("payload contains NaN or Inf")
    return FloatMap(values.astype(np.float64))


# ---------------------------------------------------------------------------
# 3-class PGM codec

def encode_labelmap(labels: LabelMap) -> bytes:
    """Serialize a label map as binary PGM with raw values 0/1/2."""
    header = (
        PGM_MAGIC + b"\n" + f"{labels.width} {labels.height}".encode("ascii") + b"\n255\n"
    )
    return header + labels.labels.tobytes()


def decode_labelmap(blob: bytes) -> LabelMap:
    """Parse a 3-class binary PGM. Inverse of :func:`encode_labelmap`."""
    magic, _, rest = blob.partition(b"\n")
    if magic != PGM_MAGIC:
        raise MagicError(f"bad magic {magic[:8]!r}, expected {PGM_MAGIC!r}")
    dims, _, rest = rest.partition(b"\n")
    try:
        w_s, h_s = dims.split()
        width, height = int(w_s), int(h_s)
    except ValueError as e:
        raise FormatError(f"malformed dimension line {dims!r}") from e
    if width <= 0 or height <= 0:
        raise FormatError(f"non-positive dimensions {width} x {height}")
    maxval, _, payload = rest.partition(b"\n")
    if maxval != b"255":
        raise FormatError(f"maxval must be 255, got {maxval!r}")
    if len(payload) != width * height:
        raise SizeMismatchError(
            f"payload is {len(payload)} bytes, header implies {width * height}"
        )
    values = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    bad = values > 2
    if bad.any():
        raise InvalidLabelError(f"pixel byte {int(values[bad].flat[0])} outside {{0, 1, 2}}")
    return LabelMap(values)


# ---------------------------------------------------------------------------
# .k16 fringe-order codec

def encode_k16(k: np.ndarray) -> bytes:
    """Serialize an integer fringe-order raster as int16 little-endian."""
    k = np.asarray(k)
    if k.ndim != 2:
        raise ValueError(f"fringe-order raster must be 2-D, got shape {k.shape}")
    if k.min(initial=0) < np.iinfo(np.int16).min or k.max(initial=0) > np.iinfo(np.int16).max:
        raise ValueError("fringe order out of int16 range")
    if not np.array_equal(k, k.astype(np.int64)):
        raise ValueError("fringe orders must be integers")
    header = K16_MAGIC + b"\n" + f"{k.shape[1]} {k.shape[0]}".encode("ascii") + b"\n"
    return header + k.astype("<i2").tobytes()


def decode_k16(blob: bytes) -> np.ndarray:
    """Parse a fringe-order raster. Inverse of :func:`encode_k16`."""
    magic, _, rest = blob.partition(b"\n")
    if magic != K16_MAGIC:
        raise MagicError(f"bad magic {magic[:8]!r}, expected {K16_MAGIC!r}")
    dims, _, payload = rest.partition(b"\n")
    try:
        w_s, h_s = dims.split()
        width, height = int(w_s), int(h_s)
    except ValueError as e:
        raise FormatError(f"malformed dimension line {dims!r}") from e
    if len(payload) != width * height * 2:
        raise SizeMismatchError(
            f"payload is {len(payload)} bytes, header implies {width * height * 2}"
        )
    return np.frombuffer(payload, dtype="<i2").reshape(height, width).astype(np.int64)


# ---------------------------------------------------------------------------
# File helpers

def save_fpm(path, map_: FloatMap) -> None:
    Path(path).write_bytes(encode_fpm(map_))


def load_fpm(path) -> FloatMap:
    return decode_fpm(Path(path).read_bytes())


def save_labelmap(path, labels: LabelMap) -> None:
    Path(path).write_bytes(encode_labelmap(labels))


def load_labelmap(path) -> LabelMap:
    return decode_labelmap(Path(path).read_bytes())


def save_k16(path, k: np.ndarray) -> None:
    Path(path).write_bytes(encode_k16(k))


def load_k16(path) -> np.ndarray:
    return decode_k16(Path(path).read_bytes())


def stack_paths(prefix, n_steps: int):
    """Per-step file names for a fringe stack: ``<prefix>_00.fpm`` ..."""
    prefix = Path(prefix)
    return [prefix.with_name(f"{prefix.name}_{n:02d}.fpm") for n in range(n_steps)]


def save_stack(prefix, stack: FringeStack) -> None:
    for path, frame in zip(stack_paths(prefix, stack.n_steps), stack.frames):
        save_fpm(path, frame)


def load_stack(prefix, n_steps: int) -> FringeStack:
    return FringeStack(tuple(load_fpm(p) for p in stack_paths(prefix, n_steps)))
