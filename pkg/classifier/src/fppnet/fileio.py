"""Readers and writers for the shared wire formats.

The contract with the decoding pipeline is purely file-based:

* ``.fpm`` float maps: ``FPM1\\n<width> <height>\\n`` + binary32
  little-endian row-major values.
* 3-class ``.pgm`` label maps: ``P5\\n<width> <height>\\n255\\n`` + one raw
  byte per point, values in {0, 1, 2} (also used for validity masks with
  2 = valid, 0 = invalid).

PMI composites arrive as ``<prefix>_p.fpm``, ``<prefix>_m.fpm``,
``<prefix>_i.fpm`` plus ``<prefix>_v.pgm``.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def read_fpm(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    magic, _, rest = blob.partition(b"\n")
    if magic != b"FPM1":
        raise ValueError(f"{path}: bad magic {magic[:8]!r}")
    dims, _, payload = rest.partition(b"\n")
    width, height = (int(t) for t in dims.split())
    if len(payload) != width * height * 4:
        raise ValueError(f"{path}: payload length mismatch")
    values = np.frombuffer(payload, dtype="<f4").reshape(height, width)
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{path}: non-finite values")
    return values.astype(np.float32)


def write_fpm(path, values: np.ndarray) -> None:
    values = np.asarray(values)
    if values.ndim != 2 or not np.all(np.isfinite(values)):
        raise ValueError("float map must be 2-D and finite")
    height, width = values.shape
    header = b"FPM1\n" + f"{width} {height}".encode() + b"\n"
    Path(path).write_bytes(header + values.astype("<f4").tobytes())


def read_labels(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    magic, _, rest = blob.partition(b"\n")
    if magic != b"P5":
        raise ValueError(f"{path}: bad magic {magic[:8]!r}")
    dims, _, rest = rest.partition(b"\n")
    width, height = (int(t) for t in dims.split())
    maxval, _, payload = rest.partition(b"\n")
    if maxval != b"255":
        raise ValueError(f"{path}: maxval must be 255")
    if len(payload) != width * height:
        raise ValueError(f"{path}: payload length mismatch")
    labels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    if labels.max(initial=0) > 2:
        raise ValueError(f"{path}: label value outside {{0, 1, 2}}")
    return labels.copy()


def write_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    if labels.ndim != 2 or not np.isin(labels, (0, 1, 2)).all():
        raise ValueError("labels must be 2-D with values in {0, 1, 2}")
    height, width = labels.shape
    header = b"P5\n" + f"{width} {height}".encode() + b"\n255\n"
    Path(path).write_bytes(header + labels.astype(np.uint8).tobytes())


def read_pmi(prefix):
    """Load a PMI triplet and its validity mask as (3, H, W) + (H, W)."""
    prefix = Path(prefix)
    channels = [
        read_fpm(prefix.with_name(prefix.name + f"_{tag}.fpm"))
        for tag in ("p", "m", "i")
    ]
    shape = channels[0].shape
    if any(c.shape != shape for c in channels):
        raise ValueError(f"{prefix}: PMI channel dimensions differ")
    validity = read_labels(prefix.with_name(prefix.name + "_v.pgm")) == 2
    if validity.shape != shape:
        raise ValueError(f"{prefix}: validity dimensions differ from channels")
    return np.stack(channels), validity


def write_pmi(prefix, channels: np.ndarray, validity: np.ndarray) -> None:
    prefix = Path(prefix)
    for tag, channel in zip(("p", "m", "i"), channels):
        write_fpm(prefix.with_name(prefix.name + f"_{tag}.fpm"), channel)
    write_labels(
        prefix.with_name(prefix.name + "_v.pgm"),
        np.where(validity, 2, 0).astype(np.uint8),
    )
