"""Dataset handling, augmentation, and class weighting."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torchvision.transforms.functional as TF

from fppnet import fileio

WEIGHT_CLIP = (0.1, 10.0)


@dataclass
class Sample:
    image: torch.Tensor    # (3, H, W) float32, channels already in [0, 1]
    labels: torch.Tensor   # (H, W) int64 in {0, 1, 2}

    @classmethod
    def from_arrays(cls, channels: np.ndarray, labels: np.ndarray) -> "Sample":
        return cls(
            image=torch.from_numpy(np.ascontiguousarray(channels)).float(),
            labels=torch.from_numpy(np.ascontiguousarray(labels)).long(),
        )


def load_pair(pmi_prefix, label_path) -> Sample:
    channels, validity = fileio.read_pmi(pmi_prefix)
    labels = fileio.read_labels(label_path)
    if labels.shape != channels.shape[1:]:
        raise ValueError(f"{label_path}: label dimensions differ from PMI")
    return Sample.from_arrays(channels, labels)


def scan_directory(root) -> list:
    """Pair every ``<prefix>_p.fpm`` with ``<prefix>_labels.pgm`` under root."""
    root = Path(root)
    samples = []
    for phase_file in sorted(root.rglob("*_p.fpm")):
        prefix = phase_file.with_name(phase_file.name[: -len("_p.fpm")])
        label_path = prefix.with_name(prefix.name + "_labels.pgm")
        if label_path.exists():
            samples.append(load_pair(prefix, label_path))
    if not samples:
        raise FileNotFoundError(f"no PMI/label pairs under {root}")
    return samples


def class_weights(samples, clip=WEIGHT_CLIP) -> torch.Tensor:
    """Inverse-frequency weights over the training split, clipped.

    Classes absent from the split get the upper clip; a split containing a
    single class has no usable frequency signal and is rejected.
    """
    counts = np.zeros(3, dtype=np.int64)
    for s in samples:
        counts += np.bincount(s.labels.numpy().ravel(), minlength=3)
    if np.count_nonzero(counts) < 2:
        raise ValueError("labels contain a single class; weights are undefined")
    total = counts.sum()
    weights = np.where(counts > 0, total / (3.0 * np.maximum(counts, 1)), clip[1])
    return torch.tensor(np.clip(weights, clip[0], clip[1]), dtype=torch.float32)


def augment(image: torch.Tensor, labels: torch.Tensor, gen: torch.Generator):
    """Random flips plus a random-angle rotation.

    The image is reflection-padded before rotating and cropped back, so no
    empty corners appear in it; labels rotate with nearest-neighbor sampling
    and rotated-in corners become class 0.
    """
    if torch.rand((), generator=gen) < 0.5:
        image = torch.flip(image, dims=(-1,))
        labels = torch.flip(labels, dims=(-1,))
    if torch.rand((), generator=gen) < 0.5:
        image = torch.flip(image, dims=(-2,))
        labels = torch.flip(labels, dims=(-2,))
    angle = float(torch.rand((), generator=gen) * 360.0 - 180.0)
    h, w = labels.shape
    pad = math.ceil(0.21 * max(h, w)) + 1
    padded = TF.pad(image, [pad, pad, pad, pad], padding_mode="reflect")
    rotated = TF.rotate(padded, angle, interpolation=TF.InterpolationMode.BILINEAR)
    image = TF.center_crop(rotated, [h, w])
    labels = TF.rotate(
        labels[None].float(),
        angle,
        interpolation=TF.InterpolationMode.NEAREST,
        fill=0.0,
    )[0].long()
    return image, labels
