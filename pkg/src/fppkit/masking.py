"""Validity-mask construction and the rule-based unreliable-point classifier.

Connectivity is 4-connected everywhere. Thresholds follow the labeling
convention: a point is background when its modulation is <= the threshold,
so masks keep strictly-greater values only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from fppkit.formats import FloatMap, LabelMap, PMIImage
from fppkit.phase import TWO_PI, wrap

FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class RegionDecomposition:
    """4-connected regions: per-point id (0 = none) and per-id point counts.

    Ids are contiguous 1..R in row-major first-encounter order, so a fixed
    mask always yields the same decomposition.
    """

    region_id: np.ndarray
    region_sizes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "region_id", np.asarray(self.region_id, dtype=np.int64))
        object.__setattr__(
            self, "region_sizes", np.asarray(self.region_sizes, dtype=np.int64)
        )

    @property
    def n_regions(self) -> int:
        return len(self.region_sizes)

    def mask_of(self, region: int) -> np.ndarray:
        return self.region_id == region


def threshold_mask(modulation, threshold: float) -> np.ndarray:
    """True where modulation is strictly greater than the threshold."""
    data = modulation.data if isinstance(modulation, FloatMap) else np.asarray(modulation)
    if not np.all(np.isfinite(data)):
        raise ValueError("modulation map must be finite")
    return data > threshold


def connected_components_4(mask: np.ndarray) -> RegionDecomposition:
    """Label maximal 4-connected true regions 1..R in first-encounter order."""
    mask = np.asarray(mask, dtype=bool)
    labeled, n = ndimage.label(mask, structure=FOUR_CONN)
    if n == 0:
        return RegionDecomposition(labeled, np.empty(0, dtype=np.int64))
    # renumber by row-major position of each region's first point
    flat = labeled.ravel()
    nz = np.flatnonzero(flat)
    first = np.full(n + 1, flat.size, dtype=np.int64)
    np.minimum.at(first, flat[nz], nz)
    order = np.argsort(first[1:], kind="stable")
    remap = np.zeros(n + 1, dtype=np.int64)
    remap[order + 1] = np.arange(1, n + 1)
    region_id = remap[labeled]
    sizes = np.bincount(region_id.ravel(), minlength=n + 1)[1:]
    return RegionDecomposition(region_id, sizes)


def remove_small_regions(mask: np.ndarray, min_fraction: float) -> np.ndarray:
    """Drop 4-connected regions smaller than min_fraction of all map points."""
    if not 0.0 <= min_fraction <= 1.0:
        raise ValueError(f"min_fraction must be in [0, 1], got {min_fraction}")
    mask = np.asarray(mask, dtype=bool)
    regions = connected_components_4(mask)
    if regions.n_regions == 0:
        return mask.copy()
    bound = min_fraction * mask.size
    keep = np.concatenate(([False], regions.region_sizes >= bound))
    return keep[regions.region_id]


def mask_from_labels(labels: LabelMap) -> np.ndarray:
    """Unwrapping mask: true exactly where the label is 2 (reliable)."""
    return labels.labels == 2


@dataclass(frozen=True)
class HeuristicParams:
    """Thresholds for the rule-based classifier.

    Tuning constants validated against the synthetic suites only; they exist
    so the pipeline runs without a trained classifier.
    """

    q_low: float = 0.08
    tau_d: float = 1.0


def _second_difference(phi: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Max wrapped second difference over the two 4-neighbor axes.

    An axis contributes 0 where either of its neighbors is missing or
    invalid; the wrap keeps genuine carrier 2*pi jumps from counting.
    """
    out = np.zeros_like(phi)
    for axis in (0, 1):
        prev_ok = np.zeros_like(valid)
        next_ok = np.zeros_like(valid)
        d_prev = np.zeros_like(phi)
        d_next = np.zeros_like(phi)
        sl_c = [slice(None)] * 2
        sl_p = [slice(None)] * 2
        sl_c[axis] = slice(1, None)
        sl_p[axis] = slice(None, -1)
        sl_c, sl_p = tuple(sl_c), tuple(sl_p)
        prev_ok[sl_c] = valid[sl_p]
        d_prev[sl_c] = wrap(phi[sl_p] - phi[sl_c])
        next_ok[sl_p] = valid[sl_c]
        d_next[sl_p] = wrap(phi[sl_c] - phi[sl_p])
        term = np.where(prev_ok & next_ok & valid, d_prev + d_next, 0.0)
        out = np.maximum(out, np.abs(term))
    return out


def heuristic_classify(
    pmi: PMIImage, validity: np.ndarray, params: HeuristicParams = HeuristicParams()
) -> LabelMap:
    """Rule-based 3-class map: a stand-in for a trained classifier.

    Label 0 where invalid; label 1 where the normalized modulation is below
    ``q_low`` or the wrapped second difference of the phase exceeds
    ``tau_d`` radians; label 2 otherwise.
    """
    validity = np.asarray(validity, dtype=bool)
    if validity.shape != pmi.shape:
        raise ValueError(f"validity {validity.shape} != PMI {pmi.shape}")
    phi = pmi.phase.data * TWO_PI - np.pi
    rough = _second_difference(phi, validity)
    labels = np.full(pmi.shape, 2, dtype=np.uint8)
    labels[(pmi.modulation.data < params.q_low) | (rough > params.tau_d)] = 1
    labels[~validity] = 0
    return LabelMap(labels)
