"""Ground-truth label generation from temporally-unwrapped depth maps.

Unreliable object points are found by treating them as depth outliers:
bilateral filtering provides a local consensus estimate, points that
dominate the deviation inside high-variance windows are suppressed
iteratively, and small surviving islands are dropped. Zero depth encodes
invalid throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fppkit.formats import FloatMap, LabelMap
from fppkit.masking import remove_small_regions


@dataclass(frozen=True)
class OutlierParams:
    spatial_sigma: float = 3.0
    range_sigma: float = 0.5
    window: int = 5
    var_threshold: float = 0.25
    small_region_fraction: float = 0.01

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError(f"window must be odd and >= 3, got {self.window}")
        if self.spatial_sigma <= 0 or self.range_sigma <= 0:
            raise ValueError("sigmas must be positive")


def _shifted(a: np.ndarray, dy: int, dx: int, fill=0.0) -> np.ndarray:
    """View of ``a`` shifted by (dy, dx) with constant fill outside."""
    out = np.full_like(a, fill)
    src_y = slice(max(0, -dy), a.shape[0] - max(0, dy))
    src_x = slice(max(0, -dx), a.shape[1] - max(0, dx))
    dst_y = slice(max(0, dy), a.shape[0] - max(0, -dy))
    dst_x = slice(max(0, dx), a.shape[1] - max(0, -dx))
    out[dst_y, dst_x] = a[src_y, src_x]
    return out


def _bilateral_reference(depth: np.ndarray, valid: np.ndarray, params: OutlierParams):
    """Leave-one-out bilateral estimate of each valid point's depth.

    An outlier has no similar neighbors, so its range-weighted support
    vanishes; such points fall back to the spatial-only neighbor mean, which
    is exactly the consensus they deviate from.
    """
    radius = max(1, math.ceil(2.0 * params.spatial_sigma))
    num = np.zeros_like(depth)
    den = np.zeros_like(depth)
    num_sp = np.zeros_like(depth)
    den_sp = np.zeros_like(depth)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if dy == 0 and dx == 0:
                continue
            w_s = math.exp(-(dy * dy + dx * dx) / (2.0 * params.spatial_sigma**2))
            d_n = _shifted(depth, dy, dx)
            v_n = _shifted(valid, dy, dx, fill=False)
            w_r = np.exp(-((d_n - depth) ** 2) / (2.0 * params.range_sigma**2))
            w = w_s * w_r * v_n
            num += w * d_n
            den += w
            num_sp += w_s * v_n * d_n
            den_sp += w_s * v_n
    estimate = np.where(den > 1e-12, num / np.maximum(den, 1e-300), 0.0)
    fallback = np.where(den_sp > 0, num_sp / np.maximum(den_sp, 1e-300), depth)
    estimate = np.where(den > 1e-12, estimate, fallback)
    return np.where(valid, estimate, 0.0)


def _window_sums(a: np.ndarray, radius: int) -> np.ndarray:
    out = np.zeros_like(a, dtype=np.float64)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            out += _shifted(a.astype(np.float64), dy, dx)
    return out


def _window_max(a: np.ndarray, valid: np.ndarray, radius: int) -> np.ndarray:
    out = np.full_like(a, -np.inf, dtype=np.float64)
    masked = np.where(valid, a, -np.inf)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            out = np.maximum(out, _shifted(masked, dy, dx, fill=-np.inf))
    return out


def detect_outliers(depth, params: OutlierParams = OutlierParams()) -> FloatMap:
    """Zero out depth outliers; survivors keep their original values.

    Pipeline: bilateral consensus estimate, iterative suppression of the
    maximal-deviation point inside windows whose depth variance exceeds the
    threshold (a window is left alone once it has lost half its points),
    then small-region removal on the surviving validity.
    """
    data = depth.data if isinstance(depth, FloatMap) else np.asarray(depth, dtype=np.float64)
    if data.size and data.min() < 0:
        raise ValueError("depth must be non-negative (0 = invalid)")
    valid = data > 0
    radius = params.window // 2

    estimate = _bilateral_reference(data, valid, params)
    deviation = np.where(valid, np.abs(data - estimate), 0.0)

    initial_count = _window_sums(valid, radius)
    max_rounds = int(valid.sum()) + 1
    for _ in range(max_rounds):
        cnt = _window_sums(valid, radius)
        s1 = _window_sums(np.where(valid, data, 0.0), radius)
        s2 = _window_sums(np.where(valid, data * data, 0.0), radius)
        enough = cnt >= 2
        mean = np.where(enough, s1 / np.maximum(cnt, 1), 0.0)
        var = np.where(enough, s2 / np.maximum(cnt, 1) - mean * mean, 0.0)
        peak = _window_max(deviation, valid, radius)
        candidates = (
            valid
            & (var > params.var_threshold)
            & (deviation >= peak)
            & (cnt >= 0.5 * initial_count)
        )
        if not candidates.any():
            break
        valid = valid & ~candidates

    valid = remove_small_regions(valid, params.small_region_fraction)
    return FloatMap(np.where(valid, data, 0.0), validity=valid)


def make_labels(modulation, filtered_depth, modu_threshold: float = 2.0) -> LabelMap:
    """Three-class labels: 0 background, 1 unreliable (no depth), 2 reliable."""
    mod = modulation.data if isinstance(modulation, FloatMap) else np.asarray(modulation)
    dep = (
        filtered_depth.data
        if isinstance(filtered_depth, FloatMap)
        else np.asarray(filtered_depth)
    )
    if mod.shape != dep.shape:
        raise ValueError(f"modulation {mod.shape} != depth {dep.shape}")
    labels = np.full(mod.shape, 2, dtype=np.uint8)
    labels[dep == 0] = 1
    labels[mod <= modu_threshold] = 0
    return LabelMap(labels)
