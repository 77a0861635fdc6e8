"""Evaluation: relative-to-absolute alignment, failure cases, RMSE, metrics.

A relative unwrap is aligned to the absolute reference by one integer 2*pi
multiple per region (the most frequent per-point order difference). A map is
a failure case when some 4-connected region of order-error points is larger
than the error-percent threshold times the map size; comparisons run over
jointly valid points only.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from fppkit.formats import FloatMap, LabelMap
from fppkit.masking import RegionDecomposition, connected_components_4
from fppkit.phase import TWO_PI

PHASE_ERROR_TOLERANCE = 0.3  # rad; failure criterion for smoothed outputs

REPORT_COLUMNS = (
    "map_id",
    "method",
    "threshold",
    "failure",
    "rmse",
    "pa",
    "mpa",
    "miou",
    "fwiou",
    "cpa0",
    "cpa1",
    "cpa2",
)


@dataclass(frozen=True)
class FailureReport:
    is_failure: bool
    regions: tuple          # (size, fraction, mean_error) per error region
    threshold: float
    mode: str


@dataclass(frozen=True)
class ClassMetrics:
    pa: float
    mpa: float
    miou: float
    fwiou: float
    cpa: tuple              # per-class recall, None when absent from gt


def _mode_offset(offsets: np.ndarray) -> int:
    """Most frequent value; ties broken toward smaller magnitude, then value."""
    values, counts = np.unique(offsets, return_counts=True)
    best = sorted(
        zip(values.tolist(), counts.tolist()),
        key=lambda vc: (-vc[1], abs(vc[0]), vc[0]),
    )[0]
    return int(best[0])


def align_relative(phi_rel: FloatMap, phi_gt: FloatMap, regions: RegionDecomposition):
    """Shift each region by the modal integer 2*pi multiple toward the truth.

    Returns the aligned map and the ids of regions with no jointly valid
    points, which are left untouched.
    """
    if phi_rel.shape != phi_gt.shape:
        raise ValueError(f"relative {phi_rel.shape} != reference {phi_gt.shape}")
    overlap = phi_rel.valid_mask() & phi_gt.valid_mask()
    out = phi_rel.data.copy()
    unaligned = []
    for r in range(1, regions.n_regions + 1):
        sel = (regions.region_id == r) & overlap
        if not sel.any():
            unaligned.append(r)
            continue
        offsets = np.round((phi_gt.data[sel] - phi_rel.data[sel]) / TWO_PI).astype(np.int64)
        offset = _mode_offset(offsets)
        out[regions.region_id == r] += TWO_PI * offset
    out[~phi_rel.valid_mask()] = 0.0
    return FloatMap(out, validity=phi_rel.validity), unaligned


def detect_failure(
    phi: FloatMap, phi_gt: FloatMap, err_fraction: float, mode: str = "order"
) -> FailureReport:
    """Failure iff some 4-connected error region exceeds the size threshold.

    ``order`` counts points whose rounded order differs from the reference;
    ``phase03`` counts points deviating by more than 0.3 rad (for methods
    that output smoothed phase).
    """
    if not 0.0 < err_fraction < 1.0:
        raise ValueError(f"error fraction must be in (0, 1), got {err_fraction}")
    if phi.shape != phi_gt.shape:
        raise ValueError(f"map {phi.shape} != reference {phi_gt.shape}")
    joint = phi.valid_mask() & phi_gt.valid_mask()
    diff = phi.data - phi_gt.data
    if mode == "order":
        error_size = np.abs(np.round(diff / TWO_PI))
        wrong = (error_size != 0) & joint
    elif mode == "phase03":
        error_size = np.abs(diff)
        wrong = (error_size > PHASE_ERROR_TOLERANCE) & joint
    else:
        raise ValueError(f"unknown failure mode {mode!r}")
    regions = connected_components_4(wrong)
    total = phi.data.size
    entries = []
    for r in range(1, regions.n_regions + 1):
        sel = regions.region_id == r
        size = int(regions.region_sizes[r - 1])
        entries.append((size, size / total, float(error_size[sel].mean())))
    entries.sort(key=lambda e: -e[0])
    is_failure = any(fraction > err_fraction for _, fraction, _ in entries)
    return FailureReport(is_failure, tuple(entries), err_fraction, mode)


def depth_rmse(d: FloatMap, d_gt: FloatMap) -> float:
    """Root-mean-square depth error over jointly valid points.

    A map without an explicit validity mask treats nonzero depth as valid.
    """

    def valid_of(m: FloatMap) -> np.ndarray:
        return m.valid_mask() if m.validity is not None else m.data != 0

    if d.shape != d_gt.shape:
        raise ValueError(f"depth {d.shape} != reference {d_gt.shape}")
    joint = valid_of(d) & valid_of(d_gt)
    if not joint.any():
        raise ValueError("no jointly valid points for RMSE")
    diff = d.data[joint] - d_gt.data[joint]
    return float(np.sqrt(np.mean(diff**2)))


def classification_metrics(pred: LabelMap, gt: LabelMap) -> ClassMetrics:
    """Pixel accuracies and IoU family from the 3x3 confusion matrix.

    Classes absent from the ground truth are excluded from mPA/mIoU and get
    a CPA of None.
    """
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} != ground truth {gt.shape}")
    cm = np.zeros((3, 3), dtype=np.int64)
    np.add.at(cm, (gt.labels.ravel(), pred.labels.ravel()), 1)
    total = cm.sum()
    gt_counts = cm.sum(axis=1)
    pred_counts = cm.sum(axis=0)
    pa = float(np.trace(cm) / total)
    cpa = []
    ious = []
    weights = []
    for c in range(3):
        if gt_counts[c] == 0:
            cpa.append(None)
            continue
        cpa.append(float(cm[c, c] / gt_counts[c]))
        union = gt_counts[c] + pred_counts[c] - cm[c, c]
        ious.append(float(cm[c, c] / union))
        weights.append(gt_counts[c] / total)
    present = [v for v in cpa if v is not None]
    return ClassMetrics(
        pa=pa,
        mpa=float(np.mean(present)),
        miou=float(np.mean(ious)),
        fwiou=float(np.sum(np.asarray(weights) * np.asarray(ious))),
        cpa=tuple(cpa),
    )


def render_report(rows) -> str:
    """Evaluation rows as CSV text with the fixed column order."""
    import io

    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS)
    writer.writeheader()
    for row in rows:
        writer.writerow({c: _cell(row.get(c)) for c in REPORT_COLUMNS})
    return buf.getvalue()


def write_report(path, rows) -> None:
    """Write evaluation rows as CSV with the fixed column order."""
    with open(path, "w", newline="") as f:
        f.write(render_report(rows))


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, float):
        return f"{value:.6g}"
    return value


def read_report(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))
