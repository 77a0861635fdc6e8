"""Composite PMI construction: fringe stack -> normalized three-channel image.

The five steps: decode the stack, drop background points by modulation
threshold, remove small 4-connected regions, intra-frame normalize the
modulation and background maps, normalize the phase, and stack the three
channels. Intra-frame normalization discards the top one percent of valid
values before rescaling so that a few saturated points cannot compress the
rest of the map; this is what makes composites from different illumination
levels comparable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fppkit.formats import (
    FloatMap,
    FringeStack,
    LabelMap,
    PMIImage,
    load_fpm,
    load_labelmap,
    save_fpm,
    save_labelmap,
)
from fppkit.masking import remove_small_regions
from fppkit.phase import TWO_PI, decode_background, decode_modulation, decode_wrapped

DEFAULT_BACKGROUND_THRESHOLD = 2.0
DEFAULT_MIN_REGION_FRACTION = 0.01
TOP_FRACTION = 0.01


@dataclass(frozen=True)
class NormalizationReport:
    """Summary of one intra-frame normalization pass."""

    t_max: float
    removed_count: int


def intra_frame_normalize(map_: FloatMap):
    """Rescale a map by its top-percentile-clipped maximum.

    The top ceil(1% of valid points) values are excluded (capped so at least
    one value remains); T_max is the largest remaining value; values above
    T_max clip to 1. Invalid points stay invalid with value 0.

    Returns the normalized map and a :class:`NormalizationReport`.
    """
    valid = map_.valid_mask()
    values = map_.data[valid]
    if values.size == 0:
        raise ValueError("cannot normalize a map with no valid points")
    removed = min(math.ceil(TOP_FRACTION * values.size), values.size - 1)
    order = np.sort(values)[::-1]
    t_max = float(order[removed])
    if t_max <= 0.0:
        raise ValueError(f"degenerate map: T_max = {t_max} is not positive")
    out = np.minimum(map_.data / t_max, 1.0)
    out[~valid] = 0.0
    return FloatMap(out, validity=valid), NormalizationReport(t_max, removed)


def normalize_phase(phi: FloatMap) -> FloatMap:
    """Map wrapped phase from (-pi, pi] linearly onto [0, 1]; invalid -> 0."""
    data = phi.data
    if data.size and (data.min() <= -np.pi or data.max() > np.pi):
        raise ValueError("wrapped phase must lie in (-pi, pi]")
    valid = phi.valid_mask()
    out = (data + np.pi) / TWO_PI
    out[~valid] = 0.0
    return FloatMap(out, validity=valid)


def build_pmi(
    stack: FringeStack,
    background_threshold: float = DEFAULT_BACKGROUND_THRESHOLD,
    min_region_fraction: float = DEFAULT_MIN_REGION_FRACTION,
):
    """Run the five-step composite procedure on a fringe stack.

    Returns (pmi, wrapped_phase, modulation, background, validity); the
    float maps carry the final validity mask. Raises if nothing survives the
    background threshold.
    """
    phi = decode_wrapped(stack)
    background = decode_background(stack)
    modulation = decode_modulation(stack)

    validity = phi.valid_mask() & (modulation.data > background_threshold)
    validity = remove_small_regions(validity, min_region_fraction)

    modulation = modulation.with_validity(validity)
    background = background.with_validity(validity)
    phi_masked = FloatMap(np.where(validity, phi.data, 0.0), validity=validity)

    mod_norm, _ = intra_frame_normalize(modulation)
    bg_norm, _ = intra_frame_normalize(background)
    phase_norm = normalize_phase(phi_masked)

    pmi = PMIImage(phase_norm, mod_norm, bg_norm)
    return pmi, phi_masked, modulation, background, validity


# ---------------------------------------------------------------------------
# On-disk layout consumed by the classifier component

def pmi_paths(prefix):
    prefix = Path(prefix)
    return {
        "phase": prefix.with_name(prefix.name + "_p.fpm"),
        "modulation": prefix.with_name(prefix.name + "_m.fpm"),
        "intensity": prefix.with_name(prefix.name + "_i.fpm"),
        "validity": prefix.with_name(prefix.name + "_v.pgm"),
    }


def save_pmi(prefix, pmi: PMIImage, validity: np.ndarray) -> None:
    """Write the three channels as .fpm plus the validity as a 3-class PGM.

    Validity uses label 2 for valid and 0 for invalid points, matching the
    class convention of the label maps.
    """
    paths = pmi_paths(prefix)
    save_fpm(paths["phase"], pmi.phase)
    save_fpm(paths["modulation"], pmi.modulation)
    save_fpm(paths["intensity"], pmi.intensity)
    save_labelmap(paths["validity"], LabelMap(np.where(validity, 2, 0).astype(np.uint8)))


def load_pmi(prefix):
    """Read a PMI triplet plus validity written by :func:`save_pmi`."""
    paths = pmi_paths(prefix)
    validity = load_labelmap(paths["validity"]).labels == 2
    pmi = PMIImage(
        load_fpm(paths["phase"]).with_validity(validity),
        load_fpm(paths["modulation"]).with_validity(validity),
        load_fpm(paths["intensity"]).with_validity(validity),
    )
    return pmi, validity
