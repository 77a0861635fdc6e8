"""Deterministic synthetic scene generator for desk-scale benchmarks.

A scene is a linear fringe carrier plus a non-negative phase relief
(tilt, Gaussian bumps, rectangular steps), degraded by reflectivity
patches, shadow polygons, per-frame motion blur, and additive Gaussian
noise. The generator also emits everything a real temporal-phase-unwrapping
rig would provide: the continuous phase, fringe orders, a Gray-code pattern
set, a depth map, and three-class labels.

Labels follow the error budget rather than cosmetics: a point is unreliable
when the predicted random phase error sigma_phi = sqrt(2)*sigma/(I''*sqrt(N))
exceeds pi/4, when the deterministic decode bias of the degraded (noise-free)
stack exceeds pi/4, when it sits within a blur kernel of a step edge, or when
it touches a 4-neighbor whose true phase differs by nearly pi or more. The
last rule makes the reliable-point set 4-connected-consistent by
construction, so a correct unwrapper anchored inside a reliable region can
never cross a phase discontinuity.

The carrier spans fewer fringes than the Gray code addresses (12 of 16 by
default), leaving four fringes of headroom for the relief.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.ndimage import binary_dilation, uniform_filter1d

from fppkit.formats import (
    FloatMap,
    FringeStack,
    LabelMap,
    load_fpm,
    load_k16,
    load_labelmap,
    load_stack,
    save_fpm,
    save_k16,
    save_labelmap,
    save_stack,
)
from fppkit.graycode import (
    GraycodeSet,
    graycode_bits_from_phase,
    linear_carrier,
)
from fppkit.phase import TWO_PI, decode_modulation, decode_wrapped, synthesize_fringes, wrap

SIGMA_PHI_LIMIT = np.pi / 4
DISCONTINUITY_LIMIT = np.pi - 0.25   # headroom below pi for noise on top
DEPTH_BASE = 10.0                    # depth units at zero relief
SUITE_NAMES = ("simple", "reflectivity", "blur", "discontinuity", "complex")


class SceneSpecError(ValueError):
    """Scene specification cannot be rendered consistently."""


@dataclass(frozen=True)
class Bump:
    cx: float
    cy: float
    sigma: float
    height: float


@dataclass(frozen=True)
class Step:
    x0: int
    y0: int
    x1: int
    y1: int
    height: float


@dataclass(frozen=True)
class Patch:
    x0: int
    y0: int
    x1: int
    y1: int
    factor: float


@dataclass(frozen=True)
class SceneSpec:
    dims: tuple = (256, 256)
    num_fringes: int = 16         # Gray-code capacity
    carrier_fringes: int = 12     # fringes actually spanned by the carrier
    phase_steps: int = 4
    tilt: tuple = (0.0, 0.0)      # rad/px along x and y
    bumps: tuple = ()
    steps: tuple = ()
    patches: tuple = ()
    shadows: tuple = ()           # polygons: tuples of (x, y) vertices
    noise_sigma: float = 0.0
    blur_length: int = 1
    blur_direction: str = "horizontal"
    background: float = 100.0
    modulation: float = 60.0
    seed: int = 0

    def __post_init__(self):
        if self.carrier_fringes < 1:
            raise SceneSpecError("need at least one carrier fringe")
        if self.noise_sigma < 0:
            raise SceneSpecError("noise sigma must be non-negative")
        if self.blur_length < 1:
            raise SceneSpecError("blur length must be >= 1 px")
        if self.blur_direction not in ("horizontal", "vertical"):
            raise SceneSpecError(f"unknown blur direction {self.blur_direction!r}")
        for p in self.patches:
            if not 0.0 <= p.factor <= 1.0:
                raise SceneSpecError(f"reflectivity factor {p.factor} outside [0, 1]")


@dataclass(frozen=True)
class SceneTruth:
    phi_gt: FloatMap          # continuous phase, valid where not background
    k_gt: np.ndarray          # integer fringe orders
    label_gt: LabelMap
    depth_gt: FloatMap
    stack: FringeStack        # degraded fringe images
    graycode: GraycodeSet     # clean ground-truth pattern set


def polygon_mask(vertices, dims) -> np.ndarray:
    """Even-odd rasterization of a polygon over pixel coordinates (x, y)."""
    h, w = dims
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    inside = np.zeros((h, w), dtype=bool)
    pts = list(vertices)
    n = len(pts)
    for i in range(n):
        x1, y1 = pts[i]
        x2, y2 = pts[(i + 1) % n]
        if y1 == y2:
            continue
        crosses = (ys >= min(y1, y2)) & (ys < max(y1, y2))
        x_at = x1 + (ys - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (xs < x_at)
    return inside


def _rect_mask(x0, y0, x1, y1, dims) -> np.ndarray:
    mask = np.zeros(dims, dtype=bool)
    mask[max(0, y0) : max(0, y1), max(0, x0) : max(0, x1)] = True
    return mask


def _relief(spec: SceneSpec) -> np.ndarray:
    h, w = spec.dims
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    out = spec.tilt[0] * xs + spec.tilt[1] * ys
    for b in spec.bumps:
        out += b.height * np.exp(
            -((xs - b.cx) ** 2 + (ys - b.cy) ** 2) / (2.0 * b.sigma**2)
        )
    for s in spec.steps:
        out += s.height * _rect_mask(s.x0, s.y0, s.x1, s.y1, spec.dims)
    return out


def _reflectivity(spec: SceneSpec) -> np.ndarray:
    out = np.ones(spec.dims)
    for p in spec.patches:
        out[_rect_mask(p.x0, p.y0, p.x1, p.y1, spec.dims)] *= p.factor
    for poly in spec.shadows:
        out[polygon_mask(poly, spec.dims)] = 0.0
    return out


def _blur(frame: np.ndarray, spec: SceneSpec) -> np.ndarray:
    if spec.blur_length <= 1:
        return frame
    axis = 1 if spec.blur_direction == "horizontal" else 0
    return uniform_filter1d(frame, size=spec.blur_length, axis=axis, mode="nearest")


def _step_edge_band(spec: SceneSpec) -> np.ndarray:
    """Points within one blur kernel of any step discontinuity."""
    h, w = spec.dims
    band = np.zeros((h, w), dtype=bool)
    if spec.blur_length <= 1 or not spec.steps:
        return band
    edges = np.zeros((h, w), dtype=bool)
    for s in spec.steps:
        rect = _rect_mask(s.x0, s.y0, s.x1, s.y1, spec.dims)
        inner = np.zeros_like(rect)
        inner[1:-1, 1:-1] = (
            rect[1:-1, 1:-1] & rect[:-2, 1:-1] & rect[2:, 1:-1] & rect[1:-1, :-2] & rect[1:-1, 2:]
        )
        edges |= rect & ~inner
    size = 2 * spec.blur_length + 1
    return binary_dilation(edges, structure=np.ones((size, size), dtype=bool))


def _discontinuity_adjacent(phi_gt: np.ndarray) -> np.ndarray:
    """Both endpoints of 4-edges whose true phase jump is close to pi."""
    out = np.zeros(phi_gt.shape, dtype=bool)
    dx = np.abs(np.diff(phi_gt, axis=1)) >= DISCONTINUITY_LIMIT
    out[:, :-1] |= dx
    out[:, 1:] |= dx
    dy = np.abs(np.diff(phi_gt, axis=0)) >= DISCONTINUITY_LIMIT
    out[:-1, :] |= dy
    out[1:, :] |= dy
    return out


def generate_scene(spec: SceneSpec) -> SceneTruth:
    """Render a scene spec into ground truth plus a degraded fringe stack."""
    h, w = spec.dims
    carrier = linear_carrier(spec.carrier_fringes, spec.dims, "vertical")
    relief = _relief(spec)
    if relief.min() < 0:
        raise SceneSpecError("relief must be non-negative (carrier anchors at -pi)")
    phi_gt = carrier + relief
    half_idx_max = 2 ** (np.ceil(np.log2(spec.num_fringes)).astype(int) + 1)
    if np.ceil(phi_gt.max() / np.pi) >= half_idx_max:
        raise SceneSpecError(
            "relief pushes the phase beyond the Gray-code range; "
            "lower the primitives or the carrier fringe count"
        )

    reflect = _reflectivity(spec)
    mod_map = spec.modulation * reflect
    bg_map = np.full(spec.dims, spec.background)

    clean = synthesize_fringes(phi_gt, bg_map, mod_map, spec.phase_steps)
    blurred = [_blur(f.data, spec) for f in clean.frames]
    rng = np.random.default_rng(spec.seed)
    frames = []
    for f in blurred:
        if spec.noise_sigma > 0:
            f = f + rng.normal(0.0, spec.noise_sigma, size=f.shape)
        frames.append(FloatMap(f))
    stack = FringeStack(tuple(frames))

    # effective (post-blur) modulation and deterministic decode bias
    degraded_clean = FringeStack(tuple(FloatMap(f) for f in blurred))
    mod_eff = decode_modulation(degraded_clean).data
    phi_clean = decode_wrapped(degraded_clean)
    bias = np.abs(wrap(phi_clean.data - wrap(phi_gt)))
    bias[~phi_clean.valid_mask()] = 0.0

    background_pts = mod_eff <= 2.0
    with np.errstate(divide="ignore"):
        sigma_phi = np.where(
            background_pts,
            np.inf,
            np.sqrt(2.0) * spec.noise_sigma / (mod_eff * np.sqrt(spec.phase_steps)),
        )
    unreliable = (
        (sigma_phi > SIGMA_PHI_LIMIT)
        | (bias > SIGMA_PHI_LIMIT)
        | _step_edge_band(spec)
        | _discontinuity_adjacent(phi_gt)
    )
    labels = np.full(spec.dims, 2, dtype=np.uint8)
    labels[unreliable] = 1
    labels[background_pts] = 0
    label_gt = LabelMap(labels)

    k_gt = np.round((phi_gt - wrap(phi_gt)) / TWO_PI).astype(np.int64)
    depth = np.where(background_pts, 0.0, DEPTH_BASE + relief)

    gray_planes = graycode_bits_from_phase(phi_gt, spec.num_fringes)
    gray_images = tuple(
        FloatMap(bg_map + mod_map * (2.0 * p - 1.0)) for p in gray_planes
    )
    graycode = GraycodeSet(
        num_fringes=spec.num_fringes,
        code_images=gray_images,
        threshold=FloatMap(bg_map),
    )

    return SceneTruth(
        phi_gt=FloatMap(phi_gt, validity=~background_pts),
        k_gt=k_gt,
        label_gt=label_gt,
        depth_gt=FloatMap(depth, validity=~background_pts),
        stack=stack,
        graycode=graycode,
    )


# ---------------------------------------------------------------------------
# Benchmark suites

_SUITE_TAG = {name: i for i, name in enumerate(SUITE_NAMES)}


def _geometry(rng, margin=70):
    """Gentle bumps away from the borders; slopes stay far below pi."""
    bumps = []
    for _ in range(int(rng.integers(1, 3))):
        bumps.append(
            Bump(
                cx=float(rng.uniform(margin, 256 - margin)),
                cy=float(rng.uniform(margin, 256 - margin)),
                sigma=float(rng.uniform(18, 34)),
                height=float(rng.uniform(0.8, 2.4)),
            )
        )
    tilt = (float(rng.uniform(0.0, 0.004)), float(rng.uniform(0.0, 0.004)))
    return tilt, tuple(bumps)


def _random_step(rng, x_band=(40, 216), tall=True) -> Step:
    side_x = int(rng.integers(50, 76))
    side_y = int(rng.integers(50, 90))
    x0 = int(rng.integers(x_band[0], max(x_band[0] + 1, x_band[1] - side_x)))
    y0 = int(rng.integers(40, 140))
    body = float(rng.uniform(0.8, 2.6)) * (1 if rng.random() < 0.5 else -1)
    if body < 0:
        height = body + TWO_PI
    elif tall and rng.random() < 0.5:
        height = body + TWO_PI
    else:
        height = body
    return Step(x0, y0, x0 + side_x, y0 + side_y, float(height))


def _random_steps(rng) -> tuple:
    """One or two steps in disjoint x-bands so their reliefs never stack."""
    if rng.random() < 0.5:
        return (_random_step(rng),)
    return (
        _random_step(rng, x_band=(30, 120)),
        _random_step(rng, x_band=(130, 226), tall=False),
    )


def _random_patch(rng) -> Patch:
    x0 = int(rng.integers(30, 150))
    y0 = int(rng.integers(30, 150))
    return Patch(
        x0,
        y0,
        x0 + int(rng.integers(36, 64)),
        y0 + int(rng.integers(36, 64)),
        factor=float(rng.uniform(0.042, 0.055)),
    )


def _random_shadow(rng):
    cx = float(rng.uniform(60, 196))
    cy = float(rng.uniform(60, 196))
    r = float(rng.uniform(22, 40))
    angles = np.sort(rng.uniform(0, TWO_PI, size=int(rng.integers(4, 7))))
    return tuple(
        (cx + r * np.cos(a), cy + r * np.sin(a)) for a in angles
    )


def scene_suite(name: str, count: int, master_seed: int):
    """Deterministic family of scene specs for one degradation category."""
    if name not in SUITE_NAMES:
        raise ValueError(f"unknown suite {name!r}; choose from {SUITE_NAMES}")
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng([_SUITE_TAG[name], master_seed])
    specs = []
    for _ in range(count):
        tilt, bumps = _geometry(rng)
        seed = int(rng.integers(0, 2**31))
        base = SceneSpec(tilt=tilt, bumps=bumps, seed=seed)
        if name == "simple":
            spec = base
        elif name == "reflectivity":
            spec = replace(
                base,
                noise_sigma=4.0,
                patches=tuple(_random_patch(rng) for _ in range(int(rng.integers(1, 3)))),
            )
        elif name == "blur":
            spec = replace(
                base,
                noise_sigma=0.8,
                steps=(_random_step(rng),),
                blur_length=int(rng.choice((5, 7, 9))),
                blur_direction="horizontal" if rng.random() < 0.7 else "vertical",
            )
        elif name == "discontinuity":
            spec = replace(
                base,
                noise_sigma=float(rng.choice((0.0, 0.5))),
                steps=_random_steps(rng),
            )
        else:  # complex: at least two degradation kinds per scene
            kinds = set(rng.permutation(3)[: int(rng.integers(2, 4))].tolist())
            spec = replace(base, noise_sigma=1.0)
            if 0 in kinds:
                spec = replace(spec, shadows=(_random_shadow(rng),))
            if 1 in kinds:
                spec = replace(spec, steps=(_random_step(rng),))
            if 2 in kinds:
                spec = replace(spec, blur_length=int(rng.choice((5, 7))))
        specs.append(spec)
    return specs


def degradation_kinds(spec: SceneSpec) -> set:
    kinds = set()
    if spec.patches:
        kinds.add("reflectivity")
    if spec.steps:
        kinds.add("discontinuity")
    if spec.shadows:
        kinds.add("shadow")
    if spec.blur_length > 1:
        kinds.add("blur")
    return kinds


# ---------------------------------------------------------------------------
# Scene spec text format: one key per line, primitives repeatable

def format_scene_spec(spec: SceneSpec) -> str:
    lines = [
        f"dims = {spec.dims[0]} {spec.dims[1]}",
        f"num_fringes = {spec.num_fringes}",
        f"carrier_fringes = {spec.carrier_fringes}",
        f"phase_steps = {spec.phase_steps}",
        f"tilt = {spec.tilt[0]!r} {spec.tilt[1]!r}",
        f"noise_sigma = {spec.noise_sigma!r}",
        f"blur = {spec.blur_length} {spec.blur_direction}",
        f"background = {spec.background!r}",
        f"modulation = {spec.modulation!r}",
        f"seed = {spec.seed}",
    ]
    for b in spec.bumps:
        lines.append(f"bump = {b.cx!r} {b.cy!r} {b.sigma!r} {b.height!r}")
    for s in spec.steps:
        lines.append(f"step = {s.x0} {s.y0} {s.x1} {s.y1} {s.height!r}")
    for p in spec.patches:
        lines.append(f"patch = {p.x0} {p.y0} {p.x1} {p.y1} {p.factor!r}")
    for poly in spec.shadows:
        coords = " ".join(f"{x!r} {y!r}" for x, y in poly)
        lines.append(f"shadow = {coords}")
    return "\n".join(lines) + "\n"


def parse_scene_spec(text: str) -> SceneSpec:
    fields = {"bumps": [], "steps": [], "patches": [], "shadows": []}
    for raw in text.splitlines():
        line = raw.partition("#")[0].strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        key = key.strip()
        parts = value.split()
        if key == "dims":
            fields["dims"] = (int(parts[0]), int(parts[1]))
        elif key in ("num_fringes", "carrier_fringes", "phase_steps", "seed"):
            fields[key] = int(parts[0])
        elif key == "tilt":
            fields["tilt"] = (float(parts[0]), float(parts[1]))
        elif key in ("noise_sigma", "background", "modulation"):
            fields[key] = float(parts[0])
        elif key == "blur":
            fields["blur_length"] = int(parts[0])
            fields["blur_direction"] = parts[1]
        elif key == "bump":
            fields["bumps"].append(Bump(*map(float, parts)))
        elif key == "step":
            fields["steps"].append(
                Step(int(parts[0]), int(parts[1]), int(parts[2]), int(parts[3]), float(parts[4]))
            )
        elif key == "patch":
            fields["patches"].append(
                Patch(int(parts[0]), int(parts[1]), int(parts[2]), int(parts[3]), float(parts[4]))
            )
        elif key == "shadow":
            coords = list(map(float, parts))
            fields["shadows"].append(
                tuple((coords[i], coords[i + 1]) for i in range(0, len(coords), 2))
            )
        else:
            raise SceneSpecError(f"unknown scene key {key!r}")
    for name in ("bumps", "steps", "patches", "shadows"):
        fields[name] = tuple(fields[name])
    return SceneSpec(**fields)


# ---------------------------------------------------------------------------
# On-disk scene layout

def save_scene(directory, spec: SceneSpec, truth: SceneTruth) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "scene.txt").write_text(format_scene_spec(spec))
    save_stack(directory / "stack", truth.stack)
    save_fpm(directory / "phi_gt.fpm", truth.phi_gt)
    save_k16(directory / "k_gt.k16", truth.k_gt)
    save_fpm(directory / "depth_gt.fpm", truth.depth_gt)
    save_labelmap(directory / "labels_gt.pgm", truth.label_gt)
    for i, img in enumerate(truth.graycode.code_images):
        save_fpm(directory / f"gray_{i:02d}.fpm", img)
    save_fpm(directory / "gray_ref.fpm", truth.graycode.threshold)


def load_scene(directory):
    directory = Path(directory)
    spec = parse_scene_spec((directory / "scene.txt").read_text())
    stack = load_stack(directory / "stack", spec.phase_steps)
    n_planes = len(sorted(directory.glob("gray_??.fpm")))
    graycode = GraycodeSet(
        num_fringes=spec.num_fringes,
        code_images=tuple(load_fpm(directory / f"gray_{i:02d}.fpm") for i in range(n_planes)),
        threshold=load_fpm(directory / "gray_ref.fpm"),
    )
    labels = load_labelmap(directory / "labels_gt.pgm")
    background = labels.labels == 0
    truth = SceneTruth(
        phi_gt=load_fpm(directory / "phi_gt.fpm").with_validity(~background),
        k_gt=load_k16(directory / "k_gt.k16"),
        label_gt=labels,
        depth_gt=load_fpm(directory / "depth_gt.fpm").with_validity(~background),
        stack=stack,
        graycode=graycode,
    )
    return spec, truth
