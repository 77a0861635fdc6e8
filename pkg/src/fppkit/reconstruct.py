"""Absolute phase to 3D: projector correspondence, epipolar completion,
direct-linear-transform triangulation, and point-cloud export.

Image coordinates are (x, y) = (column, row). The absolute phase fixes the
projector coordinate along the fringe axis (x for vertical fringes, y for
horizontal); the epipolar line through the camera pixel supplies the other
coordinate. Triangulation solves the stacked projection equations by the
smallest singular vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fppkit.formats import FloatMap
from fppkit.phase import TWO_PI

DEGENERATE_EPS = 1e-12
RANK_EPS = 1e-9

DIRECTIONS = ("vertical", "horizontal")


class DegenerateGeometryError(ValueError):
    """Epipolar line parallel to the fringe axis or point at infinity."""


@dataclass(frozen=True)
class SystemCalibration:
    camera: np.ndarray        # 3x4 projection matrix
    projector: np.ndarray     # 3x4 projection matrix
    fundamental: np.ndarray   # 3x3, camera pixel -> projector epipolar line
    direction: str            # fringe orientation on the projector
    period: float             # fringe period in projector pixels
    order_offset: int = 0     # global integer fringe-order offset

    def __post_init__(self):
        cam = np.asarray(self.camera, dtype=np.float64).reshape(3, 4)
        proj = np.asarray(self.projector, dtype=np.float64).reshape(3, 4)
        fund = np.asarray(self.fundamental, dtype=np.float64).reshape(3, 3)
        for name, m in (("camera", cam), ("projector", proj)):
            s = np.linalg.svd(m, compute_uv=False)
            if s[2] <= RANK_EPS * s[0]:
                raise ValueError(f"{name} matrix is rank-deficient")
        s = np.linalg.svd(fund, compute_uv=False)
        if s[2] > RANK_EPS * s[0]:
            raise ValueError("fundamental matrix must be rank 2")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        if self.period <= 0:
            raise ValueError("fringe period must be positive")
        object.__setattr__(self, "camera", cam)
        object.__setattr__(self, "projector", proj)
        object.__setattr__(self, "fundamental", fund)
        object.__setattr__(self, "order_offset", int(self.order_offset))


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray    # (N, 3) coordinates in calibration units
    pixels: np.ndarray    # (N, 2) source camera pixel (x, y)

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        pixels = np.asarray(self.pixels).reshape(-1, 2)
        if len(points) != len(pixels):
            raise ValueError("points and source pixels must pair up")
        if points.size and not np.all(np.isfinite(points)):
            raise ValueError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "pixels", pixels)

    def __len__(self) -> int:
        return len(self.points)


def phase_to_projector_coord(phi, period: float, offset: int = 0):
    """Projector coordinate along the fringe axis: (phi/2pi + offset)*period."""
    phi = np.asarray(phi, dtype=np.float64)
    out = (phi / TWO_PI + offset) * period
    return out if out.ndim else float(out)


def epipolar_complete(u_p, pixel, fundamental, direction: str):
    """Complete the projector correspondence from its epipolar line.

    Vertical fringes fix x_p = u_p and solve the line for y_p; horizontal
    fringes do the converse. Raises when the line is parallel to the fringe
    axis.
    """
    x_c, y_c = pixel
    line = np.asarray(fundamental, dtype=np.float64) @ np.array([x_c, y_c, 1.0])
    a, b, c = line
    if direction == "vertical":
        if abs(b) < DEGENERATE_EPS:
            raise DegenerateGeometryError("epipolar line parallel to vertical fringes")
        return float(u_p), float(-(a * u_p + c) / b)
    if direction == "horizontal":
        if abs(a) < DEGENERATE_EPS:
            raise DegenerateGeometryError("epipolar line parallel to horizontal fringes")
        return float(-(b * u_p + c) / a), float(u_p)
    raise ValueError(f"direction must be one of {DIRECTIONS}")


def triangulate(x_c, y_c, x_p, y_p, camera, projector):
    """Linear least-squares 3D point from one camera/projector correspondence."""
    camera = np.asarray(camera, dtype=np.float64)
    projector = np.asarray(projector, dtype=np.float64)
    a = np.stack(
        [
            x_c * camera[2] - camera[0],
            y_c * camera[2] - camera[1],
            x_p * projector[2] - projector[0],
            y_p * projector[2] - projector[1],
        ]
    )
    _, _, vh = np.linalg.svd(a)
    x_h = vh[-1]
    if abs(x_h[3]) < DEGENERATE_EPS:
        raise DegenerateGeometryError("triangulated point at infinity")
    return tuple(x_h[:3] / x_h[3])


def project(matrix, points) -> np.ndarray:
    """Pinhole projection of (N, 3) points through a 3x4 matrix -> (N, 2)."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    homo = np.hstack([points, np.ones((len(points), 1))])
    img = homo @ np.asarray(matrix).T
    return img[:, :2] / img[:, 2:3]


def reconstruct(phi: FloatMap, calib: SystemCalibration):
    """Triangulate every valid pixel of an absolute phase map.

    Returns (cloud, depth): depth holds the Z coordinate per pixel, 0 where
    invalid; per-point geometric degeneracies invalidate only that point.
    """
    valid = phi.valid_mask()
    h, w = phi.shape
    ys, xs = np.nonzero(valid)
    if len(xs) == 0:
        return (
            PointCloud(np.empty((0, 3)), np.empty((0, 2), dtype=np.int64)),
            FloatMap(np.zeros((h, w)), validity=np.zeros((h, w), dtype=bool)),
        )
    u_p = phase_to_projector_coord(phi.data[ys, xs], calib.period, calib.order_offset)
    lines = calib.fundamental @ np.stack([xs, ys, np.ones(len(xs))])
    a, b, c = lines
    if calib.direction == "vertical":
        solvable = np.abs(b) >= DEGENERATE_EPS
        x_p = u_p
        y_p = np.where(solvable, -(a * u_p + c) / np.where(solvable, b, 1.0), 0.0)
    else:
        solvable = np.abs(a) >= DEGENERATE_EPS
        y_p = u_p
        x_p = np.where(solvable, -(b * u_p + c) / np.where(solvable, a, 1.0), 0.0)

    cam, proj = calib.camera, calib.projector
    n = len(xs)
    rows = np.empty((n, 4, 4))
    rows[:, 0] = xs[:, None] * cam[2] - cam[0]
    rows[:, 1] = ys[:, None] * cam[2] - cam[1]
    rows[:, 2] = x_p[:, None] * proj[2] - proj[0]
    rows[:, 3] = y_p[:, None] * proj[2] - proj[1]
    _, _, vh = np.linalg.svd(rows)
    x_h = vh[:, -1, :]
    finite = solvable & (np.abs(x_h[:, 3]) >= DEGENERATE_EPS)
    points = x_h[:, :3] / np.where(finite, x_h[:, 3], 1.0)[:, None]

    depth = np.zeros((h, w))
    depth_valid = np.zeros((h, w), dtype=bool)
    depth[ys[finite], xs[finite]] = points[finite, 2]
    depth_valid[ys[finite], xs[finite]] = True
    cloud = PointCloud(points[finite], np.stack([xs[finite], ys[finite]], axis=1))
    return cloud, FloatMap(depth, validity=depth_valid)


def export_ply(cloud: PointCloud) -> bytes:
    """ASCII PLY with one vertex element per point, 6-decimal coordinates."""
    header = (
        "ply\n"
        "format ascii 1.0\n"
        f"element vertex {len(cloud)}\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "end_header\n"
    )
    body = "".join(f"{x:.6f} {y:.6f} {z:.6f}\n" for x, y, z in cloud.points)
    return (header + body).encode("ascii")


def parse_ply(blob: bytes) -> np.ndarray:
    """Read back the vertices of an ASCII PLY written by :func:`export_ply`."""
    text = blob.decode("ascii").splitlines()
    if not text or text[0] != "ply":
        raise ValueError("not a PLY payload")
    count = 0
    body_at = 0
    for i, line in enumerate(text):
        if line.startswith("element vertex"):
            count = int(line.split()[-1])
        if line == "end_header":
            body_at = i + 1
            break
    else:
        raise ValueError("missing end_header")
    rows = [tuple(map(float, line.split())) for line in text[body_at : body_at + count]]
    return np.asarray(rows, dtype=np.float64).reshape(count, 3)


# ---------------------------------------------------------------------------
# Calibration text file: 12 camera values, 12 projector values, 9 fundamental
# values (all row-major), then direction, period, order offset. Whitespace
# separated; '#' starts a comment.

def save_calibration(path, calib: SystemCalibration) -> None:
    lines = ["# camera matrix (3x4, row-major)"]
    lines += [" ".join(repr(float(v)) for v in row) for row in calib.camera]
    lines.append("# projector matrix (3x4, row-major)")
    lines += [" ".join(repr(float(v)) for v in row) for row in calib.projector]
    lines.append("# fundamental matrix (3x3, row-major)")
    lines += [" ".join(repr(float(v)) for v in row) for row in calib.fundamental]
    lines.append("# fringe direction, period (projector px), global order offset")
    lines.append(f"{calib.direction} {float(calib.period)!r} {calib.order_offset}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_calibration(path) -> SystemCalibration:
    tokens = []
    for line in Path(path).read_text().splitlines():
        tokens.extend(line.partition("#")[0].split())
    if len(tokens) != 36:
        raise ValueError(f"calibration file needs 36 fields, found {len(tokens)}")
    values = [float(t) for t in tokens[:24]]
    fund = [float(t) for t in tokens[24:33]]
    return SystemCalibration(
        camera=np.array(values[:12]).reshape(3, 4),
        projector=np.array(values[12:24]).reshape(3, 4),
        fundamental=np.array(fund).reshape(3, 3),
        direction=tokens[33],
        period=float(tokens[34]),
        order_offset=int(tokens[35]),
    )


def skew(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])


def synthetic_calibration(
    period: float = 38.0, direction: str = "vertical", baseline: float = 60.0
) -> SystemCalibration:
    """A plausible desk-scale camera/projector pair for tests and demos.

    The projector sits at a lateral baseline with a slight toe-in; the
    fundamental matrix is derived from the same pose, so Eq.-style epipolar
    residuals are exactly zero for true correspondences.
    """
    k_c = np.array([[800.0, 0.0, 320.0], [0.0, 800.0, 240.0], [0.0, 0.0, 1.0]])
    k_p = np.array([[700.0, 0.0, 304.0], [0.0, 700.0, 228.0], [0.0, 0.0, 1.0]])
    angle = np.deg2rad(8.0)
    rot = np.array(
        [
            [np.cos(angle), 0.0, np.sin(angle)],
            [0.0, 1.0, 0.0],
            [-np.sin(angle), 0.0, np.cos(angle)],
        ]
    )
    t = np.array([-baseline, 0.0, 4.0])
    camera = k_c @ np.hstack([np.eye(3), np.zeros((3, 1))])
    projector = k_p @ np.hstack([rot, t[:, None]])
    fundamental = np.linalg.inv(k_p).T @ skew(t) @ rot @ np.linalg.inv(k_c)
    fundamental = fundamental / np.linalg.norm(fundamental)
    return SystemCalibration(camera, projector, fundamental, direction, period)
