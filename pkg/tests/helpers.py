"""Shared helpers for the test suite."""

import numpy as np

from fppkit.formats import FloatMap
from fppkit.phase import TWO_PI
from fppkit.reconstruct import project


def plane_phase_map(calib, dims, normal, dist):
    """Absolute phase a camera would see for the plane normal . X = dist.

    Assumes the camera matrix is K[I|0] (camera at the origin), which is
    what :func:`fppkit.reconstruct.synthetic_calibration` provides.
    """
    h, w = dims
    k_inv = np.linalg.inv(calib.camera[:, :3])
    ys, xs = np.mgrid[0:h, 0:w]
    rays = k_inv @ np.stack([xs.ravel(), ys.ravel(), np.ones(h * w)])
    t = dist / (np.asarray(normal) @ rays)
    points = (rays * t).T
    proj_px = project(calib.projector, points)
    u_p = proj_px[:, 0] if calib.direction == "vertical" else proj_px[:, 1]
    phi = (u_p / calib.period - calib.order_offset) * TWO_PI
    return FloatMap(phi.reshape(h, w)), points.reshape(h, w, 3)
