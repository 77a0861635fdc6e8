import numpy as np
import pytest

from fppkit.formats import FloatMap
from fppkit.phase import TWO_PI
from fppkit.reconstruct import (
    DegenerateGeometryError,
    PointCloud,
    SystemCalibration,
    epipolar_complete,
    export_ply,
    load_calibration,
    parse_ply,
    phase_to_projector_coord,
    project,
    reconstruct,
    save_calibration,
    skew,
    synthetic_calibration,
    triangulate,
)


from helpers import plane_phase_map


def random_points_in_view(rng, n=100):
    z = rng.uniform(400.0, 900.0, n)
    x = rng.uniform(-0.25, 0.25, n) * z
    y = rng.uniform(-0.2, 0.2, n) * z
    return np.stack([x, y, z], axis=1)


class TestPhaseToProjector:
    def test_values(self):
        assert phase_to_projector_coord(9 * np.pi, 38.0) == pytest.approx(171.0, abs=1e-9)
        assert phase_to_projector_coord(0.0, 38.0) == 0.0
        assert phase_to_projector_coord(0.0, 38.0, offset=1) == 38.0


class TestEpipolarComplete:
    def test_skew_line_example(self):
        f = skew((-1.0, 0.0, 0.0))
        x_p, y_p = epipolar_complete(171.0, (10.0, 20.0), f, "vertical")
        assert (x_p, y_p) == (171.0, 20.0)

    def test_residual_zero(self):
        calib = synthetic_calibration()
        rng = np.random.default_rng(7)
        for point in random_points_in_view(rng, 20):
            x_c, y_c = project(calib.camera, point)[0]
            x_p_true, y_p_true = project(calib.projector, point)[0]
            x_p, y_p = epipolar_complete(
                x_p_true, (x_c, y_c), calib.fundamental, "vertical"
            )
            line = calib.fundamental @ np.array([x_c, y_c, 1.0])
            assert abs(np.array([x_p, y_p, 1.0]) @ line) < 1e-9
            assert y_p == pytest.approx(y_p_true, abs=1e-6)

    def test_degenerate_direction(self):
        # epipolar lines vertical: cannot complete vertical fringes
        f = skew((0.0, -1.0, 0.0))
        with pytest.raises(DegenerateGeometryError):
            epipolar_complete(5.0, (10.0, 20.0), f, "vertical")


class TestTriangulate:
    def test_hand_example(self):
        p_c = np.hstack([np.eye(3), np.zeros((3, 1))])
        p_p = np.hstack([np.eye(3), np.array([[-1.0], [0.0], [0.0]])])
        x, y, z = triangulate(0.0, 0.0, -0.2, 0.0, p_c, p_p)
        assert (x, y, z) == pytest.approx((0.0, 0.0, 5.0), abs=1e-9)

    def test_homogeneous_scale_invariance(self):
        calib = synthetic_calibration()
        point = np.array([30.0, -20.0, 600.0])
        (x_c, y_c), (x_p, y_p) = (
            project(calib.camera, point)[0],
            project(calib.projector, point)[0],
        )
        a = triangulate(x_c, y_c, x_p, y_p, calib.camera, calib.projector)
        b = triangulate(x_c, y_c, x_p, y_p, 3.7 * calib.camera, 0.2 * calib.projector)
        assert a == pytest.approx(b, abs=1e-6)

    def test_projection_round_trip(self):
        calib = synthetic_calibration()
        rng = np.random.default_rng(11)
        points = random_points_in_view(rng, 100)
        for point in points:
            x_c, y_c = project(calib.camera, point)[0]
            x_p, y_p = project(calib.projector, point)[0]
            got = triangulate(x_c, y_c, x_p, y_p, calib.camera, calib.projector)
            assert np.max(np.abs(np.asarray(got) - point)) < 1e-6
            back_c = project(calib.camera, got)[0]
            back_p = project(calib.projector, got)[0]
            assert np.max(np.abs(back_c - (x_c, y_c))) < 1e-6
            assert np.max(np.abs(back_p - (x_p, y_p))) < 1e-6


class TestReconstruct:
    def test_plane_scene(self):
        calib = synthetic_calibration()
        phi, truth = plane_phase_map(calib, (24, 32), (0.0, 0.0, 1.0), 600.0)
        cloud, depth = reconstruct(phi, calib)
        assert len(cloud) == 24 * 32
        assert np.max(np.abs(cloud.points[:, 2] - 600.0)) < 1e-6
        assert np.max(np.abs(depth.data - 600.0)) < 1e-6

    def test_empty_phase(self):
        calib = synthetic_calibration()
        phi = FloatMap(np.zeros((8, 8)), validity=np.zeros((8, 8), dtype=bool))
        cloud, depth = reconstruct(phi, calib)
        assert len(cloud) == 0
        assert not depth.validity.any()

    def test_step_height(self):
        calib = synthetic_calibration()
        near, _ = plane_phase_map(calib, (16, 32), (0.0, 0.0, 1.0), 580.0)
        far, _ = plane_phase_map(calib, (16, 32), (0.0, 0.0, 1.0), 620.0)
        stitched = np.where(np.arange(32) < 16, near.data, far.data)
        cloud, depth = reconstruct(FloatMap(stitched), calib)
        step = depth.data[:, 16:].mean() - depth.data[:, :16].mean()
        assert step == pytest.approx(40.0, abs=1e-6)

    def test_order_offset_equals_phase_shift(self):
        calib = synthetic_calibration()
        phi, _ = plane_phase_map(calib, (12, 16), (0.0, 0.0, 1.0), 600.0)
        shifted_calib = SystemCalibration(
            calib.camera,
            calib.projector,
            calib.fundamental,
            calib.direction,
            calib.period,
            order_offset=calib.order_offset + 1,
        )
        _, depth_a = reconstruct(FloatMap(phi.data + TWO_PI), calib)
        _, depth_b = reconstruct(phi, shifted_calib)
        assert np.allclose(depth_a.data, depth_b.data, atol=1e-9)


class TestPly:
    def test_single_point_layout(self):
        blob = export_ply(PointCloud(np.array([[1.0, 2.0, 3.0]]), np.array([[0, 0]])))
        text = blob.decode()
        assert "element vertex 1" in text
        assert text.endswith("1.000000 2.000000 3.000000\n")

    def test_empty_cloud(self):
        blob = export_ply(PointCloud(np.empty((0, 3)), np.empty((0, 2))))
        assert b"element vertex 0" in blob

    def test_reparse_round_trip(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(-5, 5, size=(17, 3)).round(4)
        blob = export_ply(PointCloud(pts, np.zeros((17, 2))))
        assert np.allclose(parse_ply(blob), pts, atol=1e-6)


class TestCalibrationFile:
    def test_round_trip(self, tmp_path):
        calib = synthetic_calibration(period=42.0, direction="horizontal")
        path = tmp_path / "calib.txt"
        save_calibration(path, calib)
        again = load_calibration(path)
        assert np.array_equal(again.camera, calib.camera)
        assert np.array_equal(again.projector, calib.projector)
        assert np.array_equal(again.fundamental, calib.fundamental)
        assert again.direction == "horizontal"
        assert again.period == 42.0

    def test_field_count_checked(self, tmp_path):
        path = tmp_path / "calib.txt"
        path.write_text("1 2 3\n")
        with pytest.raises(ValueError):
            load_calibration(path)

    def test_rank_validation(self):
        with pytest.raises(ValueError):
            SystemCalibration(
                camera=np.zeros((3, 4)),
                projector=np.hstack([np.eye(3), np.zeros((3, 1))]),
                fundamental=skew((1.0, 0.0, 0.0)),
                direction="vertical",
                period=38.0,
            )
        with pytest.raises(ValueError):
            SystemCalibration(
                camera=np.hstack([np.eye(3), np.zeros((3, 1))]),
                projector=np.hstack([np.eye(3), np.zeros((3, 1))]),
                fundamental=np.eye(3),   # full rank: not a fundamental matrix
                direction="vertical",
                period=38.0,
            )
