import numpy as np
import pytest

from helpers import plane_phase_map

from fppkit import formats
from fppkit.cli import run
from fppkit.evaluation import read_report
from fppkit.phase import wrap
from fppkit.reconstruct import parse_ply, save_calibration, synthetic_calibration
from fppkit.scenes import SceneSpec, generate_scene, save_scene


@pytest.fixture()
def scene_dir(tmp_path):
    spec = SceneSpec(dims=(96, 128), carrier_fringes=6, num_fringes=8, seed=5)
    truth = generate_scene(spec)
    d = tmp_path / "suite" / "scene_000"
    save_scene(d, spec, truth)
    return d


class TestSynth:
    def test_complex_suite_layout(self, tmp_path):
        out = tmp_path / "suite"
        code = run(["synth", "--suite", "complex", "--count", "5", "--seed", "7",
                    "--out", str(out)])
        assert code == 0
        dirs = sorted(p.name for p in out.iterdir())
        assert dirs == [f"scene_{i:03d}" for i in range(5)]
        assert (out / "scene_000" / "scene.txt").exists()

    def test_rerun_is_byte_identical(self, tmp_path):
        out = tmp_path / "suite"
        args = ["synth", "--suite", "simple", "--count", "1", "--seed", "3",
                "--out", str(out)]
        assert run(args) == 0
        before = (out / "scene_000" / "phi_gt.fpm").read_bytes()
        stack_before = (out / "scene_000" / "stack_00.fpm").read_bytes()
        assert run(args) == 0
        assert (out / "scene_000" / "phi_gt.fpm").read_bytes() == before
        assert (out / "scene_000" / "stack_00.fpm").read_bytes() == stack_before


class TestExitCodes:
    def test_unknown_subcommand(self):
        assert run(["frobnicate"]) == 1

    def test_missing_required_flag(self):
        assert run(["unwrap"]) == 1

    def test_missing_input_file(self, tmp_path):
        assert run(["unwrap", "--method", "fspu", "--phi", str(tmp_path / "nope.fpm"),
                    "--out", str(tmp_path / "out")]) == 2

    def test_modu_requires_quality(self, tmp_path):
        phi = tmp_path / "phi.fpm"
        formats.save_fpm(phi, formats.FloatMap(np.zeros((4, 4))))
        assert run(["unwrap", "--method", "modu", "--phi", str(phi),
                    "--out", str(tmp_path / "out")]) == 1


class TestPipelineCommands:
    def test_decode_pmi_classify(self, scene_dir, tmp_path):
        dec = tmp_path / "dec"
        assert run(["decode", "--stack", str(scene_dir / "stack"), "--steps", "4",
                    "--out", str(dec)]) == 0
        phi = formats.load_fpm(dec / "phi.fpm")
        assert phi.shape == (96, 128)
        assert run(["pmi", "--stack", str(scene_dir / "stack"), "--steps", "4",
                    "--out", str(tmp_path / "scan")]) == 0
        assert run(["classify", "--pmi", str(tmp_path / "scan"),
                    "--out", str(tmp_path / "labels.pgm")]) == 0
        labels = formats.load_labelmap(tmp_path / "labels.pgm")
        assert labels.shape == (96, 128)

    def test_unwrap_and_eval(self, scene_dir, tmp_path):
        dec = tmp_path / "dec"
        run(["decode", "--stack", str(scene_dir / "stack"), "--steps", "4",
             "--out", str(dec)])
        assert run(["unwrap", "--phi", str(dec / "phi.fpm"),
                    "--mask", str(dec / "validity.pgm"),
                    "--method", "flood", "--out", str(tmp_path / "un")]) == 0
        phase = formats.load_fpm(tmp_path / "un_phase.fpm")
        k = formats.load_k16(tmp_path / "un_k.k16")
        assert np.allclose(phase.data, formats.load_fpm(dec / "phi.fpm").data
                           + 2 * np.pi * k, atol=1e-5)
        report_path = tmp_path / "report.csv"
        assert run(["eval", "--phi", str(tmp_path / "un_phase.fpm"),
                    "--validity", str(tmp_path / "un_v.pgm"),
                    "--gt", str(scene_dir / "phi_gt.fpm"),
                    "--thresholds", "0.001,0.01",
                    "--method", "flood", "--out", str(report_path)]) == 0
        rows = read_report(report_path)
        assert len(rows) == 2
        assert rows[0]["failure"] == "0"   # clean scene unwraps correctly

    def test_tpu_matches_ground_truth(self, scene_dir, tmp_path):
        out = tmp_path / "tpu.fpm"
        assert run(["tpu", "--stack", str(scene_dir / "stack"), "--steps", "4",
                    "--gray", str(scene_dir / "gray"), "--fringes", "8",
                    "--out", str(out)]) == 0
        absolute = formats.load_fpm(out)
        gt = formats.load_fpm(scene_dir / "phi_gt.fpm")
        valid = formats.load_labelmap(tmp_path / "tpu.pgm").labels == 2
        assert valid.mean() > 0.99
        assert np.allclose(absolute.data[valid], gt.data[valid], atol=1e-4)

    def test_label_command(self, scene_dir, tmp_path):
        dec = tmp_path / "dec"
        run(["decode", "--stack", str(scene_dir / "stack"), "--steps", "4",
             "--out", str(dec)])
        assert run(["label", "--modulation", str(dec / "modulation.fpm"),
                    "--depth", str(scene_dir / "depth_gt.fpm"),
                    "--out", str(tmp_path / "labels.pgm")]) == 0
        labels = formats.load_labelmap(tmp_path / "labels.pgm")
        assert set(np.unique(labels.labels)) <= {0, 1, 2}

    def test_reconstruct_command(self, tmp_path):
        calib = synthetic_calibration()
        phi, _ = plane_phase_map(calib, (16, 24), (0.0, 0.0, 1.0), 600.0)
        formats.save_fpm(tmp_path / "phi.fpm", phi)
        save_calibration(tmp_path / "calib.txt", calib)
        assert run(["reconstruct", "--phi", str(tmp_path / "phi.fpm"),
                    "--calib", str(tmp_path / "calib.txt"),
                    "--out", str(tmp_path / "cloud")]) == 0
        points = parse_ply((tmp_path / "cloud.ply").read_bytes())
        assert len(points) == 16 * 24
        # float32 phase quantization moves depth by well under a unit
        assert np.max(np.abs(points[:, 2] - 600.0)) < 0.5
        depth = formats.load_fpm(tmp_path / "cloud_depth.fpm")
        assert depth.data.max() > 0


class TestBench:
    def test_simple_suite_has_zero_failures(self, tmp_path):
        out = tmp_path / "suite"
        for i in range(2):
            spec = SceneSpec(dims=(96, 128), carrier_fringes=6, num_fringes=8, seed=i)
            save_scene(out / f"scene_{i:03d}", spec, generate_scene(spec))
        report = tmp_path / "bench.csv"
        assert run(["bench", "--suite-dir", str(out),
                    "--methods", "flood,fspu", "--masks", "oracle,none",
                    "--thresholds", "0.001", "--out", str(report)]) == 0
        rows = read_report(report)
        assert len(rows) == 2 * 2 * 2
        assert all(r["failure"] == "0" for r in rows)
