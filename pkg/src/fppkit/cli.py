"""Command-line pipeline wiring.

Subcommands cover the full flow: synth (benchmark suites), decode, pmi,
classify, tpu, label, unwrap, eval, reconstruct, and bench. Exit codes:
0 success, 1 usage error, 2 data error. All outputs are written atomically
(temp file + rename), so re-running a command can never leave a torn file.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from fppkit import composite, evaluation, formats, graycode, labeling, masking, scenes
from fppkit.phase import decode_background, decode_modulation, decode_wrapped, wrap
from fppkit.reconstruct import export_ply, load_calibration, reconstruct
from fppkit.unwrap import flood_fill_unwrap, fspu_unwrap, modu_sort_unwrap

DEFAULT_MODULATION_THRESHOLD = 2.0
DEFAULT_REGION_FRACTION = 0.01
DEFAULT_ERROR_THRESHOLDS = (0.001, 0.01)

METHODS = ("flood", "modu", "fspu")
MASK_SOURCES = ("oracle", "modu", "none", "heuristic")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _atomic_write(path, blob: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_fpm(path, map_) -> None:
    _atomic_write(path, formats.encode_fpm(map_))


def _write_validity(path, validity) -> None:
    labels = formats.LabelMap(np.where(validity, 2, 0).astype(np.uint8))
    _atomic_write(path, formats.encode_labelmap(labels))


def _read_validity(path) -> np.ndarray:
    return formats.load_labelmap(path).labels == 2


# ---------------------------------------------------------------------------
# subcommands

def _cmd_decode(args) -> int:
    stack = formats.load_stack(args.stack, args.steps)
    out = Path(args.out)
    phi = decode_wrapped(stack)
    _write_fpm(out / "phi.fpm", phi)
    _write_fpm(out / "background.fpm", decode_background(stack))
    _write_fpm(out / "modulation.fpm", decode_modulation(stack))
    _write_validity(out / "validity.pgm", phi.valid_mask())
    return 0


def _cmd_pmi(args) -> int:
    stack = formats.load_stack(args.stack, args.steps)
    pmi, phi, mod, bg, validity = composite.build_pmi(
        stack,
        background_threshold=args.threshold,
        min_region_fraction=args.region_fraction,
    )
    paths = composite.pmi_paths(args.out)
    _atomic_write(paths["phase"], formats.encode_fpm(pmi.phase))
    _atomic_write(paths["modulation"], formats.encode_fpm(pmi.modulation))
    _atomic_write(paths["intensity"], formats.encode_fpm(pmi.intensity))
    _write_validity(paths["validity"], validity)
    return 0


def _cmd_classify(args) -> int:
    pmi, validity = composite.load_pmi(args.pmi)
    params = masking.HeuristicParams(q_low=args.q_low, tau_d=args.tau_d)
    labels = masking.heuristic_classify(pmi, validity, params)
    _atomic_write(args.out, formats.encode_labelmap(labels))
    return 0


def _cmd_unwrap(args) -> int:
    phi = formats.load_fpm(args.phi)
    if args.mask:
        mask = _read_validity(args.mask)
    else:
        mask = phi.valid_mask()
    if args.method == "modu":
        if not args.quality:
            raise UsageError("--quality is required for the modu method")
        quality = formats.load_fpm(args.quality)
        result = modu_sort_unwrap(phi, quality, mask)
    elif args.method == "flood":
        result = flood_fill_unwrap(phi, mask)
    else:
        result = fspu_unwrap(phi, mask)
    out = Path(args.out)
    _write_fpm(out.with_name(out.name + "_phase.fpm"), result.phase)
    _atomic_write(out.with_name(out.name + "_k.k16"), formats.encode_k16(result.k))
    _write_validity(out.with_name(out.name + "_v.pgm"), result.phase.valid_mask())
    return 0


def _cmd_tpu(args) -> int:
    stack = formats.load_stack(args.stack, args.steps)
    phi = decode_wrapped(stack)
    n_planes = len(sorted(Path(args.gray).parent.glob(Path(args.gray).name + "_??.fpm")))
    code_images = tuple(
        formats.load_fpm(f"{args.gray}_{i:02d}.fpm") for i in range(n_planes)
    )
    gc = graycode.GraycodeSet(
        num_fringes=args.fringes,
        code_images=code_images,
        threshold=formats.load_fpm(f"{args.gray}_ref.fpm"),
    )
    k, valid = graycode.decode_fringe_order(gc, phi.data)
    absolute = graycode.tpu_unwrap(phi.data, k)
    validity = valid & phi.valid_mask()
    out = Path(args.out)
    _write_fpm(out, formats.FloatMap(np.where(validity, absolute.data, 0.0), validity=validity))
    _atomic_write(out.with_suffix(".k16"), formats.encode_k16(np.where(validity, k, 0)))
    _write_validity(out.with_suffix(".pgm"), validity)
    return 0


def _cmd_label(args) -> int:
    modulation = formats.load_fpm(args.modulation)
    depth = formats.load_fpm(args.depth)
    if not args.raw_depth:
        depth = labeling.detect_outliers(depth)
    labels = labeling.make_labels(modulation, depth, modu_threshold=args.threshold)
    _atomic_write(args.out, formats.encode_labelmap(labels))
    return 0


def _cmd_eval(args) -> int:
    phi = formats.load_fpm(args.phi)
    if args.validity:
        phi = phi.with_validity(_read_validity(args.validity))
    gt = formats.load_fpm(args.gt)
    if args.gt_validity:
        gt = gt.with_validity(_read_validity(args.gt_validity))
    regions = masking.connected_components_4(phi.valid_mask())
    aligned, _ = evaluation.align_relative(phi, gt, regions)
    rows = []
    for threshold in args.thresholds:
        report = evaluation.detect_failure(aligned, gt, threshold, mode=args.mode)
        rows.append(
            {
                "map_id": args.id or Path(args.phi).stem,
                "method": args.method,
                "threshold": threshold,
                "failure": report.is_failure,
                "rmse": evaluation.depth_rmse(aligned, gt),
            }
        )
    _write_report(args.out, rows)
    return 0


def _write_report(path, rows) -> None:
    _atomic_write(path, evaluation.render_report(rows).encode())


def _cmd_synth(args) -> int:
    specs = scenes.scene_suite(args.suite, args.count, args.seed)
    out = Path(args.out)
    for i, spec in enumerate(specs):
        truth = scenes.generate_scene(spec)
        scenes.save_scene(out / f"scene_{i:03d}", spec, truth)
    return 0


def _cmd_reconstruct(args) -> int:
    phi = formats.load_fpm(args.phi)
    if args.validity:
        phi = phi.with_validity(_read_validity(args.validity))
    calib = load_calibration(args.calib)
    cloud, depth = reconstruct(phi, calib)
    out = Path(args.out)
    _atomic_write(out.with_name(out.name + ".ply"), export_ply(cloud))
    _write_fpm(out.with_name(out.name + "_depth.fpm"), depth)
    return 0


# ---------------------------------------------------------------------------
# benchmark

def scene_masks(truth, phi, modulation, sources=("oracle", "modu", "none")):
    """The unwrapping masks compared by the benchmark."""
    masks = {}
    decodable = phi.valid_mask()
    for source in sources:
        if source == "oracle":
            masks[source] = masking.mask_from_labels(truth.label_gt) & decodable
        elif source == "modu":
            masks[source] = masking.remove_small_regions(
                masking.threshold_mask(modulation, DEFAULT_MODULATION_THRESHOLD) & decodable,
                DEFAULT_REGION_FRACTION,
            )
        elif source == "none":
            masks[source] = decodable.copy()
        elif source == "heuristic":
            pmi, _, _, _, validity = composite.build_pmi(truth.stack)
            labels = masking.heuristic_classify(pmi, validity)
            masks[source] = masking.mask_from_labels(labels) & decodable
        else:
            raise ValueError(f"unknown mask source {source!r}")
    return masks


def run_unwrapper(method, phi, quality, mask):
    if method == "flood":
        return flood_fill_unwrap(phi, mask)
    if method == "modu":
        return modu_sort_unwrap(phi, quality, mask)
    if method == "fspu":
        return fspu_unwrap(phi, mask)
    raise ValueError(f"unknown unwrap method {method!r}")


def bench_scene(truth, map_id, methods, mask_sources, thresholds):
    """Failure rows for one scene across methods, masks, and thresholds."""
    phi = decode_wrapped(truth.stack)
    modulation = decode_modulation(truth.stack)
    masks = scene_masks(truth, phi, modulation, mask_sources)
    rows = []
    for mask_name, mask in masks.items():
        for method in methods:
            result = run_unwrapper(method, phi, modulation, mask)
            aligned, _ = evaluation.align_relative(result.phase, truth.phi_gt, result.regions)
            joint = aligned.valid_mask() & truth.phi_gt.valid_mask()
            rmse = (
                evaluation.depth_rmse(aligned, truth.phi_gt) if joint.any() else None
            )
            for threshold in thresholds:
                report = evaluation.detect_failure(aligned, truth.phi_gt, threshold)
                rows.append(
                    {
                        "map_id": map_id,
                        "method": f"{method}/{mask_name}",
                        "threshold": threshold,
                        "failure": report.is_failure,
                        "rmse": rmse,
                    }
                )
    return rows


def bench_suite(suite_dir, methods, mask_sources, thresholds):
    suite_dir = Path(suite_dir)
    scene_dirs = sorted(d for d in suite_dir.iterdir() if d.is_dir())
    if not scene_dirs:
        raise FileNotFoundError(f"no scene directories under {suite_dir}")
    rows = []
    for d in scene_dirs:
        _, truth = scenes.load_scene(d)
        rows.extend(bench_scene(truth, d.name, methods, mask_sources, thresholds))
    return rows


def _cmd_bench(args) -> int:
    rows = bench_suite(args.suite_dir, args.methods, args.masks, args.thresholds)
    _write_report(args.out, rows)
    failures = {}
    for row in rows:
        key = (row["method"], row["threshold"])
        total, failed = failures.get(key, (0, 0))
        failures[key] = (total + 1, failed + bool(row["failure"]))
    for (method, threshold), (total, failed) in sorted(failures.items()):
        print(f"{method} @ {threshold:g}: {failed}/{total} failures")
    return 0


# ---------------------------------------------------------------------------
# parser

def _float_list(text: str):
    return tuple(float(t) for t in text.split(","))


def _str_list(text: str):
    return tuple(t for t in text.split(",") if t)


def build_parser() -> _Parser:
    parser = _Parser(prog="fppkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decode", help="fringe stack -> wrapped phase, background, modulation")
    p.add_argument("--stack", required=True, help="stack file prefix (<prefix>_NN.fpm)")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("pmi", help="fringe stack -> normalized composite channels")
    p.add_argument("--stack", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--out", required=True, help="output file prefix")
    p.add_argument("--threshold", type=float, default=DEFAULT_MODULATION_THRESHOLD)
    p.add_argument("--region-fraction", type=float, default=DEFAULT_REGION_FRACTION)
    p.set_defaults(func=_cmd_pmi)

    p = sub.add_parser("classify", help="composite channels -> 3-class label map")
    p.add_argument("--pmi", required=True, help="PMI file prefix")
    p.add_argument("--out", required=True)
    p.add_argument("--q-low", type=float, default=masking.HeuristicParams.q_low)
    p.add_argument("--tau-d", type=float, default=masking.HeuristicParams.tau_d)
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("unwrap", help="wrapped phase + mask -> continuous phase")
    p.add_argument("--phi", required=True)
    p.add_argument("--mask", help="validity/label PGM; omit to unwrap everything")
    p.add_argument("--method", choices=METHODS, default="flood")
    p.add_argument("--quality", help="quality map (required for modu)")
    p.add_argument("--out", required=True, help="output file prefix")
    p.set_defaults(func=_cmd_unwrap)

    p = sub.add_parser("tpu", help="stack + Gray-code patterns -> absolute phase")
    p.add_argument("--stack", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--gray", required=True, help="pattern prefix (<prefix>_NN.fpm, <prefix>_ref.fpm)")
    p.add_argument("--fringes", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_tpu)

    p = sub.add_parser("label", help="modulation + depth -> 3-class labels")
    p.add_argument("--modulation", required=True)
    p.add_argument("--depth", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=DEFAULT_MODULATION_THRESHOLD)
    p.add_argument("--raw-depth", action="store_true", help="skip outlier filtering")
    p.set_defaults(func=_cmd_label)

    p = sub.add_parser("eval", help="continuous phase vs reference -> CSV report")
    p.add_argument("--phi", required=True)
    p.add_argument("--validity")
    p.add_argument("--gt", required=True)
    p.add_argument("--gt-validity")
    p.add_argument("--thresholds", type=_float_list, default=DEFAULT_ERROR_THRESHOLDS)
    p.add_argument("--mode", choices=("order", "phase03"), default="order")
    p.add_argument("--method", default="flood")
    p.add_argument("--id")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("synth", help="generate a benchmark scene suite")
    p.add_argument("--suite", required=True, choices=scenes.SUITE_NAMES)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("reconstruct", help="absolute phase + calibration -> PLY + depth")
    p.add_argument("--phi", required=True)
    p.add_argument("--validity")
    p.add_argument("--calib", required=True)
    p.add_argument("--out", required=True, help="output file prefix")
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("bench", help="full pipeline over a suite directory")
    p.add_argument("--suite-dir", required=True)
    p.add_argument("--methods", type=_str_list, default=METHODS)
    p.add_argument("--masks", type=_str_list, default=("oracle", "modu", "none"))
    p.add_argument("--thresholds", type=_float_list, default=DEFAULT_ERROR_THRESHOLDS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_bench)

    return parser


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
