"""Command-line front end.

Subcommands:
  synth        generate a seeded synthetic scene directory
  solve        solve translations for a keypoint-record file
  autolabel    fit shape+pose to masks and points, export keypoint labels
  eval         labeling-quality report (mean mask / box IoU)
  render       render a silhouette mask to PGM
  noise-sweep  solver sensitivity to keypoint noise and yaw error

Every command is deterministic under a fixed --seed. Exit codes: 0 ok,
2 usage (argparse), 3 malformed input, 4 numerical/geometry failure,
5 I/O failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import math
import os
import sys
import time

import numpy as np

from . import pose_solver, synthetic
from .autolabel import (
    AutolabelConfig,
    export_keypoint_labels,
    fit,
    fitted_box,
    load_config,
)
from .box_metrics import Box3D, labeling_quality
from .errors import (
    AllVerticesClipped,
    MalformedLine,
    MissingKey,
    MonoshapeError,
    TruncatedFile,
    UnsupportedFormat,
)
from .geometry import CameraIntrinsics, Pose
from .kitti_io import read_calib_file, intrinsics_from_p2
from .pose_solver import (
    KeypointRecord,
    read_keypoint_file,
    solve_record,
    write_keypoint_file,
)
from .shape_model import ShapeCoeff, deform, default_basis, load_basis
from .silhouette import read_pgm, render_silhouette, write_pgm

EXIT_OK = 0
EXIT_PARSE = 3
EXIT_NUMERIC = 4
EXIT_IO = 5

_PARSE_ERRORS = (MalformedLine, MissingKey, TruncatedFile, UnsupportedFormat)


def _atomic_write_text(path, text):
    tmp = str(path) + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _jsonl_rows(rows):
    return "\n".join(json.dumps(r) for r in rows) + "\n"


def _load_manifest(dir_path):
    with open(os.path.join(dir_path, "manifest.json"), "r", encoding="utf-8") as fh:
        return json.load(fh)


def _read_truth(dir_path):
    rows = []
    with open(os.path.join(dir_path, "truth.jsonl"), "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    return rows


def _box_to_json(box: Box3D):
    return {"center": list(box.center), "dims": list(box.dims), "yaw": box.yaw}


def _box_from_json(d) -> Box3D:
    return Box3D(center=tuple(d["center"]), dims=tuple(d["dims"]), yaw=d["yaw"])


# --- synth ------------------------------------------------------------------


def cmd_synth(args) -> int:
    rng = np.random.default_rng(args.seed)
    basis = load_basis(args.basis) if args.basis else default_basis()
    k = synthetic.DEFAULT_INTRINSICS
    size = synthetic.DEFAULT_SIZE
    os.makedirs(args.out, exist_ok=True)

    records = []
    truth_rows = []
    statuses = []
    for i in range(args.n_objects):
        obj = synthetic.make_object(
            rng, basis, k, size,
            noise_px=args.noise_px,
            n_points=args.points,
            pitch=math.radians(args.tilt_deg),
        )
        mask_name = f"mask_{i:03d}.pgm"
        pts_name = f"points_{i:03d}.bin"
        write_pgm(os.path.join(args.out, mask_name), obj.mask)
        pts4 = np.zeros((len(obj.points), 4), dtype="<f4")
        pts4[:, :3] = obj.points
        tmp = os.path.join(args.out, pts_name + ".tmp")
        with open(tmp, "wb") as fh:
            fh.write(pts4.tobytes())
        os.replace(tmp, os.path.join(args.out, pts_name))

        records.append(obj.record)
        truth_rows.append(
            {
                "index": i,
                "s": list(obj.s_true.s),
                "yaw": obj.pose_true.yaw,
                "pitch": obj.pose_true.pitch,
                "roll": obj.pose_true.roll,
                "t": list(obj.pose_true.t),
                "dims": list(obj.dims),
                "box": _box_to_json(obj.box),
                "mask": mask_name,
                "points": pts_name,
            }
        )
        statuses.append({"index": i, "status": "ok"})

    write_keypoint_file(os.path.join(args.out, "keypoints.txt"), records)
    _atomic_write_text(os.path.join(args.out, "truth.jsonl"), _jsonl_rows(truth_rows))
    manifest = {
        "command": "synth",
        "seed": args.seed,
        "n_objects": args.n_objects,
        "noise_px": args.noise_px,
        "points": args.points,
        "tilt_deg": args.tilt_deg,
        "basis": args.basis or "builtin",
        "intrinsics": [k.fx, k.fy, k.cx, k.cy],
        "size": list(size),
        "out": os.path.abspath(args.out),
        "objects": statuses,
    }
    _atomic_write_text(
        os.path.join(args.out, "manifest.json"), json.dumps(manifest, indent=2) + "\n"
    )
    print(f"wrote {args.n_objects} objects to {args.out}")
    return EXIT_OK


# --- solve ------------------------------------------------------------------


def cmd_solve(args) -> int:
    records = read_keypoint_file(args.keypoints)
    rows = []
    failures = 0
    for i, rec in enumerate(records):
        if args.zero_weight:
            rec = _zero_weights(rec, args.zero_weight)
        try:
            sol = solve_record(rec)
            rows.append(
                {
                    "index": i,
                    "t": list(sol.t),
                    "weighted_rms_residual": sol.weighted_rms_residual,
                    "effective_rank": sol.effective_rank,
                }
            )
        except MonoshapeError as exc:
            failures += 1
            rows.append({"index": i, "error": f"{type(exc).__name__}: {exc}"})

    if args.format == "jsonl":
        text = _jsonl_rows(rows)
    else:
        lines = []
        for r in rows:
            if "error" in r:
                lines.append(f"object {r['index']}: ERROR {r['error']}")
            else:
                t = r["t"]
                lines.append(
                    f"object {r['index']}: t = ({t[0]:.6f}, {t[1]:.6f}, {t[2]:.6f}) m, "
                    f"residual {r['weighted_rms_residual']:.3e}, rank {r['effective_rank']}"
                )
        text = "\n".join(lines) + "\n"
    if args.out:
        _atomic_write_text(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK if failures == 0 else EXIT_NUMERIC


def _zero_weights(rec: KeypointRecord, indices) -> KeypointRecord:
    kps = rec.keypoints
    conf = kps.conf.copy()
    for i in indices:
        conf[i, :] = 0.0
    new = pose_solver.KeypointSet.from_arrays(kps.p2d, kps.p3d, conf)
    return KeypointRecord(rec.yaw, rec.intrinsics, new, rec.dims)


# --- autolabel --------------------------------------------------------------


def _fit_one(task):
    (i, row, synth_dir, basis_path, cfg, k_params, seed) = task
    basis = load_basis(basis_path) if basis_path else default_basis()
    k = CameraIntrinsics(*k_params)
    mask = read_pgm(os.path.join(synth_dir, row["mask"]))
    raw = np.fromfile(os.path.join(synth_dir, row["points"]), dtype="<f4").reshape(-1, 4)
    from .autolabel import Observation

    obs = Observation(
        instance_mask=mask, gt_box=_box_from_json(row["box"]), points=raw[:, :3]
    )
    t0 = time.perf_counter()
    res = fit(obs, basis, k, cfg, seed=seed)
    elapsed = time.perf_counter() - t0
    record = export_keypoint_labels(res, basis, basis.keypoint_spec, k)
    box = fitted_box(basis, res.s, res.pose)
    mesh = deform(basis, res.s)
    hard = render_silhouette(mesh, res.pose, k, (mask.width, mask.height))
    return i, res, record, box, hard, elapsed


def cmd_autolabel(args) -> int:
    cfg = AutolabelConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    overrides = {}
    for name in ("alpha", "beta", "max_steps", "angle_mode", "softness"):
        val = getattr(args, name.replace("-", "_"), None)
        if val is not None:
            overrides[name] = val
    if overrides:
        from dataclasses import replace as dc_replace

        cfg = dc_replace(cfg, **overrides)

    manifest = _load_manifest(args.dir)
    truth = _read_truth(args.dir)
    k_params = manifest["intrinsics"]
    os.makedirs(args.out, exist_ok=True)

    tasks = [
        (row["index"], row, args.dir, args.basis, cfg, k_params, args.seed)
        for row in truth
    ]
    results = {}
    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            for out in pool.map(_fit_one, tasks):
                results[out[0]] = out
    else:
        for task in tasks:
            out = _fit_one(task)
            results[out[0]] = out

    records = []
    fit_rows = []
    metric_rows = []
    statuses = []
    for i in sorted(results):
        _, res, record, box, hard, elapsed = results[i]
        mask_name = f"fitted_mask_{i:03d}.pgm"
        write_pgm(os.path.join(args.out, mask_name), hard)
        records.append(record)
        fit_rows.append(
            {
                "index": i,
                "s": list(res.s.s),
                "yaw": res.pose.yaw,
                "pitch": res.pose.pitch,
                "roll": res.pose.roll,
                "t": list(res.pose.t),
                "box": _box_to_json(box),
                "mask": mask_name,
            }
        )
        metric_rows.append(
            {
                "index": i,
                "final_l2d": res.final_l2d,
                "final_l3d": res.final_l3d,
                "mask_iou": res.mask_iou,
                "box_iou": res.box_iou,
                "converged": res.converged,
                "steps": len(res.loss_curve),
                "seconds": elapsed,
                "loss_curve": list(res.loss_curve),
            }
        )
        statuses.append({"index": i, "status": "ok"})

    write_keypoint_file(os.path.join(args.out, "keypoints.txt"), records)
    _atomic_write_text(os.path.join(args.out, "fits.jsonl"), _jsonl_rows(fit_rows))
    _atomic_write_text(os.path.join(args.out, "metrics.jsonl"), _jsonl_rows(metric_rows))
    manifest_out = {
        "command": "autolabel",
        "seed": args.seed,
        "input": os.path.abspath(args.dir),
        "config": args.config,
        "out": os.path.abspath(args.out),
        "objects": statuses,
    }
    _atomic_write_text(
        os.path.join(args.out, "manifest.json"), json.dumps(manifest_out, indent=2) + "\n"
    )
    miou = float(np.mean([r["mask_iou"] for r in metric_rows])) if metric_rows else 0.0
    biou = float(np.mean([r["box_iou"] for r in metric_rows])) if metric_rows else 0.0
    print(f"fitted {len(metric_rows)} objects: mean mask_iou {miou:.3f}, mean box_iou {biou:.3f}")
    return EXIT_OK


# --- eval -------------------------------------------------------------------


def cmd_eval(args) -> int:
    truth = _read_truth(args.truth)
    fits = []
    with open(os.path.join(args.fits, "fits.jsonl"), "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                fits.append(json.loads(line))
    fit_pairs = [
        (_box_from_json(r["box"]), read_pgm(os.path.join(args.fits, r["mask"])))
        for r in fits
    ]
    gt_pairs = [
        (_box_from_json(r["box"]), read_pgm(os.path.join(args.truth, r["mask"])))
        for r in truth
    ]
    mean_mask, mean_box = labeling_quality(fit_pairs, gt_pairs)
    if args.format == "jsonl":
        text = json.dumps({"mean_mask_iou": mean_mask, "mean_box_iou": mean_box}) + "\n"
    else:
        text = f"mean mask IoU: {mean_mask:.4f}\nmean 3D box IoU: {mean_box:.4f}\n"
    if args.out:
        _atomic_write_text(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK


# --- render -----------------------------------------------------------------


def cmd_render(args) -> int:
    basis = load_basis(args.basis) if args.basis else default_basis()
    coeffs = args.coeffs if args.coeffs is not None else [0.0] * basis.rank
    mesh = deform(basis, ShapeCoeff(coeffs))
    if args.calib:
        k = intrinsics_from_p2(read_calib_file(args.calib))
    else:
        k = CameraIntrinsics(*args.intrinsics)
    pose = Pose(yaw=args.yaw, pitch=args.pitch, roll=args.roll, t=tuple(args.t))
    mask = render_silhouette(mesh, pose, k, tuple(args.size), softness=args.softness)
    write_pgm(args.out, mask)
    print(f"wrote {args.out} ({int((mask.values >= 0.5).sum())} occupied pixels)")
    return EXIT_OK


# --- noise sweep ------------------------------------------------------------


def cmd_noise_sweep(args) -> int:
    records = read_keypoint_file(args.keypoints)
    rng = np.random.default_rng(args.seed)
    rows = []
    for sigma in args.sigmas:
        errs = []
        for rec in records:
            base = solve_record(rec)
            for _ in range(args.trials):
                kps = rec.keypoints
                noisy = pose_solver.KeypointSet.from_arrays(
                    kps.p2d + rng.normal(scale=sigma, size=kps.p2d.shape)
                    if sigma > 0
                    else kps.p2d,
                    kps.p3d,
                    kps.conf,
                )
                sol = solve_record(
                    KeypointRecord(rec.yaw, rec.intrinsics, noisy, rec.dims)
                )
                errs.append(float(np.linalg.norm(sol.t - base.t)))
        rows.append(
            {
                "sigma_px": sigma,
                "mean_err_m": float(np.mean(errs)),
                "max_err_m": float(np.max(errs)),
            }
        )
    if args.yaw_offsets:
        for off in args.yaw_offsets:
            errs = []
            for rec in records:
                base = solve_record(rec)
                wrong = KeypointRecord(
                    rec.yaw + math.radians(off), rec.intrinsics, rec.keypoints, rec.dims
                )
                errs.append(float(np.linalg.norm(solve_record(wrong).t - base.t)))
            rows.append(
                {
                    "yaw_offset_deg": off,
                    "mean_err_m": float(np.mean(errs)),
                    "max_err_m": float(np.max(errs)),
                }
            )

    if args.format == "jsonl":
        text = _jsonl_rows(rows)
    else:
        lines = [f"{'condition':>18} {'mean err (m)':>14} {'max err (m)':>14}"]
        for r in rows:
            cond = (
                f"sigma={r['sigma_px']}px"
                if "sigma_px" in r
                else f"yaw+{r['yaw_offset_deg']}deg"
            )
            lines.append(f"{cond:>18} {r['mean_err_m']:>14.6f} {r['max_err_m']:>14.6f}")
        text = "\n".join(lines) + "\n"
    if args.out:
        _atomic_write_text(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="monoshape", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-objects", type=int, default=10)
    p.add_argument("--noise-px", type=float, default=0.0)
    p.add_argument("--points", type=int, default=300)
    p.add_argument("--tilt-deg", type=float, default=0.0)
    p.add_argument("--basis", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("solve", help="solve translations from keypoint records")
    p.add_argument("--keypoints", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("text", "jsonl"), default="text")
    p.add_argument(
        "--zero-weight", type=int, nargs="*", default=None,
        help="keypoint indices whose constraint weights are set to 0",
    )
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("autolabel", help="fit shape+pose over a synth directory")
    p.add_argument("--dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--basis", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--max-steps", type=int, default=None, dest="max_steps")
    p.add_argument("--angle-mode", choices=("ypr", "yaw"), default=None, dest="angle_mode")
    p.add_argument("--softness", type=float, default=None)
    p.set_defaults(func=cmd_autolabel)

    p = sub.add_parser("eval", help="labeling-quality report")
    p.add_argument("--fits", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("text", "jsonl"), default="text")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="render a silhouette to PGM")
    p.add_argument("--basis", default=None)
    p.add_argument("--coeffs", type=float, nargs="*", default=None)
    p.add_argument("--yaw", type=float, default=0.0)
    p.add_argument("--pitch", type=float, default=0.0)
    p.add_argument("--roll", type=float, default=0.0)
    p.add_argument("--t", type=float, nargs=3, default=(0.0, 0.0, 12.0))
    p.add_argument("--intrinsics", type=float, nargs=4, default=(280.0, 280.0, 128.0, 128.0))
    p.add_argument("--calib", default=None)
    p.add_argument("--size", type=int, nargs=2, default=(256, 256))
    p.add_argument("--softness", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("noise-sweep", help="solver sensitivity table")
    p.add_argument("--keypoints", required=True)
    p.add_argument("--sigmas", type=float, nargs="+", default=(0.0, 0.5, 1.0, 2.0, 4.0))
    p.add_argument("--yaw-offsets", type=float, nargs="*", default=None,
                   help="additional sweep over yaw errors (degrees)")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("text", "jsonl"), default="text")
    p.set_defaults(func=cmd_noise_sweep)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _PARSE_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (AllVerticesClipped, MonoshapeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
