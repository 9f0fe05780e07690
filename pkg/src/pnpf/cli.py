"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 experiment failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io
from .exceptions import ConfigError, PnPfError
from .experiment import (ABLATIONS, ExperimentConfig, PER_SCENE_COLUMNS, build_scene, constant_focal,
                         initial_focal, load_config, per_scene_csv, run_ablation_suite,
                         run_experiment, scene_hash, solve_correspondences, summarize,
                         write_manifest)
from .geometry import PinholeCamera
from .metrics import EvalSample, evaluate_sample, write_curve_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FAILURE = 3

CORR_DIR = "correspondences"
RESULT_DIR = "results"


def _scene_file(i):
    return f"scene_{i:05d}.json"


def _config(args) -> ExperimentConfig:
    overrides = {"seed": args.seed, "output_dir": args.out}
    if args.config:
        return load_config(args.config, **overrides)
    return ExperimentConfig.from_dict({k: v for k, v in overrides.items() if v is not None})


def cmd_generate(config, args):
    out = Path(config.output_dir)
    (out / CORR_DIR).mkdir(parents=True, exist_ok=True)
    names = []
    for i in range(config.n_scenes):
        data = build_scene(config, i)
        s = data.scene
        rec = io.correspondence_record(i, s.f_gt, data.f_pred, s.camera_gt.image_size, s.pose_gt,
                                       data.corrs, s.bbox_diag_px, s.model_points)
        name = f"{CORR_DIR}/{_scene_file(i)}"
        io.write_json(out / name, rec)
        names.append(name)
    write_manifest(out, config, names, command="generate")


def _records(directory):
    paths = sorted(Path(directory).glob("scene_*.json"))
    if not paths:
        raise ConfigError(f"no scene_*.json files in {directory}")
    return [io.read_json(p) for p in paths]


def cmd_solve(config, args):
    out = Path(config.output_dir)
    src = Path(args.input) if args.input else out / CORR_DIR
    (out / RESULT_DIR).mkdir(parents=True, exist_ok=True)
    f_const = constant_focal(config) if config.focal_init == "Constant" else float("nan")
    for rec in _records(src):
        i = rec["scene_id"]
        f_init = initial_focal(config, rec["f_gt"], rec["f_pred"], f_const)
        try:
            res = solve_correspondences(config, io.correspondences_from_record(rec),
                                        tuple(rec["image_size"]), f_init, i)
            out_rec = io.result_record(i, "ok", res.pose, res.focal_px, f_init, res)
        except (PnPfError, np.linalg.LinAlgError) as exc:
            out_rec = io.result_record(i, type(exc).__name__, f_init=f_init, error=str(exc))
        io.write_json(out / RESULT_DIR / _scene_file(i), out_rec)


def cmd_eval(config, args):
    out = Path(config.output_dir)
    gt_dir = Path(args.input) if args.input else out / CORR_DIR
    res_dir = Path(args.results) if args.results else out / RESULT_DIR
    rows = []
    for rec in _records(gt_dir):
        i = rec["scene_id"]
        if "model_points" not in rec:
            raise ConfigError(f"scene {i} has no model_points; cannot evaluate")
        res_path = res_dir / _scene_file(i)
        if not res_path.exists():
            raise ConfigError(f"missing result file {res_path}")
        res = io.read_json(res_path)
        row = {"scene_id": i, "scene_hash": "-", "status": res["status"], "f_gt": rec["f_gt"],
               "f_init": res["f_init"] if res["f_init"] is not None else float("nan")}
        if res["status"] == "ok":
            w, h = rec["image_size"]
            sample = EvalSample(np.asarray(rec["model_points"]), io.pose_from_dict(rec["pose_gt"]),
                                io.pose_from_dict(res["pose"]), rec["f_gt"], res["focal_px"],
                                (w, h), rec["bbox_diag"], PinholeCamera(1.0, (w, h)).image_diagonal)
            row.update(f_est=res["focal_px"], **evaluate_sample(sample))
        else:
            row.update(f_est=float("nan"), **{k: float("inf") for k in PER_SCENE_COLUMNS[6:]})
        rows.append(row)
    out.mkdir(parents=True, exist_ok=True)
    (out / "per_scene.csv").write_text(per_scene_csv(rows))
    report, curve = summarize(rows)
    (out / "report.json").write_text(report.to_json())
    write_curve_csv(out / "curve_rt.csv", curve)
    print(report.to_json(), end="")


def cmd_run(config, args):
    result = run_experiment(config, args.jobs)
    print(result.report.to_json(), end="")


def cmd_ablate(config, args):
    cells = run_ablation_suite(args.kind, config, args.jobs)
    print((Path(config.output_dir) / "ablation.csv").read_text(), end="")
    return cells


def cmd_reproduce(args):
    """Rerun from a manifest into ``--out`` and compare every checksum."""
    manifest = io.read_json(args.manifest)
    out = Path(args.out)
    config = ExperimentConfig.from_dict({**manifest["config"], "output_dir": str(out)})
    command = manifest.get("command", "run")
    if command == "run":
        run_experiment(config, args.jobs)
    elif command == "ablate":
        run_ablation_suite(manifest["kind"], config, args.jobs)
    elif command == "generate":
        cmd_generate(config, args)
    else:
        raise ConfigError(f"cannot reproduce a {command!r} manifest")
    mismatched = [name for name, digest in manifest["artifacts"].items()
                  if io.sha256_file(out / name) != digest]
    if mismatched:
        print("checksum mismatch: " + ", ".join(mismatched), file=sys.stderr)
        return EXIT_FAILURE
    print(f"reproduced {len(manifest['artifacts'])} artifact(s) byte-identically")
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")

    p = argparse.ArgumentParser(prog="pnpf", description="Pose and focal length from 2D-3D correspondences.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write synthetic correspondence files")
    s = sub.add_parser("solve", parents=[common], help="solve correspondence files")
    s.add_argument("--input", help="correspondence directory (default OUT/correspondences)")
    e = sub.add_parser("eval", parents=[common], help="evaluate solve results against ground truth")
    e.add_argument("--input", help="correspondence directory (default OUT/correspondences)")
    e.add_argument("--results", help="result directory (default OUT/results)")
    sub.add_parser("run", parents=[common], help="generate, solve and evaluate in one pass")
    a = sub.add_parser("ablate", parents=[common], help="paired ablation over one config axis")
    a.add_argument("kind", choices=sorted(ABLATIONS))
    r = sub.add_parser("reproduce", parents=[common], help="rerun a manifest and verify checksums")
    r.add_argument("manifest")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        if args.command == "reproduce":
            if not args.out:
                raise ConfigError("reproduce needs --out")
            return cmd_reproduce(args)
        config = _config(args)
        {"generate": cmd_generate, "solve": cmd_solve, "eval": cmd_eval,
         "run": cmd_run, "ablate": cmd_ablate}[args.command](config, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PnPfError, OSError, KeyError, ValueError) as exc:
        print(f"experiment failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
