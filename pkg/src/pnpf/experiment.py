"""Config-driven experiments: synthesize scenes, solve, evaluate, aggregate.

Every scene is an independent unit seeded by ``(seed, stream, index)``, so a
run produces the same files whatever the worker count. Each run writes

* ``per_scene.csv``: one row of errors per scene (failed solves are ``inf``)
* ``report.json``: the aggregated :class:`~pnpf.metrics.MetricsReport`
* ``curve_rt.csv``: accuracy of the pose error ``e_rt`` on the 0.05 grid
* ``manifest.json``: resolved config plus SHA-256 checksums of the above
"""
from __future__ import annotations

import csv
import hashlib
import io as _io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import io
from .correspondences import CorrespondenceSet
from .epnp import solve_epnp
from .exceptions import ConfigError, ExperimentFailure, PnPfError
from .geometry import PinholeCamera, RigidPose
from .losses import CauchyLoss, SquaredLoss
from .metrics import (CURVE_THRESHOLDS, ERROR_NAMES, EvalSample, MetricsReport, accuracy_curve,
                      aggregate, evaluate_sample, write_curve_csv)
from .ransac import RansacOptions, robust_initial_pose, solve_ransac
from .refine import SolveResult, SolverOptions, refine_joint, refine_pose_fixed_focal, residuals_and_cost
from .synth import (CORRESPONDENCE_STREAM, PREDICTOR_STREAM, SOLVER_STREAM, TRAINING_STREAM, BoxModel,
                    FocalPredictorModel, NoiseSpec, PointCloudModel, SceneSpec, ViewRange,
                    constant_focal_baseline, generate_bb_correspondences,
                    generate_lf_correspondences, sample_scene, simulate_focal_prediction,
                    stream_rng)

MODES = ("LF", "BB")
STRATEGIES = ("Standard", "RANSAC", "Cauchy")
FOCAL_INITS = ("GroundTruth", "Predicted", "Constant")
REFINEMENTS = ("InitialOnly", "Joint", "FixedFocal")
ABLATIONS = {
    "PnPStrategies": ("pnp_strategy", STRATEGIES),
    "FocalInit": ("focal_init", FOCAL_INITS),
    "Refinement": ("refine", REFINEMENTS),
}
PER_SCENE_COLUMNS = ("scene_id", "scene_hash", "status", "f_gt", "f_init", "f_est") + ERROR_NAMES


# --------------------------------------------------------------------------- config

def _model_to_dict(model):
    if isinstance(model, BoxModel):
        return {"type": "box", "dims": list(model.dims), "surface_resolution": model.surface_resolution}
    return {"type": "point_cloud", "points": model.points.tolist()}


def _model_from_dict(d):
    kind = d.get("type", "box")
    if kind == "box":
        return BoxModel(tuple(d.get("dims", (1.0, 1.0, 1.0))), int(d.get("surface_resolution", 5)))
    if kind == "point_cloud":
        return PointCloudModel(np.asarray(d["points"], dtype=float))
    raise ConfigError(f"unknown model type {kind!r}")


def _scene_to_dict(spec: SceneSpec):
    rot = spec.rotation_distribution
    if isinstance(rot, ViewRange):
        rot = {"azimuth": list(rot.azimuth), "elevation": list(rot.elevation), "roll": list(rot.roll)}
    return {
        "model": _model_to_dict(spec.model),
        "distance_range": list(spec.distance_range),
        "rotation_distribution": rot,
        "focal_range_px": list(spec.focal_range_px),
        "image_size": list(spec.image_size),
        "placement_jitter": spec.placement_jitter,
    }


def _scene_from_dict(d, seed):
    d = dict(d)
    rot = d.get("rotation_distribution", "uniform")
    if isinstance(rot, dict):
        rot = ViewRange(**{k: tuple(v) for k, v in rot.items()})
    return SceneSpec(
        model=_model_from_dict(d.get("model", {"type": "box"})),
        distance_range=tuple(d.get("distance_range", (2.0, 25.0))),
        rotation_distribution=rot,
        focal_range_px=tuple(d.get("focal_range_px", (300.0, 3000.0))),
        image_size=tuple(int(v) for v in d.get("image_size", (640, 480))),
        rng_seed=seed,
        placement_jitter=float(d.get("placement_jitter", 0.5)),
    )


def _check_keys(d, allowed, where):
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown {where} field(s): {sorted(unknown)}")


@dataclass(frozen=True)
class ExperimentConfig:
    scene_spec: SceneSpec = field(default_factory=SceneSpec)
    noise_spec: NoiseSpec = field(default_factory=NoiseSpec)
    predictor_model: FocalPredictorModel = field(default_factory=FocalPredictorModel)
    correspondence_mode: str = "LF"
    pnp_strategy: str = "Standard"
    focal_init: str = "Predicted"
    refine: str = "Joint"
    n_scenes: int = 100
    seed: int = 0
    output_dir: str = "results"
    grid: int = 28
    cauchy_scale: float = 10.0
    ransac: RansacOptions = field(default_factory=RansacOptions)
    max_iterations: int = 100
    n_train_scenes: int = 1000

    def __post_init__(self):
        for name, allowed in (("correspondence_mode", MODES), ("pnp_strategy", STRATEGIES),
                              ("focal_init", FOCAL_INITS), ("refine", REFINEMENTS)):
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        if self.n_scenes < 1:
            raise ConfigError("n_scenes must be >= 1")
        if self.n_train_scenes < 1:
            raise ConfigError("n_train_scenes must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.grid < 4:
            raise ConfigError("grid must be >= 4")
        if not self.cauchy_scale > 0:
            raise ConfigError("cauchy_scale must be positive")
        if self.scene_spec.rng_seed != self.seed:
            object.__setattr__(self, "scene_spec", replace(self.scene_spec, rng_seed=self.seed))

    def to_dict(self):
        return {
            "scene_spec": _scene_to_dict(self.scene_spec),
            "noise_spec": asdict(self.noise_spec),
            "predictor_model": asdict(self.predictor_model),
            "correspondence_mode": self.correspondence_mode,
            "pnp_strategy": self.pnp_strategy,
            "focal_init": self.focal_init,
            "refine": self.refine,
            "n_scenes": self.n_scenes,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "grid": self.grid,
            "cauchy_scale": self.cauchy_scale,
            "ransac": asdict(self.ransac),
            "max_iterations": self.max_iterations,
            "n_train_scenes": self.n_train_scenes,
        }

    @classmethod
    def from_dict(cls, d):
        """Build a config from plain JSON data; raises :class:`ConfigError` when invalid."""
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        _check_keys(d, [f.name for f in fields(cls)], "config")
        try:
            seed = int(d.get("seed", 0))
            kw = {k: v for k, v in d.items()
                  if k not in ("scene_spec", "noise_spec", "predictor_model", "ransac")}
            kw["seed"] = seed
            kw["scene_spec"] = _scene_from_dict(d.get("scene_spec", {}), seed)
            kw["noise_spec"] = NoiseSpec(**d.get("noise_spec", {}))
            kw["predictor_model"] = FocalPredictorModel(**d.get("predictor_model", {}))
            kw["ransac"] = RansacOptions(**d.get("ransac", {}))
            return cls(**kw)
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc

    def with_(self, **changes):
        return replace(self, **changes)


def load_config(path, **overrides) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(data)


# --------------------------------------------------------------------------- per scene

@dataclass(frozen=True, eq=False)
class SceneData:
    scene: object
    corrs: CorrespondenceSet
    f_pred: float


def build_scene(config: ExperimentConfig, index: int) -> SceneData:
    scene = sample_scene(config.scene_spec, index)
    rng = stream_rng(config.seed, CORRESPONDENCE_STREAM, index)
    if config.correspondence_mode == "BB":
        corrs, _ = generate_bb_correspondences(scene, config.noise_spec, rng)
    else:
        corrs = generate_lf_correspondences(scene, config.grid, config.noise_spec, rng)
    f_pred = simulate_focal_prediction(scene.f_gt, config.predictor_model,
                                       stream_rng(config.seed, PREDICTOR_STREAM, index))
    return SceneData(scene, corrs, f_pred)


def scene_hash(data: SceneData) -> str:
    """Digest of everything a solver sees for one scene plus its ground truth."""
    h = hashlib.sha256()
    s = data.scene
    for arr in (s.pose_gt.rotation, s.pose_gt.translation, np.array([s.f_gt, data.f_pred]),
                data.corrs.points3d, data.corrs.points2d, data.corrs.weights):
        h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
    return h.hexdigest()[:16]


def constant_focal(config: ExperimentConfig) -> float:
    """Median focal over a training split drawn from a stream disjoint from the test scenes."""
    scenes = [sample_scene(config.scene_spec, i, stream=TRAINING_STREAM)
              for i in range(config.n_train_scenes)]
    return constant_focal_baseline(scenes)


def solver_options(config: ExperimentConfig, refine_focal=True) -> SolverOptions:
    loss = CauchyLoss(config.cauchy_scale) if config.pnp_strategy == "Cauchy" else SquaredLoss()
    return SolverOptions(loss=loss, max_iterations=config.max_iterations, refine_focal=refine_focal)


def initial_focal(config, f_gt, f_pred, f_const):
    return {"GroundTruth": f_gt, "Predicted": f_pred, "Constant": f_const}[config.focal_init]


def solve_correspondences(config: ExperimentConfig, corrs: CorrespondenceSet, image_size,
                          f_init, index: int) -> SolveResult:
    """Apply the configured strategy and refinement; solver errors propagate."""
    camera = PinholeCamera(f_init, image_size)
    opts = solver_options(config, refine_focal=config.refine == "Joint")
    if config.pnp_strategy == "RANSAC":
        ropts = replace(config.ransac, rng_seed=_solver_seed(config.seed, index))
        mode = {"InitialOnly": "none", "Joint": "joint", "FixedFocal": "fixed"}[config.refine]
        return solve_ransac(corrs, camera, ropts, opts, refine=mode)
    if config.pnp_strategy == "Cauchy":
        ropts = replace(config.ransac, rng_seed=_solver_seed(config.seed, index))
        init = robust_initial_pose(corrs, camera, ropts)
    else:
        init = solve_epnp(corrs, camera)
    if config.refine == "InitialOnly":
        _, cost = residuals_and_cost(corrs, init, f_init, opts.loss, camera)
        return SolveResult(init, float(f_init), cost, cost, 0, True,
                           np.ones(len(corrs), dtype=bool), [cost], "initial_only")
    if config.refine == "FixedFocal":
        return refine_pose_fixed_focal(corrs, init, f_init, camera, opts)
    return refine_joint(corrs, init, f_init, camera, opts)


def _solver_seed(seed, index):
    return int(stream_rng(seed, SOLVER_STREAM, index).integers(2 ** 63))


def scene_errors(scene, pose_pred: RigidPose, f_est) -> dict:
    sample = EvalSample(scene.model_points, scene.pose_gt, pose_pred, scene.f_gt, f_est,
                        scene.camera_gt.image_size, scene.bbox_diag_px, scene.image_diag_px)
    return evaluate_sample(sample)


def _failed_errors():
    return {k: float("inf") for k in ERROR_NAMES}


def run_scene(config: ExperimentConfig, index: int, f_const: float) -> dict:
    data = build_scene(config, index)
    scene = data.scene
    f_init = initial_focal(config, scene.f_gt, data.f_pred, f_const)
    row = {"scene_id": index, "scene_hash": scene_hash(data), "f_gt": scene.f_gt, "f_init": f_init}
    try:
        res = solve_correspondences(config, data.corrs, scene.camera_gt.image_size, f_init, index)
        errs = scene_errors(scene, res.pose, res.focal_px)
        row.update(status="ok", f_est=res.focal_px, **errs)
    except (PnPfError, np.linalg.LinAlgError) as exc:
        row.update(status=type(exc).__name__, f_est=float("nan"), **_failed_errors())
    return row


def _run_chunk(args):
    config, indices, f_const = args
    return [run_scene(config, i, f_const) for i in indices]


def run_scenes(config: ExperimentConfig, jobs: int = 1) -> list:
    """Per-scene rows ordered by scene index."""
    f_const = constant_focal(config) if config.focal_init == "Constant" else float("nan")
    indices = list(range(config.n_scenes))
    if jobs <= 1 or len(indices) < 2:
        return _run_chunk((config, indices, f_const))
    chunks = [indices[k::jobs] for k in range(jobs)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_run_chunk, [(config, c, f_const) for c in chunks if c]))
    rows = [r for part in parts for r in part]
    return sorted(rows, key=lambda r: r["scene_id"])


def summarize(rows) -> tuple:
    """``(MetricsReport, e_rt accuracy curve)``; raises when most scenes failed."""
    failed = sum(r["status"] != "ok" for r in rows)
    if 2 * failed > len(rows):
        raise ExperimentFailure(f"{failed} of {len(rows)} scenes failed to solve")
    report = aggregate(rows)
    curve = accuracy_curve([r["e_rt"] for r in rows], CURVE_THRESHOLDS)
    return report, curve


# --------------------------------------------------------------------------- artifacts

def per_scene_csv(rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PER_SCENE_COLUMNS)
    for r in rows:
        w.writerow([r["scene_id"], r["scene_hash"], r["status"]]
                   + [io.fmt(r[k]) for k in PER_SCENE_COLUMNS[3:]])
    return buf.getvalue()


def read_per_scene_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["scene_id"] = int(r["scene_id"])
        for k in PER_SCENE_COLUMNS[3:]:
            r[k] = float(r[k])
    return rows


def write_manifest(out: Path, config: ExperimentConfig, artifacts, command="run", extra=None):
    manifest = {
        "command": command,
        # the output location is left out so a rerun elsewhere reproduces this file byte for byte
        "config": {k: v for k, v in config.to_dict().items() if k != "output_dir"},
        "seed": config.seed,
        "artifacts": {name: io.sha256_file(out / name) for name in sorted(artifacts)},
    }
    if extra:
        manifest.update(extra)
    io.write_json(out / "manifest.json", manifest)
    return manifest


@dataclass
class ExperimentResult:
    report: MetricsReport
    curve: list
    rows: list
    output_dir: Path


def run_experiment(config: ExperimentConfig, jobs: int = 1, output_dir=None) -> ExperimentResult:
    """Run ``config`` end to end and write its artifacts to ``output_dir``."""
    out = Path(output_dir if output_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = run_scenes(config, jobs)
    (out / "per_scene.csv").write_text(per_scene_csv(rows))
    report, curve = summarize(rows)
    (out / "report.json").write_text(report.to_json())
    write_curve_csv(out / "curve_rt.csv", curve)
    write_manifest(out, config, ["per_scene.csv", "report.json", "curve_rt.csv"])
    return ExperimentResult(report, curve, rows, out)


def run_ablation_suite(kind: str, base_config: ExperimentConfig, jobs: int = 1, output_dir=None):
    """Run every value of one axis on identical scenes; returns ``{cell: ExperimentResult}``.

    Writes one sub-directory per cell plus ``ablation.csv`` with one row per
    cell and every report column.
    """
    if kind not in ABLATIONS:
        raise ConfigError(f"ablation kind must be one of {sorted(ABLATIONS)}, got {kind!r}")
    axis, values = ABLATIONS[kind]
    out = Path(output_dir if output_dir is not None else base_config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = {}
    for value in values:
        cfg = base_config.with_(**{axis: value})
        cells[value] = run_experiment(cfg, jobs, out / value)
    hashes = {v: [r["scene_hash"] for r in res.rows] for v, res in cells.items()}
    reference = hashes[values[0]]
    for v, h in hashes.items():
        if h != reference:
            raise ExperimentFailure(f"ablation cell {v} saw different scenes than {values[0]}")
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    columns = list(MetricsReport.__dataclass_fields__)
    w.writerow([axis] + columns)
    for v, res in cells.items():
        d = res.report.to_dict()
        w.writerow([v] + [d[c] if c == "sample_count" else io.fmt(d[c]) for c in columns])
    (out / "ablation.csv").write_text(buf.getvalue())
    artifacts = ["ablation.csv"] + [f"{v}/{name}" for v in values
                                    for name in ("per_scene.csv", "report.json", "curve_rt.csv")]
    write_manifest(out, base_config, artifacts, command="ablate", extra={"kind": kind})
    return cells
