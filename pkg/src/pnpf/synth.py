"""Seeded synthetic scenes and noisy 2D-3D correspondences.

Two correspondence formats are produced:

* ``BB``: the eight corners of a 3D bounding box built from (noisy) predicted
  dimensions, paired with noisy projections of the true corners.
* ``LF``: a ``grid x grid`` lattice over the object's 2D bounding box; every
  cell whose center ray hits the visible object surface yields the hit point
  in object coordinates paired with the cell center.

All randomness flows from ``numpy.random.SeedSequence`` keyed by
``(seed, stream, index)`` so any scene can be regenerated in isolation.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from .correspondences import CorrespondenceSet
from .exceptions import EmptyField, SamplingExhausted
from .geometry import (CHEIRALITY_EPS, PinholeCamera, RigidPose, random_rotation,
                       rotation_about, transform_points)

MAX_SAMPLING_ATTEMPTS = 1000

SCENE_STREAM = 0
CORRESPONDENCE_STREAM = 1
PREDICTOR_STREAM = 2
SOLVER_STREAM = 3
TRAINING_STREAM = 4

_SIGNS = np.array(list(itertools.product((-1.0, 1.0), repeat=3)))


def stream_rng(seed, stream, index):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(stream, int(index))))


@dataclass(frozen=True, eq=False)
class BoxModel:
    """Axis-aligned box centered at the object origin."""

    dims: tuple = (1.0, 1.0, 1.0)
    surface_resolution: int = 5

    def __post_init__(self):
        dims = tuple(float(d) for d in self.dims)
        if len(dims) != 3 or min(dims) <= 0:
            raise ValueError(f"box dims must be three positive numbers, got {self.dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def center(self):
        return np.zeros(3)

    def corners(self, dims=None):
        d = np.asarray(self.dims if dims is None else dims, dtype=float)
        return _SIGNS * d / 2.0

    def surface_points(self):
        """Regular lattice on the six faces, corners included, no duplicates."""
        n = self.surface_resolution
        g = np.linspace(-0.5, 0.5, n)
        pts = set()
        for axis in range(3):
            others = [a for a in range(3) if a != axis]
            for side in (-0.5, 0.5):
                for a, b in itertools.product(g, g):
                    p = [0.0, 0.0, 0.0]
                    p[axis] = side
                    p[others[0]] = a
                    p[others[1]] = b
                    pts.add(tuple(p))
        return np.array(sorted(pts)) * np.asarray(self.dims)


@dataclass(frozen=True, eq=False)
class PointCloudModel:
    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 3)
        if pts.shape[0] == 0:
            raise ValueError("point cloud is empty")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def center(self):
        return 0.5 * (self.points.min(axis=0) + self.points.max(axis=0))

    @property
    def dims(self):
        return tuple(self.points.max(axis=0) - self.points.min(axis=0))

    def corners(self, dims=None):
        d = np.asarray(self.dims if dims is None else dims, dtype=float)
        return self.center + _SIGNS * d / 2.0

    def surface_points(self):
        return self.points


@dataclass(frozen=True)
class ViewRange:
    """Rotation ``Rz(roll) @ Rx(elevation) @ Ry(azimuth)`` with uniform angles (rad)."""

    azimuth: tuple = (-np.pi, np.pi)
    elevation: tuple = (0.0, np.pi / 4)
    roll: tuple = (0.0, 0.0)

    def sample(self, rng):
        az, el, ro = (_uniform(rng, r) for r in (self.azimuth, self.elevation, self.roll))
        return (rotation_about([0, 0, 1], ro) @ rotation_about([1, 0, 0], el)
                @ rotation_about([0, 1, 0], az))


def _uniform(rng, bounds):
    lo, hi = bounds
    u = rng.uniform()
    return lo + (hi - lo) * u


@dataclass(frozen=True)
class SceneSpec:
    model: BoxModel | PointCloudModel = field(default_factory=BoxModel)
    distance_range: tuple = (2.0, 25.0)
    rotation_distribution: ViewRange | str = "uniform"
    focal_range_px: tuple = (300.0, 3000.0)
    image_size: tuple = (640, 480)
    rng_seed: int = 0
    placement_jitter: float = 0.5

    def __post_init__(self):
        lo, hi = self.distance_range
        if not 0 < lo <= hi:
            raise ValueError(f"invalid distance range {self.distance_range}")
        flo, fhi = self.focal_range_px
        if not 0 < flo <= fhi:
            raise ValueError(f"invalid focal range {self.focal_range_px}")
        if not 0 <= self.placement_jitter <= 1:
            raise ValueError("placement_jitter must lie in [0, 1]")
        if isinstance(self.rotation_distribution, str) and self.rotation_distribution != "uniform":
            raise ValueError(f"unknown rotation distribution {self.rotation_distribution!r}")


@dataclass(frozen=True, eq=False)
class GroundTruthScene:
    index: int
    pose_gt: RigidPose
    camera_gt: PinholeCamera
    model: BoxModel | PointCloudModel
    model_points: np.ndarray
    bbox_diag_px: float
    image_diag_px: float
    dims_gt: np.ndarray

    @property
    def f_gt(self):
        return self.camera_gt.focal_px

    def projected_bbox(self):
        """``(min_uv, max_uv)`` of the projected model points."""
        return _tight_box(_project_any(self.model_points, self.pose_gt, self.camera_gt))


@dataclass(frozen=True)
class NoiseSpec:
    pixel_sigma: float = 0.0
    point3_sigma: float = 0.0
    outlier_rate: float = 0.0
    outlier_model: str = "uniform"
    dims_rel_sigma: float = 0.0

    def __post_init__(self):
        if min(self.pixel_sigma, self.point3_sigma, self.dims_rel_sigma) < 0:
            raise ValueError("noise sigmas must be non-negative")
        if not 0 <= self.outlier_rate < 1:
            raise ValueError("outlier_rate must lie in [0, 1)")
        if self.outlier_model != "uniform":
            raise ValueError(f"unsupported outlier model {self.outlier_model!r}")


def calibrated_log_sigma(median_rel_error):
    """Log-normal sigma whose median ``|f_pred / f_gt - 1|`` equals the target.

    Solves ``Phi(ln(1+m)/s) - Phi(ln(1-m)/s) = 1/2`` for ``s``.
    """
    m = float(median_rel_error)
    if not 0 < m < 1:
        raise ValueError("median relative error must lie in (0, 1)")
    hi, lo = np.log1p(m), np.log1p(-m)
    return float(brentq(lambda s: norm.cdf(hi / s) - norm.cdf(lo / s) - 0.5, 1e-6, 50.0))


# target median relative error of the simulated focal predictor
DEFAULT_LOG_SIGMA = calibrated_log_sigma(0.175)


@dataclass(frozen=True)
class FocalPredictorModel:
    log_sigma: float = DEFAULT_LOG_SIGMA
    bias: float = 0.0

    def __post_init__(self):
        if self.log_sigma < 0:
            raise ValueError("log_sigma must be non-negative")


def _tight_box(uv):
    return uv.min(axis=0), uv.max(axis=0)


def sample_scene(spec: SceneSpec, index: int, stream: int = SCENE_STREAM) -> GroundTruthScene:
    """Deterministic scene number ``index`` of ``spec``.

    Focal lengths are log-uniform, distances uniform (measured along the ray to
    the object origin), and the object origin is placed at a jittered pixel.
    Rotation, distance and placement are redrawn until every model point is in
    front of the camera and inside the image; the focal length is drawn once.
    """
    rng = stream_rng(spec.rng_seed, stream, index)
    model = spec.model
    pts = model.surface_points()
    w, h = spec.image_size
    flo, fhi = spec.focal_range_px
    # f is drawn once so that visibility rejection cannot bias its distribution
    f = float(np.exp(_uniform(rng, (np.log(flo), np.log(fhi)))))
    for _ in range(MAX_SAMPLING_ATTEMPTS):
        if spec.rotation_distribution == "uniform":
            R = random_rotation(rng)
        else:
            R = spec.rotation_distribution.sample(rng)
        d = _uniform(rng, spec.distance_range)
        jitter = spec.placement_jitter * rng.uniform(-1.0, 1.0, size=2)
        ray = np.array([jitter[0] * w / 2.0 / f, jitter[1] * h / 2.0 / f, 1.0])
        t = d * ray / np.linalg.norm(ray) - R @ model.center
        pose = RigidPose(R, t)
        camera = PinholeCamera(f, (w, h))
        Xc = transform_points(pose, pts)
        if np.any(Xc[:, 2] <= CHEIRALITY_EPS):
            continue
        uv = f * Xc[:, :2] / Xc[:, 2:3] + camera.principal_point
        if np.any(uv < 0) or np.any(uv[:, 0] > w) or np.any(uv[:, 1] > h):
            continue
        lo, hi = uv.min(axis=0), uv.max(axis=0)
        return GroundTruthScene(
            index=int(index), pose_gt=pose, camera_gt=camera, model=model,
            model_points=pts, bbox_diag_px=float(np.linalg.norm(hi - lo)),
            image_diag_px=camera.image_diagonal, dims_gt=np.asarray(model.dims, dtype=float))
    raise SamplingExhausted(
        f"no visible placement for scene {index} after {MAX_SAMPLING_ATTEMPTS} attempts")


def _corrupt_2d(points2d, noise, image_size, rng):
    x = points2d + noise.pixel_sigma * rng.standard_normal(points2d.shape)
    outlier = rng.uniform(size=x.shape[0]) < noise.outlier_rate
    w, h = image_size
    replacement = rng.uniform(size=x.shape) * np.array([w, h])
    x[outlier] = replacement[outlier]
    return x, outlier


def generate_bb_correspondences(scene: GroundTruthScene, noise: NoiseSpec, rng,
                                return_outliers=False):
    """Eight box-corner correspondences and the predicted box dimensions."""
    dims_gt = np.asarray(scene.dims_gt, dtype=float)
    dims_pred = dims_gt * (1.0 + noise.dims_rel_sigma * rng.standard_normal(3))
    dims_pred = np.maximum(dims_pred, 1e-3 * dims_gt)
    X_true = scene.model.corners(dims_gt)
    uv = _project_any(X_true, scene.pose_gt, scene.camera_gt)
    x, outlier = _corrupt_2d(uv, noise, scene.camera_gt.image_size, rng)
    corrs = CorrespondenceSet(scene.model.corners(dims_pred), x)
    if return_outliers:
        return corrs, dims_pred, outlier
    return corrs, dims_pred


def _project_any(points, pose, camera):
    Xc = transform_points(pose, points)
    return camera.focal_px * Xc[:, :2] / Xc[:, 2:3] + camera.principal_point


def _ray_box(origin, dirs, half):
    """Entry distance of rays ``origin + s * dirs`` into the box ``|p| <= half``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t1 = (-half - origin) * inv
        t2 = (half - origin) * inv
    t1 = np.where(np.isnan(t1), -np.inf, t1)
    t2 = np.where(np.isnan(t2), np.inf, t2)
    near = np.minimum(t1, t2).max(axis=1)
    far = np.maximum(t1, t2).min(axis=1)
    hit = (near <= far) & (near > 0)
    return near, hit


def _lattice(scene, grid):
    lo, hi = _tight_box(_project_any(scene.model_points, scene.pose_gt, scene.camera_gt))
    step = (hi - lo) / grid
    i, j = np.meshgrid(np.arange(grid), np.arange(grid), indexing="xy")
    centers = lo + (np.stack([i.ravel(), j.ravel()], axis=1) + 0.5) * step
    return centers, step


def location_field(scene: GroundTruthScene, grid: int = 28):
    """Noise-free ``(points3d, cell_centers)`` of the visible surface."""
    if grid < 4:
        raise ValueError(f"grid must be >= 4, got {grid}")
    centers, step = _lattice(scene, grid)
    cam = scene.camera_gt
    pose = scene.pose_gt
    R = pose.rotation
    if isinstance(scene.model, BoxModel):
        rays = np.column_stack([(centers - cam.principal_point) / cam.focal_px,
                                np.ones(len(centers))])
        origin = -R.T @ pose.translation
        dirs = rays @ R  # R.T @ ray for each row
        s, hit = _ray_box(origin, dirs, np.asarray(scene.model.dims) / 2.0)
        X = origin + s[:, None] * dirs
        return X[hit], centers[hit]
    # point cloud: nearest point per cell (z-buffer)
    uv = _project_any(scene.model.points, pose, cam)
    depth = transform_points(pose, scene.model.points)[:, 2]
    lo = centers[0] - 0.5 * step
    cell = np.floor((uv - lo) / step).astype(int)
    cell = np.clip(cell, 0, grid - 1)
    flat = cell[:, 1] * grid + cell[:, 0]
    order = np.lexsort((depth, flat))
    first = np.ones(order.shape[0], dtype=bool)
    first[1:] = flat[order][1:] != flat[order][:-1]
    chosen = order[first]
    return scene.model.points[chosen], centers[flat[chosen]]


def generate_lf_correspondences(scene: GroundTruthScene, grid: int = 28,
                                noise: NoiseSpec | None = None, rng=None,
                                return_outliers=False):
    """Location-field style dense correspondences sampled on a ``grid x grid`` lattice."""
    noise = noise or NoiseSpec()
    rng = rng if rng is not None else np.random.default_rng(0)
    X, x = location_field(scene, grid)
    if X.shape[0] == 0:
        raise EmptyField(f"no lattice cell of scene {scene.index} hits the object")
    X = X + noise.point3_sigma * rng.standard_normal(X.shape)
    x, outlier = _corrupt_2d(x, noise, scene.camera_gt.image_size, rng)
    corrs = CorrespondenceSet(X, x)
    if return_outliers:
        return corrs, outlier
    return corrs


def simulate_focal_prediction(f_gt, model: FocalPredictorModel, rng):
    """Log-normal focal prediction ``exp(ln f_gt + bias + N(0, log_sigma^2))``."""
    if not f_gt > 0:
        raise ValueError("f_gt must be positive")
    z = rng.standard_normal()
    return float(np.exp(np.log(f_gt) + model.bias + model.log_sigma * z))


def constant_focal_baseline(training_scenes) -> float:
    """Median ground-truth focal length of a set of scenes."""
    focals = [s.f_gt if hasattr(s, "f_gt") else float(s) for s in training_scenes]
    if not focals:
        raise ValueError("need at least one scene")
    return float(np.median(focals))
