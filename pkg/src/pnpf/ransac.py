"""Hypothesize-and-verify wrapper around EPnP and the joint refiner."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .correspondences import MIN_CORRESPONDENCES, CorrespondenceSet
from .epnp import solve_epnp
from .exceptions import DegenerateGeometry, NoConsensus, NotEnoughCorrespondences, NoValidCandidate
from .geometry import PinholeCamera
from .refine import SolveResult, SolverOptions, refine_joint, refine_pose_fixed_focal, residuals_and_cost

CONSENSUS_ROUNDS = 3


@dataclass(frozen=True)
class RansacOptions:
    sample_size: int = 4
    inlier_threshold_px: float = 5.0
    max_iterations: int = 256
    confidence: float = 0.99
    rng_seed: int = 0

    def __post_init__(self):
        if self.sample_size < MIN_CORRESPONDENCES:
            raise ValueError(f"sample_size must be >= {MIN_CORRESPONDENCES}, got {self.sample_size}")
        if not self.inlier_threshold_px > 0:
            raise ValueError("inlier_threshold_px must be positive")
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must lie in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")


def required_iterations(inlier_ratio, sample_size, confidence):
    """Trials needed to draw one all-inlier sample with the given confidence."""
    p_good = inlier_ratio ** sample_size
    if p_good >= 1.0:
        return 1
    if p_good <= 0.0:
        return math.inf
    return math.ceil(math.log(1.0 - confidence) / math.log(1.0 - p_good))


def reprojection_distances(corrs, pose, focal, principal_point):
    """Pixel distances; points behind the camera get ``inf``."""
    Xc = corrs.points3d @ pose.rotation.T + pose.translation
    z = Xc[:, 2]
    front = z > 1e-9
    uv = focal * Xc[:, :2] / np.where(front, z, 1.0)[:, None] + principal_point
    d = np.linalg.norm(uv - corrs.points2d, axis=1)
    return np.where(front, d, np.inf)


def _best_hypothesis(corrs, camera, opts):
    """Best minimal-sample EPnP pose and its consensus mask (before any refinement)."""
    n = len(corrs)
    if n < opts.sample_size:
        raise NotEnoughCorrespondences(f"need at least {opts.sample_size} correspondences, got {n}")
    rng = np.random.default_rng(opts.rng_seed)
    pp = camera.principal_point
    thr = opts.inlier_threshold_px
    best_key = None
    best_pose = None
    best_mask = None
    bound = opts.max_iterations
    trial = 0
    while trial < min(bound, opts.max_iterations):
        idx = rng.choice(n, size=opts.sample_size, replace=False)
        trial += 1
        try:
            pose = solve_epnp(corrs.subset(idx), camera)
        except (DegenerateGeometry, NoValidCandidate, np.linalg.LinAlgError):
            continue
        d = reprojection_distances(corrs, pose, camera.focal_px, pp)
        mask = d < thr
        key = (int(mask.sum()), -float(d[mask].sum()))
        if best_key is None or key > best_key:
            best_key, best_pose, best_mask = key, pose, mask
            bound = required_iterations(key[0] / n, opts.sample_size, opts.confidence)

    minimum = opts.sample_size + 2
    if best_key is None or best_key[0] < minimum:
        got = 0 if best_key is None else best_key[0]
        raise NoConsensus(f"best consensus has {got} inliers, need {minimum}")
    try:
        pose = solve_epnp(corrs.subset(best_mask), camera)
    except (DegenerateGeometry, NoValidCandidate):
        pose = best_pose
    return pose, best_mask


def robust_initial_pose(corrs: CorrespondenceSet, camera: PinholeCamera,
                        opts: RansacOptions | None = None):
    """EPnP pose of the best sampled consensus set, at ``camera.focal_px``."""
    return _best_hypothesis(corrs, camera, opts or RansacOptions())[0]


def solve_ransac(corrs: CorrespondenceSet, camera: PinholeCamera,
                 opts: RansacOptions | None = None, refine_opts: SolverOptions | None = None,
                 refine: str = "joint"):
    """Robust pose and focal from correspondences contaminated by outliers.

    Minimal samples are solved by EPnP at ``camera.focal_px`` and scored by
    inlier count (ties broken by the summed inlier distance). The best
    consensus set is then refined jointly; consensus and refinement alternate
    until the inlier set stops changing.

    ``refine`` is ``"joint"``, ``"fixed"`` (pose only, focal held at
    ``camera.focal_px``) or ``"none"`` (EPnP on the consensus set).
    """
    if refine not in ("joint", "fixed", "none"):
        raise ValueError(f"unknown refine mode {refine!r}")
    opts = opts or RansacOptions()
    refine_opts = refine_opts or SolverOptions()
    init, mask = _best_hypothesis(corrs, camera, opts)
    pp = camera.principal_point
    thr = opts.inlier_threshold_px
    minimum = opts.sample_size + 2
    inliers = corrs.subset(mask)
    if refine == "none":
        _, cost = residuals_and_cost(inliers, init, camera.focal_px, refine_opts.loss, camera)
        return SolveResult(init, camera.focal_px, cost, cost, 0, True, mask.copy(), [cost], "initial_only")
    refiner = refine_joint if refine == "joint" else refine_pose_fixed_focal
    result = refiner(inliers, init, camera.focal_px, camera, refine_opts)
    for _ in range(CONSENSUS_ROUNDS - 1):
        d = reprojection_distances(corrs, result.pose, result.focal_px, pp)
        new_mask = d < thr
        if np.array_equal(new_mask, mask) or new_mask.sum() < minimum:
            break
        mask = new_mask
        result = refiner(corrs.subset(mask), result.pose, result.focal_px, camera, refine_opts)
    result.inlier_mask = mask.copy()
    return result
