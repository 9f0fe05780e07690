"""Joint refinement of pose and focal length by minimising reprojection error.

The objective is the mean per-correspondence loss of the pixel reprojection
distance. Squared loss is minimised by Levenberg-Marquardt; the Cauchy loss by
iteratively reweighted Levenberg-Marquardt, where a step is kept only when the
robust cost itself decreases.

Parameters are updated in a local chart: a right-multiplied axis-angle
increment for each rotation, an additive increment for each translation, and
one additive increment of ``ln f`` shared by every object.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .correspondences import CorrespondenceSet
from .exceptions import CheiralityViolation, DivergedError, NotEnoughCorrespondences
from .geometry import (PinholeCamera, RigidPose, exp_focal, log_focal, project_points,
                       projection_jacobians)
from .losses import CauchyLoss, SquaredLoss

MAX_CONSECUTIVE_REJECTIONS = 20


@dataclass(frozen=True)
class SolverOptions:
    loss: SquaredLoss | CauchyLoss = field(default_factory=SquaredLoss)
    max_iterations: int = 100
    cost_rel_tol: float = 1e-10
    step_tol: float = 1e-12
    initial_damping: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 0.1
    refine_focal: bool = True
    focal_bounds: tuple = (50.0, 50000.0)

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")
        if not (self.cost_rel_tol > 0 and self.step_tol > 0 and self.initial_damping > 0):
            raise ValueError("tolerances and damping must be positive")
        if not (self.damping_up > 1 and 0 < self.damping_down < 1):
            raise ValueError("damping_up must exceed 1 and damping_down lie in (0, 1)")
        lo, hi = self.focal_bounds
        if not 0 < lo < hi:
            raise ValueError(f"invalid focal bounds {self.focal_bounds}")


@dataclass(eq=False)
class SolveResult:
    pose: RigidPose
    focal_px: float
    final_cost: float
    initial_cost: float
    iterations: int
    converged: bool
    inlier_mask: np.ndarray
    per_iteration_cost: list
    termination: str = ""


def residuals_and_cost(corrs: CorrespondenceSet, pose: RigidPose, focal, loss,
                       camera_geom: PinholeCamera):
    """Reprojection residuals (N, 2) and ``mean_i w_i L(||r_i||)``.

    ``camera_geom`` supplies the principal point; its focal is ignored.
    """
    cam = _Camera(focal, camera_geom.principal_point)
    res = project_points(corrs.points3d, pose, cam) - corrs.points2d
    norms = np.linalg.norm(res, axis=1)
    cost = float(np.sum(corrs.weights * loss.value(norms)) / len(corrs))
    return res, cost


@dataclass(frozen=True)
class _Camera:
    focal_px: float
    principal_point: np.ndarray


class _Problem:
    """Stacked multi-object reprojection problem with a shared focal length."""

    def __init__(self, blocks, principal_point, loss, refine_focal):
        # blocks: list of (X, x, c) with c the per-correspondence cost factor
        self.blocks = blocks
        self.pp = principal_point
        self.loss = loss
        self.refine_focal = refine_focal

    def cost(self, poses, y):
        f = np.exp(y)
        total = 0.0
        for (X, x, c), pose in zip(self.blocks, poses):
            Xc = X @ pose.rotation.T + pose.translation
            if np.any(~(Xc[:, 2] > 1e-9)):
                raise CheiralityViolation("trial pose puts points behind the camera")
            uv = f * Xc[:, :2] / Xc[:, 2:3] + self.pp
            r = np.sqrt(np.sum((uv - x) ** 2, axis=1))
            total += float(np.sum(c * self.loss.value(r)))
        return total

    def linearize(self, poses, y):
        """Per-block ``(H, g)`` of the IRLS-weighted normal equations."""
        f = np.exp(y)
        out = []
        for (X, x, c), pose in zip(self.blocks, poses):
            uv, J = projection_jacobians(X, pose, f, self.pp, self.refine_focal)
            e = uv - x
            r = np.sqrt(np.sum(e * e, axis=1))
            w = c * self.loss.irls_weight(r)
            Jr = J.reshape(-1, J.shape[2])
            wr = np.repeat(w, 2)
            Jw = Jr * wr[:, None]
            H = Jw.T @ Jr
            g = Jw.T @ e.reshape(-1)
            out.append((H, g))
        return out


def _solve_damped(lin, lam, refine_focal):
    """Solve ``(H + lam diag(H)) d = -g`` exploiting the arrow structure."""
    if len(lin) == 1:
        H, g = lin[0]
        d = np.diag(H)
        Hd = H + lam * np.diag(np.maximum(d, 1e-12 * max(d.max(), 1e-300)))
        return [np.linalg.solve(Hd, -g)]
    if not refine_focal:
        steps = []
        for H, g in lin:
            d = np.diag(H)
            Hd = H + lam * np.diag(np.maximum(d, 1e-12 * max(d.max(), 1e-300)))
            steps.append(np.linalg.solve(Hd, -g))
        return steps
    # Schur complement on the single shared focal coordinate
    s_ff = 0.0
    r_f = 0.0
    cache = []
    hff_total = sum(H[6, 6] for H, _ in lin)
    for H, g in lin:
        A = H[:6, :6]
        dA = np.diag(A)
        A = A + lam * np.diag(np.maximum(dA, 1e-12 * max(dA.max(), 1e-300)))
        b = H[:6, 6]
        Ainv_b = np.linalg.solve(A, b)
        Ainv_g = np.linalg.solve(A, g[:6])
        s_ff -= b @ Ainv_b
        r_f -= g[6] - b @ Ainv_g
        cache.append((Ainv_b, Ainv_g))
    s_ff += hff_total + lam * max(hff_total, 1e-300)
    df = r_f / s_ff
    steps = []
    for Ainv_b, Ainv_g in cache:
        dp = -Ainv_g - Ainv_b * df
        steps.append(np.concatenate([dp, [df]]))
    return steps


def _levenberg_marquardt(problem, poses, y, opts, log_bounds):
    poses = list(poses)
    try:
        cost = problem.cost(poses, y)
    except CheiralityViolation as exc:
        raise CheiralityViolation(f"initial pose violates cheirality: {exc}") from None
    initial_cost = cost
    trace = [cost]
    lam = opts.initial_damping
    converged = False
    termination = "max_iterations"
    iterations = 0

    def xnorm():
        v = [np.linalg.norm(p.translation) for p in poses]
        return float(np.sqrt(np.sum(np.square(v)) + y * y))

    while iterations < opts.max_iterations:
        if cost == 0.0:
            converged, termination = True, "zero_cost"
            break
        lin = problem.linearize(poses, y)
        rejections = 0
        accepted = False
        while True:
            steps = _solve_damped(lin, lam, problem.refine_focal)
            step_norm = float(np.sqrt(sum(s @ s for s in steps)))
            if not np.isfinite(step_norm):
                raise DivergedError("non-finite step")
            if step_norm <= opts.step_tol * (1.0 + xnorm()):
                converged, termination = True, "step_tol"
                break
            trial_poses = [p.retract(s[:6]) for p, s in zip(poses, steps)]
            trial_y = y
            if problem.refine_focal:
                trial_y = float(np.clip(y + steps[0][6], *log_bounds))
            try:
                trial_cost = problem.cost(trial_poses, trial_y)
            except CheiralityViolation:
                trial_cost = np.inf
            if trial_cost < cost:
                accepted = True
                lam = max(lam * opts.damping_down, 1e-15)
                break
            rejections += 1
            if rejections >= MAX_CONSECUTIVE_REJECTIONS:
                raise DivergedError(
                    f"no step accepted after {rejections} consecutive damping increases")
            lam *= opts.damping_up
        if not accepted:
            break
        iterations += 1
        rel_change = (cost - trial_cost) / cost
        poses, y, cost = trial_poses, trial_y, trial_cost
        trace.append(cost)
        if rel_change < opts.cost_rel_tol:
            converged, termination = True, "cost_rel_tol"
            break
    return poses, y, cost, initial_cost, iterations, converged, trace, termination


def _validate_focal(focal, opts):
    lo, hi = opts.focal_bounds
    if not lo <= focal <= hi:
        raise ValueError(f"focal {focal} outside bounds {opts.focal_bounds}")


def _run(objects, focal, camera_geom, opts, refine_focal):
    _validate_focal(focal, opts)
    total = sum(len(c) for c, _ in objects)
    k = len(objects)
    if k < 1:
        raise ValueError("need at least one object")
    needed = 4 + 3 * (k - 1)
    if total < needed or any(len(c) == 0 for c, _ in objects):
        raise NotEnoughCorrespondences(
            f"{k} object(s) need at least {needed} correspondences in total, got {total}")
    blocks = [(c.points3d, c.points2d, c.weights / (k * len(c))) for c, _ in objects]
    problem = _Problem(blocks, camera_geom.principal_point, opts.loss, refine_focal)
    log_bounds = (np.log(opts.focal_bounds[0]), np.log(opts.focal_bounds[1]))
    poses, y, cost, c0, its, conv, trace, term = _levenberg_marquardt(
        problem, [p for _, p in objects], log_focal(focal), opts, log_bounds)
    f_out = exp_focal(y) if refine_focal else float(focal)
    return poses, f_out, cost, c0, its, conv, trace, term


def refine_joint(corrs: CorrespondenceSet, init: RigidPose, init_focal,
                 camera_geom: PinholeCamera, opts: SolverOptions | None = None) -> SolveResult:
    """Refine rotation, translation and focal length (7 parameters).

    ``camera_geom`` supplies the principal point; its focal is ignored.
    With ``opts.refine_focal`` off this reduces to :func:`refine_pose_fixed_focal`.
    """
    opts = opts or SolverOptions()
    corrs.require_solvable()
    poses, f, cost, c0, its, conv, trace, term = _run(
        [(corrs, init)], init_focal, camera_geom, opts, opts.refine_focal)
    return SolveResult(poses[0], f, cost, c0, its, conv,
                       np.ones(len(corrs), dtype=bool), trace, term)


def refine_pose_fixed_focal(corrs: CorrespondenceSet, init: RigidPose, fixed_focal,
                            camera_geom: PinholeCamera,
                            opts: SolverOptions | None = None) -> SolveResult:
    """Refine the 6-DoF pose only, holding the focal length at ``fixed_focal``."""
    opts = opts or SolverOptions()
    corrs.require_solvable()
    poses, f, cost, c0, its, conv, trace, term = _run(
        [(corrs, init)], fixed_focal, camera_geom, opts, False)
    return SolveResult(poses[0], f, cost, c0, its, conv,
                       np.ones(len(corrs), dtype=bool), trace, term)


def refine_multi_object(objects, init_focal, camera_geom: PinholeCamera,
                        opts: SolverOptions | None = None):
    """Refine several objects seen by one camera: ``1 + 6N`` parameters.

    The cost is the mean over objects of each object's mean loss. Returns the
    per-object results (sharing cost/iteration bookkeeping) and the focal.
    """
    opts = opts or SolverOptions()
    objects = [(c, p) for c, p in objects]
    poses, f, cost, c0, its, conv, trace, term = _run(
        objects, init_focal, camera_geom, opts, opts.refine_focal)
    results = [SolveResult(p, f, cost, c0, its, conv, np.ones(len(c), dtype=bool), trace, term)
               for (c, _), p in zip(objects, poses)]
    return results, f
