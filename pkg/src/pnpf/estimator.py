"""scikit-learn style wrapper: fit a camera (pose + focal) to 2D-3D pairs."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .correspondences import CorrespondenceSet
from .epnp import solve_epnp
from .geometry import PinholeCamera, project_points, transform_points
from .losses import make_loss
from .ransac import RansacOptions, robust_initial_pose, solve_ransac
from .refine import SolverOptions, refine_joint, refine_pose_fixed_focal


class PnPfEstimator(BaseEstimator):
    """Estimate rotation, translation and focal length from correspondences.

    ``fit(X, y)`` takes object points ``X`` of shape ``(N, 3)`` and pixel
    locations ``y`` of shape ``(N, 2)``. ``predict`` projects 3D points with
    the fitted camera; ``transform`` maps them into the camera frame.

    Parameters
    ----------
    focal_init : initial focal length in pixels; ``None`` uses the image diagonal.
    image_size : ``(width, height)``; the principal point is the image center.
    refine : ``"joint"`` (pose and focal), ``"fixed"`` (pose only) or ``"none"``.
    strategy : ``"standard"``, ``"cauchy"`` or ``"ransac"``.
    """

    def __init__(self, focal_init=None, image_size=(640, 480), refine="joint",
                 strategy="standard", cauchy_scale=10.0, ransac_threshold_px=5.0,
                 max_iterations=100, random_state=0):
        self.focal_init = focal_init
        self.image_size = image_size
        self.refine = refine
        self.strategy = strategy
        self.cauchy_scale = cauchy_scale
        self.ransac_threshold_px = ransac_threshold_px
        self.max_iterations = max_iterations
        self.random_state = random_state

    def _camera(self):
        w, h = self.image_size
        f = float(np.hypot(w, h)) if self.focal_init is None else float(self.focal_init)
        return PinholeCamera(f, (int(w), int(h)))

    def fit(self, X, y, sample_weight=None):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True, ensure_min_samples=4)
        if X.shape[1] != 3 or y.ndim != 2 or y.shape[1] != 2:
            raise ValueError(f"expected X of shape (N, 3) and y of shape (N, 2), got {X.shape} and {y.shape}")
        if self.refine not in ("joint", "fixed", "none"):
            raise ValueError(f"unknown refine mode {self.refine!r}")
        if self.strategy not in ("standard", "cauchy", "ransac"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        corrs = CorrespondenceSet(X, y, sample_weight)
        camera = self._camera()
        loss = make_loss("cauchy" if self.strategy == "cauchy" else "squared", self.cauchy_scale)
        opts = SolverOptions(loss=loss, max_iterations=self.max_iterations,
                             refine_focal=self.refine == "joint")
        ropts = RansacOptions(inlier_threshold_px=self.ransac_threshold_px,
                              rng_seed=int(self.random_state))
        mask = np.ones(len(corrs), dtype=bool)
        if self.strategy == "ransac":
            res = solve_ransac(corrs, camera, ropts, opts, refine=self.refine)
            pose, focal, mask = res.pose, res.focal_px, res.inlier_mask
        else:
            if self.strategy == "cauchy":
                pose = robust_initial_pose(corrs, camera, ropts)
            else:
                pose = solve_epnp(corrs, camera)
            focal = camera.focal_px
            res = None
            if self.refine == "joint":
                res = refine_joint(corrs, pose, focal, camera, opts)
            elif self.refine == "fixed":
                res = refine_pose_fixed_focal(corrs, pose, focal, camera, opts)
            if res is not None:
                pose, focal = res.pose, res.focal_px
        self.pose_ = pose
        self.focal_ = float(focal)
        self.camera_ = camera.with_focal(self.focal_)
        self.inlier_mask_ = mask
        self.result_ = res
        self.n_features_in_ = 3
        return self

    def transform(self, X):
        check_is_fitted(self, "pose_")
        X = check_array(X)
        return transform_points(self.pose_, X)

    def predict(self, X):
        check_is_fitted(self, "pose_")
        X = check_array(X)
        return project_points(X, self.pose_, self.camera_)

    def score(self, X, y):
        """Negative mean reprojection distance in pixels (higher is better)."""
        y = check_array(y)
        return -float(np.mean(np.linalg.norm(self.predict(X) - y, axis=1)))
