"""Camera pose and focal length from 2D-3D correspondences."""
from .correspondences import MIN_CORRESPONDENCES, CorrespondenceSet
from .epnp import solve_epnp
from .estimator import PnPfEstimator
from .exceptions import *  # noqa: F401,F403
from .experiment import ExperimentConfig, run_ablation_suite, run_experiment
from .geometry import (PinholeCamera, RigidPose, geodesic_distance, project, project_points,
                       projection_jacobian)
from .losses import CauchyLoss, SquaredLoss, loss_value_and_weight
from .metrics import (EvalSample, MetricsReport, accuracy_curve, aggregate, focal_error, pose_error,
                      projection_error, rotation_error, translation_error)
from .ransac import RansacOptions, solve_ransac
from .refine import (SolveResult, SolverOptions, refine_joint, refine_multi_object,
                     refine_pose_fixed_focal)
from .synth import (FocalPredictorModel, NoiseSpec, SceneSpec, generate_bb_correspondences,
                    generate_lf_correspondences, sample_scene)

__version__ = "0.1.0"
