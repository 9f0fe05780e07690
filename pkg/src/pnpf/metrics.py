"""Pose, focal and projection error metrics with median/accuracy aggregation.

Per-sample errors:

* rotation: geodesic angle between ground-truth and predicted rotations
* translation: ``||t_gt - t_pred|| / ||t_gt||``
* pose: mean model-point displacement, normalised by ``||t_gt||`` and scaled
  by ``d_bbox / d_img`` (object size in the image)
* focal: ``|f_gt - f_pred| / f_gt``
* projection: mean reprojection displacement of the model points divided by
  the ground-truth 2D box diagonal

Accuracy thresholds are strict: a sample counts only when its error is
*below* the threshold.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import DegenerateGroundTruth, EmptyInput, UnsortedThresholds
from .geometry import PinholeCamera, RigidPose, geodesic_distance, project_points, transform_points

ROTATION_THRESHOLD = np.pi / 6
PROJECTION_THRESHOLD = 0.1
CURVE_THRESHOLDS = tuple(np.round(np.arange(21) * 0.05, 2))

ERROR_NAMES = ("e_r", "e_t", "e_rt", "e_f", "e_p")


@dataclass(frozen=True, eq=False)
class EvalSample:
    model_points: np.ndarray
    pose_gt: RigidPose
    pose_pred: RigidPose
    f_gt: float
    f_pred: float
    image_size: tuple
    bbox_diag_px: float
    image_diag_px: float

    def __post_init__(self):
        pts = np.asarray(self.model_points, dtype=float).reshape(-1, 3)
        if pts.shape[0] == 0:
            raise DegenerateGroundTruth("model has no points")
        object.__setattr__(self, "model_points", pts)
        if not (self.bbox_diag_px > 0 and self.image_diag_px > 0):
            raise DegenerateGroundTruth("bbox and image diagonals must be positive")

    @property
    def principal_point(self):
        w, h = self.image_size
        return np.array([w / 2.0, h / 2.0])


def _t_gt_norm(sample):
    n = float(np.linalg.norm(sample.pose_gt.translation))
    if n == 0.0:
        raise DegenerateGroundTruth("ground-truth translation is zero")
    return n


def rotation_error(sample: EvalSample) -> float:
    return geodesic_distance(sample.pose_gt.rotation, sample.pose_pred.rotation)


def translation_error(sample: EvalSample) -> float:
    n = _t_gt_norm(sample)
    return float(np.linalg.norm(sample.pose_gt.translation - sample.pose_pred.translation) / n)


def pose_error(sample: EvalSample) -> float:
    n = _t_gt_norm(sample)
    a = transform_points(sample.pose_gt, sample.model_points)
    b = transform_points(sample.pose_pred, sample.model_points)
    ratio = sample.bbox_diag_px / sample.image_diag_px
    return float(ratio * np.mean(np.linalg.norm(a - b, axis=1)) / n)


def focal_error(sample: EvalSample) -> float:
    if not sample.f_gt > 0:
        raise DegenerateGroundTruth("ground-truth focal must be positive")
    return float(abs(sample.f_gt - sample.f_pred) / sample.f_gt)


def projection_error(sample: EvalSample) -> float:
    """Raises CheiralityViolation when either parameter set sees a point behind the camera."""
    cam_gt = PinholeCamera(sample.f_gt, sample.image_size)
    cam_pred = PinholeCamera(sample.f_pred, sample.image_size)
    a = project_points(sample.model_points, sample.pose_gt, cam_gt)
    b = project_points(sample.model_points, sample.pose_pred, cam_pred)
    return float(np.mean(np.linalg.norm(a - b, axis=1)) / sample.bbox_diag_px)


def evaluate_sample(sample: EvalSample) -> dict:
    return {
        "e_r": rotation_error(sample),
        "e_t": translation_error(sample),
        "e_rt": pose_error(sample),
        "e_f": focal_error(sample),
        "e_p": projection_error(sample),
    }


@dataclass(frozen=True)
class MetricsReport:
    med_err_r: float
    acc_r_pi6: float
    med_err_t: float
    med_err_rt: float
    med_err_f: float
    med_err_p: float
    acc_p_01: float
    sample_count: int

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})


def _median(values):
    v = np.sort(np.asarray(values, dtype=float))
    n = v.shape[0]
    mid = n // 2
    if n % 2:
        return float(v[mid])
    lo, hi = v[mid - 1], v[mid]
    if np.isinf(lo) and np.isinf(hi):
        return float(lo)
    return float(0.5 * (lo + hi))


def fraction_below(errors, threshold):
    e = np.asarray(errors, dtype=float)
    return float(np.mean(e < threshold))


def aggregate(errors) -> MetricsReport:
    """Medians and accuracies over per-sample error dicts (keys ``e_r`` ... ``e_p``)."""
    errors = list(errors)
    if not errors:
        raise EmptyInput("cannot aggregate zero samples")
    col = {k: np.array([e[k] for e in errors], dtype=float) for k in ERROR_NAMES}
    return MetricsReport(
        med_err_r=_median(col["e_r"]),
        acc_r_pi6=fraction_below(col["e_r"], ROTATION_THRESHOLD),
        med_err_t=_median(col["e_t"]),
        med_err_rt=_median(col["e_rt"]),
        med_err_f=_median(col["e_f"]),
        med_err_p=_median(col["e_p"]),
        acc_p_01=fraction_below(col["e_p"], PROJECTION_THRESHOLD),
        sample_count=len(errors),
    )


def accuracy_curve(errors, thresholds=CURVE_THRESHOLDS):
    """``[(threshold, fraction of errors below threshold), ...]``."""
    th = [float(t) for t in thresholds]
    if any(b < a for a, b in zip(th, th[1:])):
        raise UnsortedThresholds("thresholds must be sorted ascending")
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        raise EmptyInput("no errors")
    return [(t, fraction_below(e, t)) for t in th]


def write_curve_csv(path, curve):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "fraction"])
        for t, frac in curve:
            w.writerow([repr(float(t)), repr(float(frac))])


def read_curve_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return [(float(a), float(b)) for a, b in rows[1:]]
