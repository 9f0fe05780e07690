"""JSON interchange files for correspondences, solve results and reports.

Floats are written with ``repr`` precision so every value round-trips exactly.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .correspondences import CorrespondenceSet
from .geometry import RigidPose


def _floats(a):
    return [float(v) for v in np.asarray(a, dtype=float).ravel()]


def pose_to_dict(pose: RigidPose):
    return {"quaternion": _floats(pose.quaternion_wxyz()), "translation": _floats(pose.translation)}


def pose_from_dict(d) -> RigidPose:
    return RigidPose.from_quaternion(d["quaternion"], d["translation"])


def correspondence_record(scene_id, f_gt, f_pred, image_size, pose_gt, corrs: CorrespondenceSet,
                          bbox_diag, model_points=None):
    rec = {
        "scene_id": int(scene_id),
        "f_gt": float(f_gt),
        "f_pred": float(f_pred),
        "image_size": [int(v) for v in image_size],
        "pose_gt": pose_to_dict(pose_gt),
        "correspondences": [
            {"X": _floats(X), "x": _floats(x), "weight": float(w)}
            for X, x, w in zip(corrs.points3d, corrs.points2d, corrs.weights)
        ],
        "bbox_diag": float(bbox_diag),
    }
    if model_points is not None:
        rec["model_points"] = [_floats(p) for p in np.asarray(model_points)]
    return rec


def correspondences_from_record(rec) -> CorrespondenceSet:
    items = rec["correspondences"]
    X = np.array([c["X"] for c in items], dtype=float).reshape(-1, 3)
    x = np.array([c["x"] for c in items], dtype=float).reshape(-1, 2)
    w = np.array([c.get("weight", 1.0) for c in items], dtype=float)
    return CorrespondenceSet(X, x, w)


def result_record(scene_id, status, pose=None, focal_px=None, f_init=None, result=None, error=None):
    rec = {"scene_id": int(scene_id), "status": status, "f_init": None if f_init is None else float(f_init)}
    if pose is not None:
        rec["pose"] = pose_to_dict(pose)
        rec["focal_px"] = float(focal_px)
    if result is not None:
        rec.update({
            "final_cost": float(result.final_cost),
            "initial_cost": float(result.initial_cost),
            "iterations": int(result.iterations),
            "converged": bool(result.converged),
            "termination": result.termination,
            "inlier_count": int(np.count_nonzero(result.inlier_mask)),
        })
    if error is not None:
        rec["error"] = error
    return rec


def dumps(obj) -> str:
    return json.dumps(obj, indent=1, allow_nan=True) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj))


def read_json(path):
    return json.loads(Path(path).read_text())


def sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def fmt(v) -> str:
    """Shortest exact text form of a float (``inf`` and ``nan`` spelled out)."""
    return repr(float(v))
