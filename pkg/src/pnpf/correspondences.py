from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateGeometry, NotEnoughCorrespondences

MIN_CORRESPONDENCES = 4


def _readonly(a):
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    """Paired object-frame 3D points (meters) and 2D pixel locations.

    ``weights`` defaults to ones. Validation here is structural only; the
    solvers enforce the four-correspondence minimum themselves.
    """

    points3d: np.ndarray
    points2d: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        X = np.array(self.points3d, dtype=float).reshape(-1, 3)
        x = np.array(self.points2d, dtype=float).reshape(-1, 2)
        if X.shape[0] != x.shape[0]:
            raise ValueError(f"{X.shape[0]} 3D points but {x.shape[0]} 2D points")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(x))):
            raise ValueError("correspondences must be finite")
        if self.weights is None:
            w = np.ones(X.shape[0])
        else:
            w = np.array(self.weights, dtype=float).reshape(-1)
            if w.shape[0] != X.shape[0] or np.any(w < 0) or not np.all(np.isfinite(w)):
                raise ValueError("weights must be finite, non-negative, one per correspondence")
        object.__setattr__(self, "points3d", _readonly(X))
        object.__setattr__(self, "points2d", _readonly(x))
        object.__setattr__(self, "weights", _readonly(w))

    def __len__(self):
        return self.points3d.shape[0]

    def subset(self, mask_or_index) -> CorrespondenceSet:
        return CorrespondenceSet(self.points3d[mask_or_index],
                                 self.points2d[mask_or_index],
                                 self.weights[mask_or_index])

    def require_solvable(self, minimum=MIN_CORRESPONDENCES):
        if len(self) < minimum:
            raise NotEnoughCorrespondences(
                f"need at least {minimum} 2D-3D correspondences, got {len(self)}")
        spread = self.points3d - self.points3d.mean(axis=0)
        if not np.any(np.abs(spread) > 1e-12 * max(1.0, np.abs(self.points3d).max())):
            raise DegenerateGeometry("all 3D points coincide")
