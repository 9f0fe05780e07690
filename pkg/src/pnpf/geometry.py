"""Pinhole projection, rigid transforms and SO(3) helpers.

Conventions
-----------
* Poses are egocentric: a model point ``X`` maps to camera coordinates
  ``R @ X + t``.
* Cameras have a single focal length (square pixels), no skew, no distortion,
  and the principal point fixed at the image center.
* Rotation increments used by the refiners are right-multiplied axis-angle
  vectors: ``R <- R @ exp(hat(w))``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation as _ScipyRotation

from .exceptions import CheiralityViolation, DomainError

CHEIRALITY_EPS = 1e-9
ORTHONORMAL_TOL = 1e-9


def hat(w):
    """Skew-symmetric matrix such that ``hat(w) @ v == cross(w, v)``."""
    return np.array([
        [0.0, -w[2], w[1]],
        [w[2], 0.0, -w[0]],
        [-w[1], w[0], 0.0],
    ])


def so3_exp(w):
    """Rodrigues' formula; exact to machine precision for small angles."""
    w = np.asarray(w, dtype=float)
    theta2 = float(w @ w)
    K = hat(w)
    if theta2 < 1e-16:
        # second-order Taylor expansion, error O(theta^3)
        return np.eye(3) + K + 0.5 * (K @ K)
    theta = np.sqrt(theta2)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / theta2
    return np.eye(3) + a * K + b * (K @ K)


def so3_log(R):
    """Axis-angle vector of a rotation matrix (angle in [0, pi])."""
    return _ScipyRotation.from_matrix(np.asarray(R, dtype=float)).as_rotvec()


def rotation_about(axis, angle):
    axis = np.asarray(axis, dtype=float)
    return so3_exp(axis / np.linalg.norm(axis) * angle)


def is_rotation(R, tol=ORTHONORMAL_TOL):
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return (np.abs(R.T @ R - np.eye(3)).max() <= tol
            and abs(np.linalg.det(R) - 1.0) <= tol)


def project_to_so3(M):
    """Closest rotation matrix in the Frobenius sense."""
    U, _, Vt = np.linalg.svd(M)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def geodesic_distance(a, b):
    """Angle of the relative rotation ``a.T @ b`` in radians, in [0, pi].

    Equivalent to ``||log(a.T b)||_F / sqrt(2)``. The angle is recovered with
    ``atan2(sin, cos)`` where the sine comes from the skew part and the cosine
    from the trace, which stays accurate near both 0 and pi.
    """
    M = np.asarray(a, dtype=float).T @ np.asarray(b, dtype=float)
    cos_theta = np.clip((np.trace(M) - 1.0) / 2.0, -1.0, 1.0)
    skew = np.array([M[2, 1] - M[1, 2], M[0, 2] - M[2, 0], M[1, 0] - M[0, 1]])
    sin_theta = 0.5 * np.linalg.norm(skew)
    return float(np.arctan2(sin_theta, cos_theta))


def log_focal(f):
    """Logarithmic focal-length coordinate ``ln f``."""
    f = float(f)
    if not f > 0.0:
        raise DomainError(f"focal length must be positive, got {f}")
    return float(np.log(f))


def exp_focal(y):
    return float(np.exp(y))


def _frozen(a, shape):
    arr = np.array(a, dtype=float).reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RigidPose:
    """Rotation and translation taking object coordinates to camera coordinates."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen(self.rotation, (3, 3)))
        object.__setattr__(self, "translation", _frozen(self.translation, (3,)))
        if not np.all(np.isfinite(self.translation)):
            raise DomainError("translation must be finite")

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_quaternion(cls, wxyz, translation):
        w, x, y, z = wxyz
        R = _ScipyRotation.from_quat([x, y, z, w]).as_matrix()
        return cls(R, translation)

    def quaternion_wxyz(self):
        """Unit quaternion with non-negative scalar part."""
        x, y, z, w = _ScipyRotation.from_matrix(self.rotation).as_quat()
        q = np.array([w, x, y, z])
        return q if q[0] >= 0 else -q

    def compose(self, other: RigidPose) -> RigidPose:
        """``self o other``: apply ``other`` first."""
        return RigidPose(self.rotation @ other.rotation,
                         self.rotation @ other.translation + self.translation)

    def inverse(self) -> RigidPose:
        Rt = self.rotation.T
        return RigidPose(Rt, -Rt @ self.translation)

    def retract(self, delta) -> RigidPose:
        """Apply a 6-vector increment ``[w, dt]`` (right-multiplied rotation)."""
        delta = np.asarray(delta, dtype=float)
        return RigidPose(self.rotation @ so3_exp(delta[:3]),
                         self.translation + delta[3:6])

    def __repr__(self):
        rv = np.round(so3_log(self.rotation), 6)
        return f"RigidPose(rotvec={rv.tolist()}, t={np.round(self.translation, 6).tolist()})"


@dataclass(frozen=True)
class PinholeCamera:
    """Square-pixel pinhole camera with the principal point at the image center."""

    focal_px: float
    image_size: tuple = (640, 480)

    def __post_init__(self):
        if not self.focal_px > 0:
            raise DomainError(f"focal_px must be positive, got {self.focal_px}")
        w, h = self.image_size
        if not (w > 0 and h > 0):
            raise DomainError(f"invalid image size {self.image_size}")
        object.__setattr__(self, "focal_px", float(self.focal_px))
        object.__setattr__(self, "image_size", (float(w), float(h)))

    @property
    def principal_point(self):
        w, h = self.image_size
        return np.array([w / 2.0, h / 2.0])

    @property
    def image_diagonal(self):
        return float(np.hypot(*self.image_size))

    def with_focal(self, focal_px):
        return PinholeCamera(focal_px, self.image_size)

    def intrinsic_matrix(self):
        cx, cy = self.principal_point
        f = self.focal_px
        return np.array([[f, 0.0, cx], [0.0, f, cy], [0.0, 0.0, 1.0]])


def transform_points(pose: RigidPose, points):
    points = np.asarray(points, dtype=float)
    return points @ pose.rotation.T + pose.translation


def transform_point(pose: RigidPose, point):
    """``R @ point + t`` for a single 3-vector."""
    return pose.rotation @ np.asarray(point, dtype=float) + pose.translation


def project_camera_points(Xc, focal, principal_point):
    """Project camera-frame points (N, 3) to pixels (N, 2)."""
    z = Xc[:, 2]
    if np.any(~(z > CHEIRALITY_EPS)):
        bad = int(np.argmin(np.where(np.isnan(z), -np.inf, z)))
        raise CheiralityViolation(f"point {bad} has depth {z[bad]:.3g} <= {CHEIRALITY_EPS}")
    return focal * Xc[:, :2] / z[:, None] + principal_point


def project_points(points, pose: RigidPose, camera: PinholeCamera):
    """Vectorised :func:`project` for an (N, 3) array."""
    Xc = transform_points(pose, np.atleast_2d(points))
    return project_camera_points(Xc, camera.focal_px, camera.principal_point)


def project(point, pose: RigidPose, camera: PinholeCamera):
    return project_points(np.asarray(point, dtype=float)[None, :], pose, camera)[0]


def projection_jacobians(points, pose: RigidPose, focal, principal_point, refine_focal=True):
    """Pixel projections and their Jacobians for an (N, 3) array of points.

    Returns ``(uv, J)`` where ``J`` has shape (N, 2, 7) -- or (N, 2, 6) when
    ``refine_focal`` is off -- with columns ordered as
    ``[w_x, w_y, w_z, t_x, t_y, t_z, log f]``.
    """
    X = np.asarray(points, dtype=float)
    R = pose.rotation
    Xc = X @ R.T + pose.translation
    uv = project_camera_points(Xc, focal, principal_point)

    inv_z = 1.0 / Xc[:, 2]
    x = Xc[:, 0] * inv_z
    y = Xc[:, 1] * inv_z
    fz = (focal * inv_z)[:, None]
    # rows of d(uv)/d(Xc) = f/z * [[1, 0, -x], [0, 1, -y]]
    du = fz * np.stack([np.ones_like(x), np.zeros_like(x), -x], axis=1)
    dv = fz * np.stack([np.zeros_like(y), np.ones_like(y), -y], axis=1)
    # d(Xc)/dw = -R hat(X): a row a of d(uv)/d(Xc) @ R contributes X x a
    au = du @ R
    av = dv @ R

    ncols = 7 if refine_focal else 6
    J = np.empty((X.shape[0], 2, ncols))
    J[:, 0, 0:3] = _cross(X, au)
    J[:, 1, 0:3] = _cross(X, av)
    J[:, 0, 3:6] = du
    J[:, 1, 3:6] = dv
    if refine_focal:
        J[:, 0, 6] = focal * x
        J[:, 1, 6] = focal * y
    return uv, J


def _cross(a, b):
    return np.stack([a[:, 1] * b[:, 2] - a[:, 2] * b[:, 1],
                     a[:, 2] * b[:, 0] - a[:, 0] * b[:, 2],
                     a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]], axis=1)


def projection_jacobian(point, pose: RigidPose, camera: PinholeCamera, refine_focal=True):
    """2x7 (or 2x6) Jacobian of :func:`project` at a single point."""
    _, J = projection_jacobians(np.asarray(point, dtype=float)[None, :], pose,
                                camera.focal_px, camera.principal_point, refine_focal)
    return J[0]


def random_rotation(rng):
    """Haar-uniform rotation drawn from a numpy Generator."""
    return _ScipyRotation.random(random_state=rng).as_matrix()
