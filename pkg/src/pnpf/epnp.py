"""EPnP: closed-form O(n) camera pose from 2D-3D correspondences at a known focal.

Every 3D point is written as a barycentric combination of four control points
(three for planar point sets). The camera-frame control points lie in the
null space of a 2N x 12 linear system; the null-space coefficients are found
from the rigidity of the control-point distances, polished by a few
Gauss-Newton steps, and the pose follows by absolute orientation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .correspondences import CorrespondenceSet
from .exceptions import DegenerateGeometry, NoValidCandidate
from .geometry import CHEIRALITY_EPS, PinholeCamera, RigidPose

PLANAR_RATIO = 1e-8
GAUSS_NEWTON_ITERATIONS = 10


@dataclass(frozen=True, eq=False)
class ControlPointBasis:
    """Control points (k, 3) and barycentric coordinates (N, k), k in {3, 4}."""

    control_points: np.ndarray
    alphas: np.ndarray

    @property
    def planar(self):
        return self.control_points.shape[0] == 3

    def reconstruct(self):
        return self.alphas @ self.control_points


def select_control_points(corrs: CorrespondenceSet) -> ControlPointBasis:
    """Centroid plus the principal axes of the 3D points, scaled by their RMS spread."""
    X = corrs.points3d
    if X.shape[0] == 0:
        raise DegenerateGeometry("no points")
    c0 = X.mean(axis=0)
    P = X - c0
    _, s, Vt = np.linalg.svd(P, full_matrices=False)
    s = np.concatenate([s, np.zeros(3 - s.shape[0])])
    if s[0] <= 1e-12 * max(1.0, np.abs(X).max()):
        raise DegenerateGeometry("all 3D points coincide")
    if s[1] < PLANAR_RATIO * s[0]:
        raise DegenerateGeometry("3D points are collinear")
    ndir = 2 if s[2] < PLANAR_RATIO * s[0] else 3

    scale = s[:ndir] / np.sqrt(X.shape[0])
    axes = Vt[:ndir]
    control = np.vstack([c0, c0 + scale[:, None] * axes])
    rest = (P @ axes.T) / scale
    alphas = np.column_stack([1.0 - rest.sum(axis=1), rest])
    return ControlPointBasis(control, alphas)


def _build_system(alphas, normalized, sqrt_w):
    n, k = alphas.shape
    M = np.zeros((2 * n, 3 * k))
    a = alphas * sqrt_w[:, None]
    M[0::2, 0::3] = a
    M[0::2, 2::3] = -a * normalized[:, 0:1]
    M[1::2, 1::3] = a
    M[1::2, 2::3] = -a * normalized[:, 1:2]
    return M


def _null_vectors(M, k):
    if M.shape[0] >= M.shape[1]:
        _, _, Vt = np.linalg.svd(M, full_matrices=False)
    else:
        _, _, Vt = np.linalg.svd(M, full_matrices=True)
    # v[0] belongs to the smallest singular value
    return [Vt[-1 - i].reshape(k, 3) for i in range(k)]


def _pairs(k):
    return [(a, b) for a in range(k) for b in range(a + 1, k)]


def _products(k):
    # B11 B12 B22 B13 B23 B33 B14 ...
    return [(a, b) for b in range(k) for a in range(b + 1)]


def _distance_system(vs, control):
    k = control.shape[0]
    pairs = _pairs(k)
    prods = _products(k)
    dv = [np.array([v[a] - v[b] for a, b in pairs]) for v in vs]
    L = np.empty((len(pairs), len(prods)))
    for col, (a, b) in enumerate(prods):
        dots = np.einsum("ij,ij->i", dv[a], dv[b])
        L[:, col] = dots if a == b else 2.0 * dots
    rho = np.array([np.sum((control[a] - control[b]) ** 2) for a, b in pairs])
    return L, rho, prods


def _initial_betas(L, rho, prods, k, case):
    col = {p: i for i, p in enumerate(prods)}
    betas = np.zeros(k)
    if case == 4:
        return _relinearized_betas(L, rho, prods, k)
    if case == 1:
        cols = [col[(0, j)] for j in range(k)]
        b = np.linalg.lstsq(L[:, cols], rho, rcond=None)[0]
        if b[0] < 0:
            b = -b
        if b[0] <= 0:
            return None
        betas[0] = np.sqrt(b[0])
        betas[1:] = b[1:] / betas[0]
        return betas
    cols = [col[(0, 0)], col[(0, 1)], col[(1, 1)]]
    if case == 3:
        cols += [col[(0, 2)], col[(1, 2)]]
    b = np.linalg.lstsq(L[:, cols], rho, rcond=None)[0]
    if b[0] < 0:
        b = -b
    if b[0] <= 0:
        return None
    betas[0] = np.sqrt(b[0])
    betas[1] = np.sqrt(b[2]) if b[2] > 0 else 0.0
    if b[1] < 0:
        betas[0] = -betas[0]
    if case == 3:
        betas[2] = b[3] / betas[0]
    return betas


def _quadratic_relations(prods):
    """Index pairs ``(p, q), (r, s)`` with ``B_p B_q == B_r B_s`` identically."""
    by_multiset = {}
    for i, p in enumerate(prods):
        for j in range(i, len(prods)):
            q = prods[j]
            key = tuple(sorted(p + q))
            by_multiset.setdefault(key, []).append((i, j))
    rel = []
    for pairings in by_multiset.values():
        for other in pairings[1:]:
            rel.append((pairings[0], other))
    return rel


def _relinearized_betas(L, rho, prods, k):
    """Four-dimensional null space: solve for products by relinearization."""
    b_p = np.linalg.lstsq(L, rho, rcond=None)[0]
    _, _, Vt = np.linalg.svd(L)
    N = Vt[L.shape[0]:].T  # (nprod, ndim)
    ndim = N.shape[1]
    quad = [(i, j) for i in range(ndim) for j in range(i, ndim)]
    rows, rhs = [], []
    for (p, q), (r, t) in _quadratic_relations(prods):
        row = np.zeros(ndim + len(quad))
        const = b_p[p] * b_p[q] - b_p[r] * b_p[t]
        row[:ndim] = (b_p[p] * N[q] + b_p[q] * N[p]) - (b_p[r] * N[t] + b_p[t] * N[r])
        for c, (i, j) in enumerate(quad):
            if i == j:
                v = N[p, i] * N[q, i] - N[r, i] * N[t, i]
            else:
                v = (N[p, i] * N[q, j] + N[p, j] * N[q, i]
                     - N[r, i] * N[t, j] - N[r, j] * N[t, i])
            row[ndim + c] = v
        rows.append(row)
        rhs.append(-const)
    sol = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)[0]
    b = b_p + N @ sol[:ndim]
    col = {p: i for i, p in enumerate(prods)}
    b00 = b[col[(0, 0)]]
    if b00 < 0:
        b = -b
        b00 = -b00
    if b00 <= 0:
        return None
    betas = np.empty(k)
    betas[0] = np.sqrt(b00)
    for j in range(1, k):
        betas[j] = b[col[(0, j)]] / betas[0]
    return betas


def _refine_betas(L, rho, prods, betas):
    k = betas.shape[0]
    for _ in range(GAUSS_NEWTON_ITERATIONS):
        bb = np.array([betas[a] * betas[b] for a, b in prods])
        r = L @ bb - rho
        # d(beta_a beta_b)/d(beta_j)
        D = np.zeros((len(prods), k))
        for c, (a, b) in enumerate(prods):
            D[c, a] += betas[b]
            D[c, b] += betas[a]
        J = L @ D
        step = np.linalg.lstsq(J, -r, rcond=None)[0]
        betas = betas + step
    return betas


def absolute_orientation(src, dst, weights=None):
    """Rotation and translation minimising ``sum w ||R src + t - dst||^2`` (no scale)."""
    w = np.ones(src.shape[0]) if weights is None else weights
    wsum = w.sum()
    cs = (w[:, None] * src).sum(axis=0) / wsum
    cd = (w[:, None] * dst).sum(axis=0) / wsum
    H = ((src - cs) * w[:, None]).T @ (dst - cd)
    U, _, Vt = np.linalg.svd(H)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(Vt.T @ U.T))])
    R = Vt.T @ D @ U.T
    return R, cd - R @ cs


def _pose_from_betas(vs, betas, alphas, X, weights):
    ccs = sum(b * v for b, v in zip(betas, vs))
    pcs = alphas @ ccs
    if pcs[:, 2].sum() < 0:
        pcs = -pcs
    R, t = absolute_orientation(X, pcs, weights)
    return RigidPose(R, t)


def _score(pose, X, normalized, weights):
    Xc = X @ pose.rotation.T + pose.translation
    z = Xc[:, 2]
    in_front = z > CHEIRALITY_EPS
    zs = np.where(in_front, z, np.inf)
    err = np.linalg.norm(Xc[:, :2] / zs[:, None] - normalized, axis=1)
    err = np.where(in_front, err, np.inf)
    finite = np.isfinite(err) & (weights > 0)
    mean_err = (weights[finite] * err[finite]).sum() / max(weights[finite].sum(), 1e-300)
    return mean_err, in_front.mean()


def epnp_candidates(corrs: CorrespondenceSet, camera: PinholeCamera):
    """All beta-case poses as ``(pose, mean reprojection error in px, front fraction)``."""
    corrs.require_solvable()
    basis = select_control_points(corrs)
    X = corrs.points3d
    f = camera.focal_px
    normalized = (corrs.points2d - camera.principal_point) / f
    weights = corrs.weights
    k = basis.control_points.shape[0]

    M = _build_system(basis.alphas, normalized, np.sqrt(weights))
    vs = _null_vectors(M, k)
    L, rho, prods = _distance_system(vs, basis.control_points)

    out = []
    for case in ((1, 2, 3, 4) if k == 4 else (1, 2)):
        betas = _initial_betas(L, rho, prods, k, case)
        if betas is None:
            continue
        betas = _refine_betas(L, rho, prods, betas)
        if not np.all(np.isfinite(betas)):
            continue
        pose = _pose_from_betas(vs, betas, basis.alphas, X, weights)
        err, front = _score(pose, X, normalized, weights)
        out.append((pose, err * f, front))
    return out


def solve_epnp(corrs: CorrespondenceSet, camera: PinholeCamera) -> RigidPose:
    """Pose of the object in the camera frame, assuming ``camera.focal_px``.

    Raises
    ------
    NotEnoughCorrespondences
        Fewer than four correspondences.
    DegenerateGeometry
        Coincident or collinear 3D points.
    NoValidCandidate
        No candidate keeps the majority of points in front of the camera.
    """
    best = None
    for pose, err, front in epnp_candidates(corrs, camera):
        if front <= 0.5 or not np.isfinite(err):
            continue
        if best is None or err < best[1]:
            best = (pose, err)
    if best is None:
        raise NoValidCandidate("every EPnP candidate violates cheirality")
    return best[0]
