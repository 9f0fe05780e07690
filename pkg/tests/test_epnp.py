import itertools

import numpy as np
import pytest

from conftest import random_scene
from pnpf.correspondences import CorrespondenceSet
from pnpf.epnp import select_control_points, solve_epnp
from pnpf.exceptions import DegenerateGeometry, NotEnoughCorrespondences
from pnpf.geometry import (PinholeCamera, RigidPose, geodesic_distance, project_points,
                           random_rotation, rotation_about)

CUBE = np.array(list(itertools.product((-1.0, 1.0), repeat=3)))


def test_cube_control_points():
    basis = select_control_points(CorrespondenceSet(CUBE, np.zeros((8, 2))))
    assert np.allclose(basis.control_points[0], 0.0)
    axes = basis.control_points[1:] - basis.control_points[0]
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    # each axis is a signed unit coordinate vector
    assert np.allclose(np.sort(np.abs(axes), axis=1), [[0, 0, 1]] * 3, atol=1e-12)


def test_barycentric_properties(rng):
    for n in (4, 7, 50, 300):
        X = rng.normal(size=(n, 3)) * rng.uniform(0.1, 5, 3) + rng.normal(size=3) * 10
        basis = select_control_points(CorrespondenceSet(X, np.zeros((n, 2))))
        assert np.allclose(basis.alphas.sum(axis=1), 1.0, atol=1e-9)
        assert np.max(np.linalg.norm(basis.reconstruct() - X, axis=1)) < 1e-9


def test_planar_basis(rng):
    X = np.column_stack([rng.uniform(-1, 1, (10, 2)), np.zeros(10)])
    _, s, _ = np.linalg.svd(X - X.mean(axis=0))
    assert s[2] < 1e-8 * s[0]
    basis = select_control_points(CorrespondenceSet(X, np.zeros((10, 2))))
    assert basis.planar and basis.alphas.shape == (10, 3)
    assert np.max(np.abs(basis.reconstruct() - X)) < 1e-9


def test_coincident_points_raise():
    X = np.ones((6, 3))
    with pytest.raises(DegenerateGeometry):
        solve_epnp(CorrespondenceSet(X, np.zeros((6, 2))), PinholeCamera(800))


def test_three_points_raise():
    with pytest.raises(NotEnoughCorrespondences):
        solve_epnp(CorrespondenceSet(CUBE[:3], np.zeros((3, 2))), PinholeCamera(800))


def test_cube_exact_recovery(rng):
    cam = PinholeCamera(800)
    for _ in range(20):
        pose = RigidPose(random_rotation(rng), [0.3, -0.2, 6])
        corrs = CorrespondenceSet(CUBE, project_points(CUBE, pose, cam))
        est = solve_epnp(corrs, cam)
        assert geodesic_distance(est.rotation, pose.rotation) < 1e-6
        assert np.linalg.norm(est.translation - pose.translation) < 1e-6


def test_cube_half_focal_ratio_compensation(rng):
    # At t_z = 6 the cube's depth extent is ~29% of its distance, so no pose at
    # f/2 reprojects within 2 px; the translation still halves and EPnP stays
    # close to the best fixed-focal fit. At 60 m the 2 px bound holds.
    from pnpf.refine import refine_pose_fixed_focal
    cam, half = PinholeCamera(800), PinholeCamera(400)
    for tz, bound in ((6.0, None), (60.0, 2.0)):
        pose = RigidPose(random_rotation(rng), [0.3, -0.2, tz])
        corrs = CorrespondenceSet(CUBE, project_points(CUBE, pose, cam))
        est = solve_epnp(corrs, half)
        err = np.linalg.norm(project_points(CUBE, est, half) - corrs.points2d, axis=1).mean()
        ratio = np.linalg.norm(est.translation) / np.linalg.norm(pose.translation)
        if bound is None:
            best = refine_pose_fixed_focal(corrs, est, 400.0, half).pose
            best_err = np.linalg.norm(project_points(CUBE, best, half) - corrs.points2d, axis=1).mean()
            assert best_err > 2.0 and err < 2.0 * best_err
            assert 0.45 < ratio < 0.6
        else:
            assert err < bound
            assert ratio == pytest.approx(0.5, abs=0.01)


def test_noise_free_recovery_200_scenes(rng):
    for _ in range(200):
        n = int(rng.integers(6, 201))
        corrs, pose, cam = random_scene(rng, n=n)
        est = solve_epnp(corrs, cam)
        assert geodesic_distance(est.rotation, pose.rotation) < 1e-6
        assert np.linalg.norm(est.translation - pose.translation) / np.linalg.norm(pose.translation) < 1e-6


def test_planar_and_minimal_recovery(rng):
    for _ in range(50):
        corrs, pose, cam = random_scene(rng, n=4)
        est = solve_epnp(corrs, cam)
        assert geodesic_distance(est.rotation, pose.rotation) < 1e-6
    cam = PinholeCamera(700)
    for _ in range(50):
        X = np.column_stack([rng.uniform(-1, 1, (12, 2)), np.zeros(12)])
        pose = RigidPose(random_rotation(rng), [0.1, 0.1, 6])
        if np.any((X @ pose.rotation.T + pose.translation)[:, 2] <= 0.5):
            continue
        est = solve_epnp(CorrespondenceSet(X, project_points(X, pose, cam)), cam)
        assert geodesic_distance(est.rotation, pose.rotation) < 1e-6


def test_focal_ratio_ambiguity_small_objects(rng):
    for s in (0.7, 1.0, 1.4):
        for _ in range(10):
            corrs, pose, cam = random_scene(rng, n=40, depth=(50.0, 60.0), spread=0.5)
            scaled = PinholeCamera(cam.focal_px * s, cam.image_size)
            est = solve_epnp(corrs, scaled)
            uv = project_points(corrs.points3d, est, scaled)
            diag = np.linalg.norm(np.ptp(corrs.points2d, axis=0))
            assert np.median(np.linalg.norm(uv - corrs.points2d, axis=1)) < 0.01 * diag
            assert est.translation[2] / pose.translation[2] == pytest.approx(s, rel=0.05)


def test_equivariance_under_image_rotation(rng):
    corrs, pose, cam = random_scene(rng, n=30)
    pp = cam.principal_point
    Rz = rotation_about([0, 0, 1], np.pi / 2)
    uv = (corrs.points2d - pp) @ Rz[:2, :2].T + pp
    est = solve_epnp(CorrespondenceSet(corrs.points3d, uv), cam)
    expected = RigidPose(Rz @ pose.rotation, Rz @ pose.translation)
    assert geodesic_distance(est.rotation, expected.rotation) < 1e-6
    assert np.linalg.norm(est.translation - expected.translation) < 1e-6 * np.linalg.norm(pose.translation)


def test_weights_zero_out_outliers(rng):
    corrs, pose, cam = random_scene(rng, n=40)
    x = corrs.points2d.copy()
    x[:5] += 300.0
    w = np.ones(40)
    w[:5] = 0.0
    est = solve_epnp(CorrespondenceSet(corrs.points3d, x, w), cam)
    assert geodesic_distance(est.rotation, pose.rotation) < 1e-6
