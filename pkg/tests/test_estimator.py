import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from pnpf import PnPfEstimator
from pnpf.geometry import geodesic_distance

from conftest import random_scene


def test_params_and_clone():
    est = PnPfEstimator(focal_init=700.0, strategy="cauchy")
    params = est.get_params()
    assert params["focal_init"] == 700.0 and params["strategy"] == "cauchy"
    c = clone(est)
    assert c.get_params() == params and c is not est
    est.set_params(refine="fixed")
    assert est.refine == "fixed"


@pytest.mark.parametrize("strategy", ["standard", "cauchy", "ransac"])
def test_fit_recovers_exact_camera(rng, strategy):
    corrs, pose, cam = random_scene(rng, 40, 800.0)
    est = PnPfEstimator(focal_init=960.0, strategy=strategy).fit(corrs.points3d, corrs.points2d)
    assert abs(est.focal_ - 800.0) < 1e-6
    assert geodesic_distance(est.pose_.rotation, pose.rotation) < 1e-6
    assert np.allclose(est.predict(corrs.points3d), corrs.points2d, atol=1e-6)
    assert est.score(corrs.points3d, corrs.points2d) > -1e-6
    assert np.allclose(est.transform(corrs.points3d), corrs.points3d @ pose.rotation.T + pose.translation, atol=1e-6)
    assert est.inlier_mask_.all()


def test_fixed_and_none_keep_focal(rng):
    corrs, _, _ = random_scene(rng, 30, 800.0)
    for refine in ("fixed", "none"):
        est = PnPfEstimator(focal_init=850.0, refine=refine).fit(corrs.points3d, corrs.points2d)
        assert est.focal_ == 850.0


def test_not_fitted_and_validation(rng):
    est = PnPfEstimator()
    with pytest.raises(NotFittedError):
        est.predict(np.zeros((4, 3)))
    corrs, _, _ = random_scene(rng, 10, 800.0)
    with pytest.raises(ValueError):
        est.fit(corrs.points3d[:3], corrs.points2d[:3])
    with pytest.raises(ValueError):
        est.fit(corrs.points3d[:, :2], corrs.points2d)
    with pytest.raises(ValueError):
        PnPfEstimator(strategy="bogus").fit(corrs.points3d, corrs.points2d)
    with pytest.raises(ValueError):
        PnPfEstimator(refine="bogus").fit(corrs.points3d, corrs.points2d)
