import math

import numpy as np
import pytest

import groundslam as gs


def test_pose_compose_and_inverse():
    a = gs.Pose2(1.0, 0.0, math.pi / 2)
    b = a * gs.Pose2(1.0, 0.0, 0.0)
    assert b.x == pytest.approx(1.0)
    assert b.y == pytest.approx(1.0)
    c = a * a.inverse()
    assert abs(c.x) < 1e-12 and abs(c.yaw) < 1e-12


def test_footprint_overlap():
    cam = gs.default_camera()
    q = gs.fov_quad(cam, gs.Pose2(0, 0, 0))
    assert gs.convex_intersection_area(q, q) == pytest.approx(cam.footprint_area())
    far = gs.fov_quad(cam, gs.Pose2(10, 0, 0))
    assert gs.convex_intersection_area(q, far) == 0.0


def test_kld_and_jih():
    p = np.zeros(256)
    p[0] = 1.0
    assert gs.kld_channel(p, p) == 0.0
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(16, 16), dtype=np.uint8)
    h = gs.joint_intensity_histogram(img, img)
    assert h.shape == (256, 256)
    assert gs.jih_symmetry_score(h) == 1.0
    baseline = gs._core.image_distributions(img)
    assert gs.kld_score(img, baseline) == 0.0


def test_render_and_errors():
    world = gs.SyntheticWorld(3, [0.0, 0.3])
    cam = gs.default_camera()
    img = gs.render_view(world, cam, gs.Pose2(2.0, 2.0, 0.0), 0)
    assert img.shape == (192, 256, 3)
    assert img.dtype == np.uint8
    with pytest.raises(gs._core.Error):
        gs.render_view(world, cam, gs.Pose2(0.0, 0.0, 0.0), 0)


def test_rmse():
    truth = [gs.Pose2(0, 0, 0), gs.Pose2(1, 0, 0)]
    est = [gs.Pose2(0.1, 0, 0), gs.Pose2(1.1, 0, 0)]
    pos, deg = gs.rmse(est, truth)
    assert pos == pytest.approx(0.1)
    assert deg == 0.0


def test_small_end_to_end_run():
    r = gs.run_synthetic(5, "kld_color", sessions=2, poses=12)
    assert r["rmse_m"] < 0.5
    assert len(r["estimated"]) == 2
    assert r["tp"] + r["fp"] + r["tn"] + r["fn"] >= 0
