"""Multi-session ground-texture SLAM with wear-aware loop closure weighting."""

from groundslam._core import (
    CameraModel,
    Pose2,
    Strategy,
    convex_intersection_area,
    default_camera,
    fov_quad,
    jih_symmetry_score,
    joint_intensity_histogram,
    kld_channel,
    kld_score,
    render_view,
    rmse,
    run_synthetic,
    SyntheticWorld,
)

__all__ = [
    "CameraModel",
    "Pose2",
    "Strategy",
    "SyntheticWorld",
    "convex_intersection_area",
    "default_camera",
    "fov_quad",
    "jih_symmetry_score",
    "joint_intensity_histogram",
    "kld_channel",
    "kld_score",
    "render_view",
    "rmse",
    "run_synthetic",
]
