"""Keypoint-conditioned policy transportation with GP residuals.

Fit a spatial map from paired keypoints (rigid alignment plus a GP
residual), then transport demonstrated positions, velocities, orientations,
stiffness and damping to the new task configuration with calibrated
uncertainty. Includes comparison baselines (Laplacian editing, time-indexed
displacement reshaping, locally weighted translations), trajectory metrics
with nonparametric ranking, and synthetic 2D benchmark scenarios.
"""
from .affine import AffineMap, apply_affine, fit_affine
from .baselines import (
    LWTMap,
    LWTUnit,
    ViaAssignment,
    apply_lwt,
    assign_via_points,
    fit_lwt,
    laplacian_edit,
    lwt_jacobian,
    lwt_velocity,
    reshaped_kmp,
)
from .gp import (
    GPModel,
    KernelParams,
    build_gp,
    fit_gp,
    kernel_se,
    log_marginal_likelihood,
    predict_derivative,
    predict_mean,
    predict_variance,
)
from .metrics import (
    MetricReport,
    RankingResult,
    area_between_curves,
    compute_metrics,
    dtw_distance,
    final_angle_error,
    final_position_error,
    frechet_distance,
    mann_whitney_u,
    rank_methods,
)
from .scenarios import (
    FrameScenario,
    Pose,
    SurfaceScenario,
    frame_pairing,
    gridify_pointcloud,
    load_scenario,
    make_frame_scenario,
    make_surface_scenario,
    random_frame_scenario,
    save_scenario,
)
from .transport import (
    DiffeoReport,
    TransportConfig,
    TransportMap,
    TransportedLabels,
    check_local_diffeomorphism,
    fit_transport,
    load_transport_map,
    polar_rotation,
    save_transport_map,
    transport_jacobian,
    transport_jacobians,
    transport_labels,
    transport_point,
    transport_points,
    transport_uncertainty,
)
from .types import (
    PairedKeypoints,
    PointSet,
    PolicyLabels,
    Trajectory,
    Violation,
    finite_difference_velocities,
    is_rotation,
    load_json,
    load_pointset_csv,
    rotation_residual,
    save_json,
    validate_labels,
)

__version__ = "0.1.0"

__all__ = [
    "AffineMap",
    "DiffeoReport",
    "FrameScenario",
    "GPModel",
    "KernelParams",
    "LWTMap",
    "LWTUnit",
    "MetricReport",
    "PairedKeypoints",
    "PointSet",
    "PolicyLabels",
    "Pose",
    "RankingResult",
    "SurfaceScenario",
    "Trajectory",
    "TransportConfig",
    "TransportMap",
    "TransportedLabels",
    "ViaAssignment",
    "Violation",
    "apply_affine",
    "apply_lwt",
    "area_between_curves",
    "assign_via_points",
    "build_gp",
    "check_local_diffeomorphism",
    "compute_metrics",
    "dtw_distance",
    "final_angle_error",
    "final_position_error",
    "finite_difference_velocities",
    "fit_affine",
    "fit_gp",
    "fit_lwt",
    "fit_transport",
    "frame_pairing",
    "frechet_distance",
    "gridify_pointcloud",
    "is_rotation",
    "kernel_se",
    "laplacian_edit",
    "load_json",
    "load_pointset_csv",
    "load_scenario",
    "load_transport_map",
    "log_marginal_likelihood",
    "lwt_jacobian",
    "lwt_velocity",
    "make_frame_scenario",
    "make_surface_scenario",
    "mann_whitney_u",
    "polar_rotation",
    "predict_derivative",
    "predict_mean",
    "predict_variance",
    "random_frame_scenario",
    "rank_methods",
    "reshaped_kmp",
    "rotation_residual",
    "save_json",
    "save_scenario",
    "save_transport_map",
    "transport_jacobian",
    "transport_jacobians",
    "transport_labels",
    "transport_point",
    "transport_points",
    "transport_uncertainty",
    "validate_labels",
]
