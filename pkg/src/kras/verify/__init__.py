"""Independent verification of synthesized closed loops."""

from .closed_loop import ClosedLoop, closed_loop
from .dissipation import DissipationReport, check_dissipation, kf_along, kf_value, trajectory_window
from .export import plot_gamma, plot_trajectory, write_trajectory_csv
from .properties import (
    bilinear_margins,
    integral_inequality_slack,
    kronecker_identity_residuals,
    ls_orthogonality,
    overestimate_soundness_trial,
    random_integral_inequality_trial,
    random_small_system,
)
from .simulate import Trajectory, constant_history, l2_gain_estimate, benchmark_disturbance, simulate
from .spectral import rightmost_eigenvalues, spectral_abscissa

__all__ = [
    "ClosedLoop",
    "closed_loop",
    "DissipationReport",
    "check_dissipation",
    "kf_along",
    "kf_value",
    "trajectory_window",
    "plot_gamma",
    "plot_trajectory",
    "write_trajectory_csv",
    "bilinear_margins",
    "random_small_system",
    "overestimate_soundness_trial",
    "integral_inequality_slack",
    "kronecker_identity_residuals",
    "ls_orthogonality",
    "random_integral_inequality_trial",
    "Trajectory",
    "constant_history",
    "l2_gain_estimate",
    "benchmark_disturbance",
    "simulate",
    "rightmost_eigenvalues",
    "spectral_abscissa",
]
