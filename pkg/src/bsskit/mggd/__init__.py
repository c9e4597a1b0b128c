"""Multivariate generalized Gaussian: density, scatter/shape estimators, SPD geometry."""

from .density import MggdParams, mggd_entropy, mggd_logpdf, mahalanobis
from .spd import riem_average, riem_distance, strong_convexity_check
from .estimators import (
    FitReport,
    estimate_beta,
    estimate_joint,
    estimate_m,
    estimate_mom,
    estimate_scatter,
    estimate_scatter_fp_eps,
    estimate_scatter_mlfp,
    estimate_scatter_mlfs,
    estimate_scatter_rafp,
    fisher_matrix,
    fp_map,
    gamma_beta,
    mom_ratio,
)
from .diagnostics import nonexpansivity_probe

__all__ = [
    "MggdParams",
    "mggd_logpdf",
    "mggd_entropy",
    "mahalanobis",
    "riem_distance",
    "riem_average",
    "strong_convexity_check",
    "FitReport",
    "fp_map",
    "estimate_scatter",
    "estimate_scatter_mlfp",
    "estimate_scatter_rafp",
    "estimate_scatter_mlfs",
    "estimate_scatter_fp_eps",
    "estimate_beta",
    "estimate_m",
    "estimate_mom",
    "estimate_joint",
    "fisher_matrix",
    "gamma_beta",
    "mom_ratio",
    "nonexpansivity_probe",
]
