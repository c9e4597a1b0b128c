"""Decoupled ICA: ICA-EMK, SparseICA, whitening and a fixed-point initializer."""

from .densities import EmkModel, GgdModel, TanhModel, make_model
from .engine import (
    DemixingState,
    IcaConfig,
    RowCollapseError,
    SparseConfig,
    emk_row_gradient,
    init_fastica,
    row_cost,
    row_gradient,
    run_decoupled,
    run_ica_emk,
    run_sparse_ica,
    sparse_row_gradient,
    total_cost,
)
from .linalg import (
    decouple_h,
    smoothed_l1,
    smoothed_l1_grad,
    sphere_project,
    symmetric_decorrelation,
    whiten,
    whitening_matrix,
)

__all__ = [
    "EmkModel",
    "GgdModel",
    "TanhModel",
    "make_model",
    "DemixingState",
    "IcaConfig",
    "SparseConfig",
    "RowCollapseError",
    "emk_row_gradient",
    "sparse_row_gradient",
    "row_cost",
    "row_gradient",
    "run_decoupled",
    "run_ica_emk",
    "run_sparse_ica",
    "init_fastica",
    "total_cost",
    "decouple_h",
    "smoothed_l1",
    "smoothed_l1_grad",
    "sphere_project",
    "symmetric_decorrelation",
    "whiten",
    "whitening_matrix",
]
