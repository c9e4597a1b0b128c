"""MGGD density with scatter ``Sigma``, shape ``beta`` and scale ``m``."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .spd import check_spd


@dataclass
class MggdParams:
    scatter: np.ndarray
    shape: float
    scale: float = 1.0

    def __post_init__(self):
        self.scatter = check_spd(self.scatter, "scatter")
        if not (self.shape > 0 and np.isfinite(self.shape)):
            raise ValueError(f"shape must be > 0, got {self.shape}")
        if not (self.scale > 0 and np.isfinite(self.scale)):
            raise ValueError(f"scale must be > 0, got {self.scale}")

    @property
    def dim(self) -> int:
        return self.scatter.shape[0]

    def to_dict(self) -> dict:
        return {"scatter": self.scatter.tolist(), "shape": float(self.shape), "scale": float(self.scale)}

    @classmethod
    def from_dict(cls, d: dict) -> "MggdParams":
        return cls(np.asarray(d["scatter"], dtype=float), float(d["shape"]), float(d["scale"]))


def log_norm_const(k: int, beta: float) -> float:
    """Log of the part of the normalizer that depends only on (K, beta)."""
    return (
        gammaln(k / 2.0)
        + math.log(beta)
        - (k / 2.0) * math.log(math.pi)
        - gammaln(k / (2.0 * beta))
        - (k / (2.0 * beta)) * math.log(2.0)
    )


def mahalanobis(y: np.ndarray, scatter: np.ndarray) -> np.ndarray:
    """``u_t = y_t^T Sigma^-1 y_t`` for the columns of a K x T matrix."""
    c = np.linalg.cholesky(scatter)
    z = np.linalg.solve(c, y)
    return np.einsum("i...,i...->...", z, z)


def mggd_logpdf(y, params: MggdParams):
    """Log density at a K-vector or at each column of a K x T matrix."""
    y = np.asarray(y, dtype=float)
    k = params.dim
    if y.shape[0] != k:
        raise ValueError(f"expected leading dimension {k}, got {y.shape}")
    beta, m = params.shape, params.scale
    logdet = np.linalg.slogdet(params.scatter)[1]
    u = mahalanobis(y, params.scatter)
    out = (
        log_norm_const(k, beta)
        - 0.5 * k * math.log(m)
        - 0.5 * logdet
        - 0.5 * (u / m) ** beta
    )
    return float(out) if np.ndim(out) == 0 else out


def mggd_entropy(params: MggdParams, data: np.ndarray | None = None) -> float:
    """Differential entropy; with ``data`` the plug-in estimate using the sample mean of ``u^beta``."""
    k, beta, m = params.dim, params.shape, params.scale
    logdet = np.linalg.slogdet(params.scatter)[1]
    if data is None:
        mean_ub = k * m**beta / beta
    else:
        mean_ub = float(np.mean(mahalanobis(data, params.scatter) ** beta))
    return float(-log_norm_const(k, beta) + 0.5 * k * math.log(m) + 0.5 * logdet + mean_ub / (2 * m**beta))
