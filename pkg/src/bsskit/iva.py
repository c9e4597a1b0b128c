"""Independent vector analysis with an adaptive MGGD source model.

Each source component vector (SCV) ``y_n = [y_n^[1], ..., y_n^[K]]`` is
modeled as MGGD; its parameters are re-estimated once per outer iteration
and held fixed while each ``w_n^[k]`` takes a backtracking step along its
sphere-projected gradient.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .ica.linalg import decouple_h, sphere_project, whiten, whitening_matrix
from .mggd.density import MggdParams, mahalanobis, mggd_entropy
from .mggd.estimators import estimate_joint

IVA_METHODS = ("mom", "mlfs", "rafp")
BETA_BOUNDS = (0.25, 8.0)


@dataclass
class IvaConfig:
    method: str = "rafp"
    step: object = "line_search"
    tol: float = 1e-4
    max_iter: int = 100
    max_halvings: int = 20
    seed: Optional[int] = None
    init: str = "identity"
    inner_tol: float = 1e-4
    inner_max_iter: int = 30
    warm_start: bool = True

    def __post_init__(self):
        if self.method not in IVA_METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {IVA_METHODS}")
        if self.init not in ("identity", "fastica", "random"):
            raise ValueError("init must be 'identity', 'fastica' or 'random'")


@dataclass
class IvaState:
    w: np.ndarray  # K x N x N
    scv_params: List[MggdParams] = field(default_factory=list)
    cost_history: List[float] = field(default_factory=list)
    iteration: int = 0
    converged: bool = False
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "w": self.w.tolist(),
            "scv_params": [p.to_dict() for p in self.scv_params],
            "cost_history": [float(c) for c in self.cost_history],
            "iteration": int(self.iteration),
            "converged": bool(self.converged),
            "diagnostics": self.diagnostics,
        }


def as_stack(datasets) -> np.ndarray:
    """K x N x V array from a list of N x V matrices sharing N and V."""
    arr = [np.asarray(d, dtype=float) for d in datasets]
    if not arr:
        raise ValueError("empty dataset stack")
    if any(a.shape != arr[0].shape for a in arr):
        raise ValueError("all datasets must share N and V")
    return np.stack(arr)


def whiten_stack(stack):
    """Per-dataset PCA whitening; returns ``(z, whitening matrices)``."""
    stack = as_stack(stack)
    zs, whs = [], []
    for x in stack:
        z, dw = whiten(x)
        zs.append(z)
        whs.append(whitening_matrix(dw))
    return np.stack(zs), np.stack(whs)


def estimates(stack, w) -> np.ndarray:
    """K x N x V source estimates ``y^[k] = W^[k] x^[k]``."""
    return np.einsum("kij,kjv->kiv", w, stack)


def scv_extract(ys, n: int) -> np.ndarray:
    """K x V source component vector: row k is source ``n`` of dataset ``k``."""
    ys = np.asarray(ys)
    if not 0 <= n < ys.shape[1]:
        raise IndexError(f"source index {n} out of range")
    return ys[:, n, :]


def _score_weights(y: np.ndarray, p: MggdParams):
    """``(beta/m^beta) u^(beta-1) Sigma^-1 y`` for the columns of a K x V SCV."""
    u = np.maximum(mahalanobis(y, p.scatter), 1e-12)
    si_y = np.linalg.solve(p.scatter, y)
    return (p.shape / p.scale**p.shape) * u ** (p.shape - 1.0) * si_y


def iva_row_gradient(stack, state: IvaState, n: int, k: int) -> np.ndarray:
    """Gradient of the IVA cost in ``w_n^[k]`` with frozen SCV parameters.

    ``E[(beta/m^beta) u^(beta-1) [Sigma^-1 y_n]_k x^[k]] - h/(h . w)``
    """
    stack = as_stack(stack)
    w = state.w
    y = scv_extract(estimates(stack, w), n)
    sc = _score_weights(y, state.scv_params[n])[k]
    h = decouple_h(w[k], n)
    hw = h @ w[k][n]
    if abs(hw) < 1e-12:
        raise RuntimeError(f"row collapse at source {n}, dataset {k}")
    return stack[k] @ sc / stack.shape[2] - h / hw


def scv_entropy(y: np.ndarray, p: MggdParams) -> float:
    """Plug-in MGGD entropy of a K x V SCV at parameters ``p``."""
    return mggd_entropy(p, y)


def iva_cost(stack, state: IvaState) -> float:
    """``sum_n H(y_n) - sum_k log|det W^[k]|`` with MGGD plug-in entropies."""
    stack = as_stack(stack)
    ys = estimates(stack, state.w)
    h = sum(scv_entropy(scv_extract(ys, n), state.scv_params[n]) for n in range(ys.shape[1]))
    return float(h - sum(np.linalg.slogdet(wk)[1] for wk in state.w))


def _row_cost(stack, w, y, n, k, p, h):
    return 0.5 * float(np.mean((mahalanobis(y, p.scatter) / p.scale) ** p.shape)) - math.log(abs(h @ w[k][n]))


def _fit_scv(y, cfg: IvaConfig, diag: dict, init=None):
    try:
        rep = estimate_joint(
            y, method=cfg.method, tol=cfg.inner_tol, max_iter=cfg.inner_max_iter, beta_bounds=BETA_BOUNDS, init=init
        )
        return rep.params
    except (ValueError, RuntimeError, np.linalg.LinAlgError):
        diag["mom_fallbacks"] = diag.get("mom_fallbacks", 0) + 1
        return estimate_joint(y, method="mom", beta_bounds=BETA_BOUNDS).params


def run_iva_aggd(stack, cfg: Optional[IvaConfig] = None, w0=None, whitened: bool = False) -> IvaState:
    """IVA with per-SCV adaptive MGGD densities.

    Parameters
    ----------
    stack : (K, N, V) array or list of N x V arrays
        Datasets. They are whitened per dataset unless ``whitened``.
    cfg : IvaConfig
    w0 : (K, N, N) array, optional
        Initial demixing matrices in whitened coordinates.

    Returns
    -------
    IvaState
        ``w`` is expressed in the original (unwhitened) coordinates, so
        ``w[k] @ A[k]`` is the global matrix of dataset ``k``.
    """
    cfg = IvaConfig() if cfg is None else cfg
    t0 = time.perf_counter()
    stack = as_stack(stack)
    kd, n, v = stack.shape
    if v <= kd:
        raise ValueError("need V > K")
    if whitened:
        z, whs = stack, np.stack([np.eye(n)] * kd)
    else:
        z, whs = whiten_stack(stack)
    rng = np.random.default_rng(cfg.seed)
    if w0 is not None:
        w = np.array(w0, dtype=float)
    elif cfg.init == "identity":
        w = np.stack([np.eye(n)] * kd)
    elif cfg.init == "random":
        w = np.stack([np.linalg.qr(rng.standard_normal((n, n)))[0] for _ in range(kd)])
    else:
        from .ica.engine import init_fastica

        w = np.stack([init_fastica(z[k], seed=rng.integers(2**32)) for k in range(kd)])
    w = w / np.linalg.norm(w, axis=2, keepdims=True)
    gammas = np.ones((n, kd))
    diag: dict = {}
    hist: List[float] = []
    params: List[MggdParams] = []
    converged, it = False, 0
    for it in range(1, cfg.max_iter + 1):
        w_old = w.copy()
        ys = estimates(z, w)
        warm = params if (cfg.warm_start and params) else [None] * n
        params = [_fit_scv(scv_extract(ys, i), cfg, diag, warm[i]) for i in range(n)]
        hist.append(iva_cost(z, IvaState(w, params)))
        for i in range(n):
            p = params[i]
            # datasets update from one SCV snapshot so the result does not depend on dataset order
            y = scv_extract(estimates(z, w), i)
            for k in range(kd):
                h = decouple_h(w[k], i)
                hw = h @ w[k][i]
                if hw < 1e-12:
                    diag["collapses"] = diag.get("collapses", 0) + 1
                    continue
                sc = _score_weights(y, p)[k]
                g = z[k] @ sc / v - h / hw
                u = sphere_project(w[k][i], g)
                un = float(np.linalg.norm(u))
                if un == 0 or not np.isfinite(un):
                    continue
                if cfg.step != "line_search":
                    cand = w[k][i] - float(cfg.step) * u
                    w[k][i] = cand / np.linalg.norm(cand)
                    continue
                d = u / un
                j0 = _row_cost(z, w, y, i, k, p, h)
                gamma = min(1.0, 2.0 * gammas[i, k])
                wrow = w[k][i].copy()
                for _ in range(cfg.max_halvings + 1):
                    cand = wrow - gamma * d
                    cand /= np.linalg.norm(cand)
                    if h @ cand > 0:
                        w[k][i] = cand
                        yc = y.copy()
                        yc[k] = cand @ z[k]
                        if _row_cost(z, w, yc, i, k, p, h) <= j0 - 1e-4 * gamma * un:
                            gammas[i, k] = gamma
                            break
                    gamma *= 0.5
                else:
                    w[k][i] = wrow
        change = max(np.linalg.norm(w[k] - w_old[k]) / np.linalg.norm(w_old[k]) for k in range(kd))
        if not np.all(np.isfinite(w)):
            raise FloatingPointError("non-finite demixing matrix")
        if change < cfg.tol:
            converged = True
            break
    ys = estimates(z, w)
    params = [_fit_scv(scv_extract(ys, i), cfg, diag) for i in range(n)]
    final = IvaState(w, params)
    diag["final_cost"] = iva_cost(z, final)
    diag["wall_time"] = time.perf_counter() - t0
    w_total = np.einsum("kij,kjl->kil", w, whs)
    return IvaState(w_total, params, hist, it, converged, diag)
