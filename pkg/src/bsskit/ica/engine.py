"""Decoupled row-wise ICA engine.

Each row ``w_n`` of the demixing matrix is updated on its own: the source
density of ``y_n = w_n x`` is refitted once per sweep, the coupling to the
other rows enters only through the decoupling vector ``h_n``, and the
step along the sphere-projected gradient is chosen by backtracking.

Row cost (density frozen during the step)::

    J_n(w) = H(w x) - log|h_n . w| + lam * sum_v sqrt((w x)_v^2 + eps)

Total cost recorded per sweep::

    J(W) = sum_n H(y_n) - log|det W| + sum_n lam_n ||y_n||_eps
"""

from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Union

import numpy as np

from .densities import make_model
from .linalg import decouple_h, smoothed_l1_grad, sphere_project, symmetric_decorrelation

ARMIJO_C = 1e-4


class RowCollapseError(RuntimeError):
    """Raised when ``h_n . w_n`` vanishes (row ``n`` fell into the span of the others)."""


@dataclass
class IcaConfig:
    max_iter: int = 512
    tol: float = 1e-6
    lag: int = 8
    step: Union[str, float] = "line_search"
    max_halvings: int = 20
    density: object = "emk"
    parallel_rows: bool = False
    n_workers: int = 1
    executor: str = "thread"
    seed: Optional[int] = None
    init: object = "fastica"
    check_identity: bool = False

    def __post_init__(self):
        if self.lag < 1:
            raise ValueError("history lag must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not (self.step == "line_search" or (isinstance(self.step, (int, float)) and self.step > 0)):
            raise ValueError("step must be 'line_search' or a positive number")
        if self.executor not in ("thread", "process"):
            raise ValueError("executor must be 'thread' or 'process'")


@dataclass
class SparseConfig:
    base: IcaConfig = field(default_factory=IcaConfig)
    lam: Union[float, Sequence[float]] = 1e4
    eps: Union[float, Sequence[float]] = 1e-2
    stage2_max_iter: int = 100

    def per_source(self, n: int):
        lam = np.broadcast_to(np.asarray(self.lam, dtype=float), (n,)).copy()
        eps = np.broadcast_to(np.asarray(self.eps, dtype=float), (n,)).copy()
        if np.any(lam < 0):
            raise ValueError("lambda must be >= 0")
        if np.any(eps <= 0):
            raise ValueError("eps must be > 0")
        return lam, eps


@dataclass
class DemixingState:
    w: np.ndarray
    cost_history: List[float] = field(default_factory=list)
    iteration: int = 0
    converged: bool = False
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "w": self.w.tolist(),
            "cost_history": [float(c) for c in self.cost_history],
            "iteration": int(self.iteration),
            "converged": bool(self.converged),
            "diagnostics": self.diagnostics,
        }


# ---------------------------------------------------------------------------
# row cost / gradient
# ---------------------------------------------------------------------------


def row_cost(x, w, h, density, lam: float = 0.0, eps: float = 1e-2) -> float:
    """Decoupled row cost with a frozen density (entropy as sample mean of ``-log p``)."""
    y = w @ x
    c = -float(np.mean(density.logpdf(y))) - math.log(abs(h @ w))
    if lam:
        c += lam * float(np.sum(np.sqrt(y * y + eps)))
    return c


def row_gradient(x, w_matrix, n: int, density, lam: float = 0.0, eps: float = 1e-2, h=None) -> np.ndarray:
    """Euclidean gradient of the row cost in ``w_n``.

    ``-E[score(y_n) x] - h_n/(h_n . w_n) + lam * sum_v y_v/sqrt(y_v^2 + eps) x_v``
    """
    w = w_matrix[n]
    if h is None:
        h = decouple_h(w_matrix, n)
    hw = h @ w
    if abs(hw) < 1e-12:
        raise RowCollapseError(f"row collapse at row {n}: h.w = {hw:.3e}")
    y = w @ x
    g = -(x @ density.score(y)) / x.shape[1] - h / hw
    if lam:
        g = g + lam * (x @ smoothed_l1_grad(y, eps))
    return g


def emk_row_gradient(x, w_matrix, n: int, density) -> np.ndarray:
    """ICA-EMK row gradient ``-sum_i lambda_i E[r_i'(y_n) x] - h_n/(h_n . w_n)``."""
    return row_gradient(x, w_matrix, n, density)


def sparse_row_gradient(x, w_matrix, n: int, density, lam: float, eps: float) -> np.ndarray:
    return row_gradient(x, w_matrix, n, density, lam, eps)


# ---------------------------------------------------------------------------
# one row task: fit, gradient, step
# ---------------------------------------------------------------------------


@dataclass
class _RowResult:
    w: np.ndarray
    entropy: float
    reg: float
    stalled: bool
    collapsed: bool = False
    gamma: float = 1.0
    density: object = None


def _fit(model, y, prev):
    if prev is not None and hasattr(model, "refit"):
        return model.refit(y, prev)
    return model.fit(y)


def _row_task(x, w_matrix, n, model, lam, eps, step, max_halvings, gamma0=1.0, prev=None) -> _RowResult:
    w = w_matrix[n]
    y = w @ x
    dens = _fit(model, y, prev)
    ent = float(dens.entropy())
    reg = lam * float(np.sum(np.sqrt(y * y + eps))) if lam else 0.0

    def result(w_out, stalled, collapsed=False, gamma=gamma0):
        return _RowResult(w_out, ent, reg, stalled, collapsed, gamma, dens)

    try:
        h = decouple_h(w_matrix, n)
    except ValueError:
        return result(w, True, True)
    if h @ w < 1e-12:
        return result(w, True, True)
    g = row_gradient(x, w_matrix, n, dens, lam, eps, h=h)
    u = sphere_project(w, g)
    un = float(np.linalg.norm(u))
    if un == 0.0 or not np.isfinite(un):
        return result(w, True)
    if step != "line_search":
        wn = w - float(step) * u
        return result(wn / np.linalg.norm(wn), False)
    d = u / un
    j0 = row_cost(x, w, h, dens, lam, eps)
    gamma = gamma0
    for _ in range(max_halvings + 1):
        cand = w - gamma * d
        cand /= np.linalg.norm(cand)
        if h @ cand > 0:
            jc = row_cost(x, cand, h, dens, lam, eps)
            if jc <= j0 - ARMIJO_C * gamma * un:
                return result(cand, False, gamma=gamma)
        gamma *= 0.5
    return result(w, True)


_WORKER_X = None


def _init_worker(x):
    global _WORKER_X
    _WORKER_X = x


def _worker_row(args):
    return _row_task(_WORKER_X, *args)


def _random_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def _initial_w(cfg: IcaConfig, x, rng, w0):
    n = x.shape[0]
    if w0 is not None:
        w = np.array(w0, dtype=float)
    elif isinstance(cfg.init, np.ndarray):
        w = np.array(cfg.init, dtype=float)
    elif cfg.init == "identity":
        w = np.eye(n)
    elif cfg.init == "random":
        w = _random_orthogonal(n, rng)
    elif cfg.init == "fastica":
        w = init_fastica(x, seed=cfg.seed)
    else:
        raise ValueError(f"unknown init {cfg.init!r}")
    if w.shape != (n, n):
        raise ValueError("initial W has the wrong shape")
    return w / np.linalg.norm(w, axis=1, keepdims=True)


def _reinit_row(w: np.ndarray, n: int, rng) -> np.ndarray:
    others = np.delete(w, n, axis=0)
    v = rng.standard_normal(w.shape[1])
    q, _ = np.linalg.qr(others.T)
    v -= q @ (q.T @ v)
    return v / np.linalg.norm(v)


def _start(prev: float) -> float:
    # first trial step of the backtracking search: twice the last accepted step, at most 1
    return min(1.0, 2.0 * prev)


def run_decoupled(
    x,
    cfg: IcaConfig,
    lam=None,
    eps=None,
    w0=None,
    orthogonal: bool = False,
    max_iter: Optional[int] = None,
) -> DemixingState:
    """Generic decoupled sweep loop shared by ICA-EMK and SparseICA stages.

    ``orthogonal`` applies symmetric decorrelation after every sweep.
    """
    x = np.asarray(x, dtype=float)
    n, v = x.shape
    if n < 2:
        raise ValueError("need at least two sources")
    if not np.all(np.isfinite(x)):
        raise ValueError("x has non-finite entries")
    lam = np.zeros(n) if lam is None else np.broadcast_to(np.asarray(lam, dtype=float), (n,))
    eps = np.full(n, 1e-2) if eps is None else np.broadcast_to(np.asarray(eps, dtype=float), (n,))
    max_iter = cfg.max_iter if max_iter is None else max_iter
    rng = np.random.default_rng(cfg.seed)
    model = make_model(cfg.density)
    w = _initial_w(cfg, x, rng, w0)
    if orthogonal:
        w = symmetric_decorrelation(w)
    restarts = np.zeros(n, dtype=int)
    gammas = np.ones(n)
    prev: list = [None] * n
    hist: List[float] = []
    diag: dict = {"restarts": 0, "identity_checks": 0}
    pool = None
    if cfg.parallel_rows and cfg.n_workers > 1:
        if cfg.executor == "process":
            pool = ProcessPoolExecutor(cfg.n_workers, initializer=_init_worker, initargs=(x,))
        else:
            pool = ThreadPoolExecutor(cfg.n_workers)
    converged, it, row_time = False, 0, 0.0
    t_start = time.perf_counter()
    try:
        for it in range(1, max_iter + 1):
            if cfg.check_identity:
                _check_decoupling_identity(w)
                diag["identity_checks"] += 1
            logdet = np.linalg.slogdet(w)[1]
            t_row = time.perf_counter()
            if cfg.parallel_rows:
                snap = w.copy()
                args = [
                    (snap, k, model, float(lam[k]), float(eps[k]), cfg.step, cfg.max_halvings, _start(gammas[k]), prev[k])
                    for k in range(n)
                ]
                if pool is None:
                    results = [_row_task(x, *a) for a in args]
                elif cfg.executor == "process":
                    results = list(pool.map(_worker_row, args))
                else:
                    results = list(pool.map(lambda a: _row_task(x, *a), args))
                new_w = np.vstack([r.w for r in results])
            else:
                results = []
                new_w = w.copy()
                for k in range(n):
                    r = _row_task(
                        x,
                        new_w,
                        k,
                        model,
                        float(lam[k]),
                        float(eps[k]),
                        cfg.step,
                        cfg.max_halvings,
                        _start(gammas[k]),
                        prev[k],
                    )
                    new_w[k] = r.w
                    results.append(r)
            row_time += time.perf_counter() - t_row
            # cost of the sweep-start W (densities were fitted on its outputs)
            cost = sum(r.entropy + r.reg for r in results) - logdet
            if not np.isfinite(cost):
                raise FloatingPointError("non-finite cost")
            hist.append(float(cost))
            gammas = np.array([r.gamma for r in results])
            prev = [r.density for r in results]
            for k, r in enumerate(results):
                if r.collapsed:
                    restarts[k] += 1
                    diag["restarts"] += 1
                    if restarts[k] > 3:
                        raise RowCollapseError(f"row collapse at row {k} after 3 restarts")
                    new_w[k] = _reinit_row(new_w, k, rng)
                    prev[k] = None
            if orthogonal:
                new_w = symmetric_decorrelation(new_w)
            if abs(np.linalg.det(new_w)) < 1e-12:
                # merged Jacobi updates may make W singular: fall back to the snapshot for the worst row
                k = int(np.argmin([abs(decouple_h(new_w, j) @ new_w[j]) for j in range(n)]))
                new_w[k] = w[k]
                diag["singular_merges"] = diag.get("singular_merges", 0) + 1
            stalled = all(r.stalled for r in results)
            w = new_w
            if len(hist) > cfg.lag and abs(hist[-1] - hist[-1 - cfg.lag]) < cfg.tol * max(1.0, abs(hist[-1])):
                converged = True
                break
            if stalled and not any(r.collapsed for r in results):
                # no row could move: W is a fixed point of the sweep
                converged = True
                break
    finally:
        if pool is not None:
            pool.shutdown()
    diag["loop_time"] = time.perf_counter() - t_start
    diag["row_time"] = row_time
    diag["final_cost"] = total_cost(x, w, model, lam, eps)
    return DemixingState(w=w, cost_history=hist, iteration=it, converged=converged, diagnostics=diag)


def total_cost(x, w, density="emk", lam=None, eps=None, parts: bool = False):
    """``J(W) = sum_n H(y_n) - log|det W| + sum_n lam_n sum_v sqrt(y_nv^2 + eps_n)``.

    With ``parts=True`` returns ``(total, independence, sparsity)`` where the
    independence part is the unregularized ICA cost.
    """
    model = make_model(density)
    y = w @ x
    n = w.shape[0]
    lam = np.zeros(n) if lam is None else np.broadcast_to(np.asarray(lam, dtype=float), (n,))
    eps = np.full(n, 1e-2) if eps is None else np.broadcast_to(np.asarray(eps, dtype=float), (n,))
    ent = sum(float(model.fit(y[k]).entropy()) for k in range(n))
    ica = ent - np.linalg.slogdet(w)[1]
    sp = float(sum(lam[k] * np.sum(np.sqrt(y[k] ** 2 + eps[k])) for k in range(n) if lam[k]))
    if parts:
        return float(ica + sp), float(ica), sp
    return float(ica + sp)


def _check_decoupling_identity(w: np.ndarray, rtol: float = 1e-8):
    d2 = np.linalg.det(w) ** 2
    for k in range(w.shape[0]):
        rest = np.delete(w, k, axis=0)
        rhs = np.linalg.det(rest @ rest.T) * (decouple_h(w, k) @ w[k]) ** 2
        if abs(rhs - d2) > rtol * max(abs(d2), 1e-300):
            raise AssertionError(f"decoupling identity violated at row {k}")


# ---------------------------------------------------------------------------
# public entry points
# ---------------------------------------------------------------------------


def run_ica_emk(x, cfg: Optional[IcaConfig] = None, w0=None) -> DemixingState:
    """ICA with a per-sweep refitted source density (EMK by default)."""
    cfg = IcaConfig() if cfg is None else cfg
    t0 = time.perf_counter()
    st = run_decoupled(x, cfg, w0=w0)
    st.diagnostics["wall_time"] = time.perf_counter() - t0
    return st


def init_fastica(x, seed=None, max_iter: int = 200, tol: float = 1e-4, return_info: bool = False):
    """Symmetric fixed-point iteration with the tanh nonlinearity on whitened ``x``.

    Returns an orthogonal ``W0``; if the rotation change does not fall below
    ``tol`` within ``max_iter`` iterations the last iterate is returned with a
    warning.
    """
    x = np.asarray(x, dtype=float)
    n, v = x.shape
    rng = np.random.default_rng(seed)
    w = symmetric_decorrelation(rng.standard_normal((n, n)))
    converged = False
    for it in range(1, max_iter + 1):
        y = w @ x
        g = np.tanh(y)
        gp = 1.0 - g * g
        wn = symmetric_decorrelation(g @ x.T / v - gp.mean(axis=1)[:, None] * w)
        change = float(np.max(1.0 - np.abs(np.sum(wn * w, axis=1))))
        w = wn
        if change < tol:
            converged = True
            break
    if not converged:
        warnings.warn("init_fastica did not converge; returning the last iterate", RuntimeWarning)
    if return_info:
        return w, {"converged": converged, "iterations": it}
    return w


def run_sparse_ica(x, cfg: Optional[SparseConfig] = None, w0=None) -> DemixingState:
    """Three-stage SparseICA.

    1. fixed-point initializer (``init_fastica``);
    2. orthogonal decoupled updates of the regularized cost with symmetric
       decorrelation after every sweep;
    3. nonorthogonal decoupled updates of the regularized cost.
    """
    cfg = SparseConfig() if cfg is None else cfg
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    lam, eps = cfg.per_source(n)
    base = cfg.base
    t0 = time.perf_counter()
    if w0 is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            w0, info = init_fastica(x, seed=base.seed, return_info=True)
    else:
        info = {"converged": None, "iterations": 0}
    s2 = run_decoupled(x, base, lam, eps, w0=w0, orthogonal=True, max_iter=cfg.stage2_max_iter)
    s3 = run_decoupled(x, base, lam, eps, w0=s2.w, orthogonal=False)
    total, ica, sp = total_cost(x, s3.w, base.density, lam, eps, parts=True)
    s3.cost_history = s2.cost_history + s3.cost_history
    s3.diagnostics.update(
        {
            "stage1": info,
            "stage2_iterations": s2.iteration,
            "stage3_iterations": s3.iteration,
            "final_total": total,
            "final_independence": ica,
            "final_sparsity": sp,
            "wall_time": time.perf_counter() - t0,
        }
    )
    return s3
