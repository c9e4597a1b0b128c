"""Scatter, shape and scale estimators for the MGGD.

Scatter iterations (all share the fixed-point functional ``f``):

* ``mlfp``   plain fixed point ``S <- f(S)``
* ``rafp``   Riemannian-averaged fixed point ``S <- S #_{1/(k+1)} f(S)``
* ``fp-eps`` perturbed fixed point ``S <- (1 - eps) f(S) + eps I``
* ``mlfs``   Fisher scoring with a backtracking line search

``f`` is homogeneous of degree one, so the scatter/scale split is fixed
by rescaling every iterate to ``trace(S) = K``; the scale goes into ``m``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy.special import digamma, gammaln, logsumexp

from .density import MggdParams, mahalanobis
from .spd import check_spd, floor_eigenvalues, riem_average, riem_distance, symmetrize

BETA_MIN, BETA_MAX = 0.05, 20.0
SCATTER_METHODS = ("mlfp", "rafp", "mlfs", "fp-eps")
JOINT_METHODS = ("mom", "mlfp", "mlfs", "rafp", "fp-eps")


@dataclass
class FitReport:
    params: MggdParams
    iterations: int
    final_step: float
    converged: bool
    trace: Optional[List[Tuple[float, float]]] = None
    method: str = ""
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "params": self.params.to_dict(),
            "iterations": int(self.iterations),
            "final_step": float(self.final_step),
            "converged": bool(self.converged),
            "trace": None if self.trace is None else [list(map(float, t)) for t in self.trace],
            "diagnostics": self.diagnostics,
        }


def _check_data(data) -> np.ndarray:
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ValueError("data must be a K x T matrix")
    k, t = data.shape
    if t <= k:
        raise ValueError(f"need more samples than dimensions (T={t}, K={k})")
    if not np.all(np.isfinite(data)):
        raise ValueError("data has non-finite entries")
    return data


def trace_normalize(s: np.ndarray) -> np.ndarray:
    return s * (s.shape[0] / np.trace(s))


def sample_scatter(data: np.ndarray) -> np.ndarray:
    """Second-moment matrix ``(1/T) Y Y^T`` (the data are taken as zero-mean)."""
    return symmetrize(data @ data.T / data.shape[1])


def fp_map(sigma: np.ndarray, data: np.ndarray, beta: float) -> np.ndarray:
    """Fixed-point functional ``f(S) = sum_i K / (u_i + u_i^(1-b) sum_{j!=i} u_j^b) y_i y_i^T``.

    The per-sample weight simplifies to ``K u_i^(b-1) / sum_j u_j^b``; it is
    evaluated in the log domain so large shapes do not overflow.
    """
    sigma = check_spd(sigma, "sigma")
    data = np.asarray(data, dtype=float)
    k = sigma.shape[0]
    u = mahalanobis(data, sigma)
    if np.any(u <= 0.0):
        raise ValueError("degenerate sample: some u_i = 0")
    lu = np.log(u)
    w = np.exp(math.log(k) + (beta - 1.0) * lu - logsumexp(beta * lu))
    return symmetrize((data * w) @ data.T)


def profile_loglik(sigma: np.ndarray, data: np.ndarray, beta: float) -> float:
    """Per-sample log-likelihood with ``m`` profiled out (up to a constant).

    ``-1/2 log|S| - K/(2 beta) log mean(u^beta)``; invariant to scaling ``S``.
    """
    k = sigma.shape[0]
    u = mahalanobis(data, sigma)
    return float(
        -0.5 * np.linalg.slogdet(sigma)[1]
        - (k / (2.0 * beta)) * (logsumexp(beta * np.log(u)) - math.log(u.size))
    )


def fisher_matrix(k: int, beta: float) -> np.ndarray:
    """K x K Fisher information matrix with the closed-form diagonal/off-diagonal entries."""
    diag = 0.25 * ((3.0 * k + 6.0 * beta) / (k + 2.0) - 1.0)
    off = 0.25 * ((k + 2.0 * beta) / (k + 2.0) - 1.0)
    g = np.full((k, k), off)
    np.fill_diagonal(g, diag)
    return g


def _initial_scatter(data: np.ndarray, init) -> np.ndarray:
    k = data.shape[0]
    if init is None or (isinstance(init, str) and init == "mom"):
        return trace_normalize(sample_scatter(data))
    if isinstance(init, str) and init == "identity":
        return np.eye(k)
    s = check_spd(np.asarray(init, dtype=float), "init")
    if s.shape != (k, k):
        raise ValueError("init has the wrong dimension")
    return trace_normalize(s)


class _ScatterStepper:
    """One scatter update per call; ``k`` is the zero-based iteration index."""

    def __init__(self, method: str, data: np.ndarray, eps: float = 0.0, max_retries: int = 20):
        if method not in SCATTER_METHODS:
            raise ValueError(f"unknown scatter method {method!r}")
        self.method = method
        self.data = data
        self.eps = eps
        self.max_retries = max_retries
        self.failed = False

    def __call__(self, sigma: np.ndarray, beta: float, k: int) -> np.ndarray:
        m = self.method
        if m == "mlfp":
            return trace_normalize(fp_map(sigma, self.data, beta))
        if m == "rafp":
            return trace_normalize(riem_average(sigma, fp_map(sigma, self.data, beta), 1.0 / (k + 1.0)))
        if m == "fp-eps":
            f = fp_map(sigma, self.data, beta)
            return trace_normalize((1.0 - self.eps) * f + self.eps * np.eye(sigma.shape[0]))
        return self._fisher_step(sigma, beta)

    def _fisher_step(self, sigma: np.ndarray, beta: float) -> np.ndarray:
        kdim = sigma.shape[0]
        f = fp_map(sigma, self.data, beta)
        si = np.linalg.inv(sigma)
        grad = symmetrize(si @ (f - sigma) @ si)
        direction = symmetrize(np.linalg.solve(fisher_matrix(kdim, beta), grad))
        slope = 0.5 * float(np.sum(grad * direction))
        if slope <= 0:
            return sigma
        l0 = profile_loglik(sigma, self.data, beta)
        alpha = 1.0
        for _ in range(self.max_retries + 1):
            cand = sigma + alpha * direction
            if np.linalg.eigvalsh(symmetrize(cand))[0] > 0:
                cand = floor_eigenvalues(cand)
                if profile_loglik(cand, self.data, beta) >= l0 + 1e-4 * alpha * slope:
                    return trace_normalize(cand)
            alpha *= 0.5
        self.failed = True
        return sigma


def estimate_scatter(
    data,
    beta: float,
    method: str = "rafp",
    tol: float = 1e-6,
    max_iter: int = 500,
    init=None,
    eps: float = 0.01,
    trace: bool = False,
) -> FitReport:
    """Iterate a scatter update at fixed shape ``beta`` until successive iterates are within ``tol``."""
    data = _check_data(data)
    if beta <= 0:
        raise ValueError("beta must be > 0")
    step = _ScatterStepper(method, data, eps=eps)
    sigma = _initial_scatter(data, init)
    hist: Optional[list] = [] if trace else None
    converged, d, growing, it = False, float("inf"), 0, 0
    diag: dict = {}
    prev_d = float("inf")
    for it in range(1, max_iter + 1):
        new = step(sigma, beta, it - 1)
        d = riem_distance(sigma, new)
        sigma = new
        if hist is not None:
            hist.append((d, profile_loglik(sigma, data, beta)))
        if step.failed:
            diag["failure"] = "step left the SPD cone after repeated damping"
            break
        if d < tol:
            converged = True
            break
        growing = growing + 1 if d > prev_d else 0
        prev_d = d
        if growing >= 10:
            diag["failure"] = "diverging: step distance grew for 10 consecutive iterations"
            break
    m = estimate_m(data, sigma, beta)
    return FitReport(
        params=MggdParams(sigma, float(beta), m),
        iterations=it,
        final_step=float(d),
        converged=converged,
        trace=hist,
        method=method,
        diagnostics=diag,
    )


def estimate_scatter_mlfp(data, beta, tol=1e-6, max_iter=500, init=None, trace=False) -> FitReport:
    return estimate_scatter(data, beta, "mlfp", tol, max_iter, init, trace=trace)


def estimate_scatter_rafp(data, beta, tol=1e-6, max_iter=500, init=None, trace=False) -> FitReport:
    return estimate_scatter(data, beta, "rafp", tol, max_iter, init, trace=trace)


def estimate_scatter_mlfs(data, beta, tol=1e-6, max_iter=500, init=None, trace=False) -> FitReport:
    return estimate_scatter(data, beta, "mlfs", tol, max_iter, init, trace=trace)


def estimate_scatter_fp_eps(data, beta, eps, tol=1e-6, max_iter=500, init=None, trace=False) -> FitReport:
    if eps < 0 or eps > 1:
        raise ValueError("eps must lie in [0, 1]")
    return estimate_scatter(data, beta, "fp-eps", tol, max_iter, init, eps=eps, trace=trace)


# ---------------------------------------------------------------------------
# shape and scale
# ---------------------------------------------------------------------------


def gamma_beta(beta: float, u: np.ndarray, k: int) -> float:
    """Shape likelihood equation; its root in ``beta`` is the ML shape estimate.

    Per-sample form, evaluated in the log domain and invariant to rescaling ``u``.
    """
    lu = np.log(u)
    bl = beta * lu
    lse = logsumexp(bl)
    w = np.exp(bl - lse)
    a = k / (2.0 * beta)
    return float(
        0.5 * k * np.dot(w, lu)
        - a * (digamma(a) + math.log(2.0))
        - 1.0
        - a * (math.log(beta / (k * u.size)) + lse)
    )


def _beta_bracket(g, lo=BETA_MIN, hi=BETA_MAX):
    glo, ghi = g(lo), g(hi)
    if not (np.isfinite(glo) and np.isfinite(ghi)) or np.sign(glo) == np.sign(ghi):
        raise ValueError("shape not identifiable: no sign change of the shape equation in [0.05, 20]")
    return glo, ghi


def _newton_beta_step(g, beta, lo, hi, glo):
    """One Newton step with a central finite-difference derivative, kept inside [lo, hi]."""
    h = 1e-4 * beta
    gb = g(beta)
    d = (g(beta + h) - g(beta - h)) / (2 * h)
    nb = beta - gb / d if d != 0 and np.isfinite(d) else np.nan
    if not (lo < nb < hi):
        nb = 0.5 * (lo + hi)
    gn = g(nb)
    if np.sign(gn) == np.sign(glo):
        lo, glo = nb, gn
    else:
        hi = nb
    return nb, gn, lo, hi, glo


def estimate_beta(data, sigma, init_beta: float = 1.0, tol: float = 1e-8, max_iter: int = 100) -> float:
    """Newton-Raphson root of the shape equation, bisection-safeguarded on [0.05, 20]."""
    data = np.asarray(data, dtype=float)
    sigma = check_spd(sigma, "sigma")
    if init_beta <= 0:
        raise ValueError("init_beta must be > 0")
    k = data.shape[0]
    u = mahalanobis(data, sigma)
    if np.any(u <= 0):
        raise ValueError("degenerate sample: some u_i = 0")

    def g(b):
        return gamma_beta(b, u, k)

    return _solve_beta(g, init_beta, tol, max_iter)


def _solve_beta(g, init_beta, tol, max_iter):
    glo, _ = _beta_bracket(g)
    lo, hi = BETA_MIN, BETA_MAX
    beta = float(np.clip(init_beta, BETA_MIN * 1.0001, BETA_MAX / 1.0001))
    if abs(g(beta)) < tol:
        return beta
    for _ in range(max_iter):
        beta, gb, lo, hi, glo = _newton_beta_step(g, beta, lo, hi, glo)
        if abs(gb) < tol or hi - lo < 1e-14 * beta:
            return float(beta)
    raise RuntimeError(f"shape Newton did not converge; |gamma| = {abs(gb):.3e}")


def estimate_m(data, sigma, beta: float) -> float:
    """Scale estimate ``m = ((beta/(K T)) sum_i u_i^beta)^(1/beta)``."""
    data = np.asarray(data, dtype=float)
    k, t = data.shape
    u = mahalanobis(data, np.asarray(sigma, dtype=float))
    log_mb = math.log(beta / (k * t)) + logsumexp(beta * np.log(np.maximum(u, 1e-300)))
    return float(math.exp(log_mb / beta))


def mom_ratio(k: int, beta) -> np.ndarray:
    """Radial moment ratio ``E[u^2]/E[u]^2`` of the MGGD as a function of shape."""
    beta = np.asarray(beta, dtype=float)
    return np.exp(
        gammaln((k + 4) / (2 * beta)) + gammaln(k / (2 * beta)) - 2 * gammaln((k + 2) / (2 * beta))
    )


def estimate_mom(data) -> FitReport:
    """Method-of-moments fit: trace-normalized sample scatter, moment-matched shape."""
    data = _check_data(data)
    k = data.shape[0]
    sigma = trace_normalize(sample_scatter(data))
    u = mahalanobis(data, sigma)
    target = float(np.mean(u**2) / np.mean(u) ** 2)
    diag = {}
    r_lo, r_hi = float(mom_ratio(k, BETA_MIN)), float(mom_ratio(k, BETA_MAX))
    if target >= r_lo:
        beta, diag["warning"] = BETA_MIN, "moment ratio above attainable range; shape clamped"
    elif target <= r_hi:
        beta, diag["warning"] = BETA_MAX, "moment ratio below attainable range; shape clamped"
    else:
        # ratio is decreasing in beta; bisect on log(beta)
        lo, hi = math.log(BETA_MIN), math.log(BETA_MAX)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mom_ratio(k, math.exp(mid)) > target:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-13:
                break
        beta = math.exp(0.5 * (lo + hi))
    if "warning" in diag:
        warnings.warn(diag["warning"], RuntimeWarning)
    m = estimate_m(data, sigma, beta)
    return FitReport(MggdParams(sigma, beta, m), 0, 0.0, True, None, "mom", diag)


def estimate_joint(
    data,
    method: str = "rafp",
    tol: float = 1e-6,
    max_iter: int = 500,
    eps: float = 0.01,
    beta_bounds: Tuple[float, float] = (BETA_MIN, BETA_MAX),
    trace: bool = False,
    init: Optional[MggdParams] = None,
) -> FitReport:
    """Alternate one scatter step and one shape Newton step, starting from MoM.

    Stops when ``D(k) = d(S_k, S_k+1) + |dbeta|/beta < tol``; ``m`` is
    estimated last. ``init`` replaces the MoM starting point (warm start).
    """
    if method not in JOINT_METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {JOINT_METHODS}")
    data = _check_data(data)
    lo_b, hi_b = beta_bounds
    if init is not None and method != "mom":
        mom = FitReport(MggdParams(trace_normalize(init.scatter), init.shape, 1.0), 0, 0.0, True, method="init")
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            mom = estimate_mom(data)
    if method == "mom":
        b = float(np.clip(mom.params.shape, lo_b, hi_b))
        p = MggdParams(mom.params.scatter, b, estimate_m(data, mom.params.scatter, b))
        return FitReport(p, 0, 0.0, True, None, "mom", dict(mom.diagnostics))
    k = data.shape[0]
    step = _ScatterStepper(method, data, eps=eps)
    sigma = mom.params.scatter
    beta = float(np.clip(mom.params.shape, lo_b, hi_b))
    hist = [] if trace else None
    diag: dict = {}
    converged, dk, it = False, float("inf"), 0
    for it in range(1, max_iter + 1):
        new = step(sigma, beta, it - 1)
        ds = riem_distance(sigma, new)
        sigma = new
        u = mahalanobis(data, sigma)

        def g(b):
            return gamma_beta(b, u, k)

        try:
            glo, ghi = _beta_bracket(g, lo_b, hi_b)
            start = float(np.clip(beta, lo_b * 1.0001, hi_b / 1.0001))
            nb, _, _, _, _ = _newton_beta_step(g, start, lo_b, hi_b, glo)
        except ValueError:
            # no root inside the bounds: the likelihood is monotone there
            nb = lo_b if g(lo_b) > 0 else hi_b
            diag["beta_clamped"] = True
        db = abs(nb - beta) / beta
        beta = float(nb)
        dk = ds + db
        if hist is not None:
            hist.append((dk, profile_loglik(sigma, data, beta)))
        if step.failed:
            diag["failure"] = "scatter step left the SPD cone after repeated damping"
            break
        if dk < tol:
            converged = True
            break
    m = estimate_m(data, sigma, beta)
    return FitReport(MggdParams(sigma, beta, m), it, float(dk), converged, hist, method, diag)
