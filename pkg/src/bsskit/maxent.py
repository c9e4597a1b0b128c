"""Maximum-entropy density estimation with kernels (EMK).

The density has the form ``p(x) = exp(-1 + sum_i lambda_i r_i(x))`` where the
measuring functions ``r_i`` are four global functions ``{1, x, x^2,
x/(1+x^2)}`` plus up to ``max_local`` Gaussian bumps. Integrals are taken
with a fixed 2048-point trapezoid rule on a finite support.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

GLOBAL_FUNCTIONS = ("1", "x", "x2", "x/(1+x2)")
GRID_POINTS = 2048


class MaxEntError(RuntimeError):
    """Raised when the Lagrange-multiplier solve fails."""


def _global_value(name: str, x: np.ndarray) -> np.ndarray:
    if name == "1":
        return np.ones_like(x)
    if name == "x":
        return x
    if name == "x2":
        return x * x
    if name == "x/(1+x2)":
        return x / (1.0 + x * x)
    raise ValueError(f"unknown global measuring function {name!r}")


def _global_deriv(name: str, x: np.ndarray) -> np.ndarray:
    if name == "1":
        return np.zeros_like(x)
    if name == "x":
        return np.ones_like(x)
    if name == "x2":
        return 2.0 * x
    if name == "x/(1+x2)":
        q = 1.0 + x * x
        return (1.0 - x * x) / (q * q)
    raise ValueError(f"unknown global measuring function {name!r}")


@dataclass(frozen=True)
class MeasuringFunctionSet:
    """Global functions by name plus Gaussian kernels ``(mu, sigma)``."""

    globals: Tuple[str, ...] = GLOBAL_FUNCTIONS
    locals: Tuple[Tuple[float, float], ...] = ()
    max_local: int = 5

    def __post_init__(self):
        if not self.globals or self.globals[0] != "1":
            raise ValueError("the first measuring function must be the constant 1")
        for g in self.globals:
            if g not in GLOBAL_FUNCTIONS:
                raise ValueError(f"unknown global measuring function {g!r}")
        if len(self.locals) > self.max_local:
            raise ValueError(f"at most {self.max_local} local kernels allowed")
        for mu, s in self.locals:
            if not s > 0:
                raise ValueError("kernel widths must be positive")

    @property
    def size(self) -> int:
        return len(self.globals) + len(self.locals)

    def with_kernel(self, mu: float, sigma: float) -> "MeasuringFunctionSet":
        return MeasuringFunctionSet(self.globals, self.locals + ((float(mu), float(sigma)),), self.max_local)

    def evaluate(self, x) -> np.ndarray:
        """M x len(x) matrix of function values."""
        x = np.asarray(x, dtype=float)
        rows = [_global_value(g, x) for g in self.globals]
        rows += [np.exp(-((x - mu) ** 2) / (2.0 * s * s)) for mu, s in self.locals]
        return np.stack(rows)

    def derivative(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        rows = [_global_deriv(g, x) for g in self.globals]
        for mu, s in self.locals:
            d = x - mu
            rows.append(-d / (s * s) * np.exp(-d * d / (2.0 * s * s)))
        return np.stack(rows)

    def to_dict(self) -> dict:
        return {"globals": list(self.globals), "locals": [list(k) for k in self.locals], "max_local": self.max_local}

    @classmethod
    def from_dict(cls, d: dict) -> "MeasuringFunctionSet":
        return cls(tuple(d["globals"]), tuple(tuple(map(float, k)) for k in d["locals"]), int(d["max_local"]))


def quadrature_grid(support: Tuple[float, float], n: int = GRID_POINTS):
    a, b = map(float, support)
    if not (np.isfinite(a) and np.isfinite(b) and b > a):
        raise ValueError(f"invalid support {support!r}")
    x = np.linspace(a, b, n)
    w = np.full(n, (b - a) / (n - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return x, w


@dataclass
class MaxEntDensity:
    functions: MeasuringFunctionSet
    lambdas: np.ndarray
    alphas: np.ndarray
    support: Tuple[float, float]
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lambdas = np.asarray(self.lambdas, dtype=float)
        self.alphas = np.asarray(self.alphas, dtype=float)
        if self.lambdas.shape != (self.functions.size,) or self.alphas.shape != (self.functions.size,):
            raise ValueError("lambdas/alphas length must match the function set")

    def logpdf(self, x):
        v = -1.0 + self.lambdas @ self.functions.evaluate(np.atleast_1d(x))
        return v if np.ndim(x) else float(v[0])

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def score(self, x):
        """``d log p / dx = sum_i lambda_i r_i'(x)``."""
        v = self.lambdas @ self.functions.derivative(np.atleast_1d(x))
        return v if np.ndim(x) else float(v[0])

    def entropy(self) -> float:
        return entropy(self)

    def grid(self):
        return quadrature_grid(self.support)

    def normalization(self) -> float:
        x, w = self.grid()
        return float(w @ self.pdf(x))

    def constraint_residual(self) -> np.ndarray:
        x, w = self.grid()
        r = self.functions.evaluate(x)
        return r @ (w * np.exp(-1.0 + self.lambdas @ r)) - self.alphas

    def to_dict(self) -> dict:
        return {
            "functions": self.functions.to_dict(),
            "lambdas": self.lambdas.tolist(),
            "alphas": self.alphas.tolist(),
            "support": [float(self.support[0]), float(self.support[1])],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "MaxEntDensity":
        return cls(
            MeasuringFunctionSet.from_dict(d["functions"]),
            np.asarray(d["lambdas"], dtype=float),
            np.asarray(d["alphas"], dtype=float),
            (float(d["support"][0]), float(d["support"][1])),
        )


def entropy(density: MaxEntDensity) -> float:
    """Differential entropy ``1 - sum_i lambda_i alpha_i``."""
    return float(1.0 - density.lambdas @ density.alphas)


def score(density: MaxEntDensity, x):
    return density.score(x)


def gaussian_warm_start(functions: MeasuringFunctionSet, alphas) -> np.ndarray:
    """Multipliers of the Gaussian matching the first two moments (zeros elsewhere)."""
    alphas = np.asarray(alphas, dtype=float)
    lam = np.zeros(functions.size)
    names = functions.globals
    mean = alphas[names.index("x")] if "x" in names else 0.0
    if "x2" in names:
        var = alphas[names.index("x2")] - mean**2
        if var <= 0:
            raise ValueError("moment-infeasible alphas: non-positive variance")
        lam[names.index("x2")] = -0.5 / var
        if "x" in names:
            lam[names.index("x")] = mean / var
        lam[0] = 1.0 - 0.5 * math.log(2 * math.pi * var) - mean**2 / (2 * var)
    return lam


def default_support(alphas, functions: MeasuringFunctionSet, width: float = 10.0):
    names = functions.globals
    alphas = np.asarray(alphas, dtype=float)
    mean = alphas[names.index("x")] if "x" in names else 0.0
    sd = math.sqrt(max(alphas[names.index("x2")] - mean**2, 1e-12)) if "x2" in names else 1.0
    return (mean - width * sd, mean + width * sd)


def _solve_on_grid(r: np.ndarray, w: np.ndarray, alphas: np.ndarray, lam: np.ndarray, tol: float, max_iter: int):
    """Damped Newton on ``g(lambda) = int r p - alpha`` with ``J = int r r^T p``.

    ``g`` and ``J`` are the gradient and Hessian of the convex dual
    ``F(lambda) = int p - lambda . alpha``; step halving is driven by an
    Armijo decrease of ``F``. Convergence is ``|g_i| < tol * max(1, |alpha_i|)``.
    """
    scale = np.maximum(1.0, np.abs(alphas))

    def evaluate(lmb):
        z = -1.0 + lmb @ r
        if z.max() > 700:
            return None, None, None
        pw = w * np.exp(z)
        return r @ pw - alphas, pw, pw.sum() - lmb @ alphas

    g, pw, f = evaluate(lam)
    if g is None:
        raise MaxEntError("initial multipliers overflow the quadrature")
    gn = np.max(np.abs(g) / scale)
    for it in range(max_iter):
        if gn < tol:
            return lam, gn, it
        jac = (r * pw) @ r.T
        try:
            step = np.linalg.solve(jac, g)
        except np.linalg.LinAlgError:
            raise MaxEntError("degenerate constraint set: singular Jacobian") from None
        if not np.all(np.isfinite(step)):
            raise MaxEntError("degenerate constraint set: singular Jacobian")
        slope = float(g @ step)
        t = 1.0
        for _ in range(21):
            cand = lam - t * step
            gc, pc, fc = evaluate(cand)
            if gc is not None and fc <= f - 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            if gn < 1e2 * tol:
                # at the rounding floor of the dual objective
                return lam, gn, it
            raise MaxEntError(f"Newton stalled; final residual {gn:.3e}")
        lam, g, pw, f = cand, gc, pc, fc
        gn = np.max(np.abs(g) / scale)
    if gn < tol:
        return lam, gn, max_iter
    raise MaxEntError(f"Newton did not converge in {max_iter} iterations; final residual {gn:.3e}")


def solve_lagrange(
    functions: MeasuringFunctionSet,
    alphas,
    init=None,
    tol: float = 1e-9,
    max_iter: int = 100,
    support: Optional[Tuple[float, float]] = None,
) -> np.ndarray:
    """Newton solution of the Lagrange multipliers for the sample averages ``alphas``."""
    alphas = np.asarray(alphas, dtype=float)
    if alphas.shape != (functions.size,):
        raise ValueError("alphas length must match the function set")
    if abs(alphas[0] - 1.0) > 1e-12:
        raise ValueError("alpha_1 must equal 1")
    if support is None:
        support = default_support(alphas, functions)
    x, w = quadrature_grid(support)
    r = functions.evaluate(x)
    if init is None:
        init = gaussian_warm_start(functions, alphas) if "x2" in functions.globals else np.zeros(functions.size)
        if "x2" not in functions.globals:
            init[0] = 1.0 - math.log(support[1] - support[0])
    lam, _, _ = _solve_on_grid(r, w, alphas, np.asarray(init, dtype=float), tol, max_iter)
    return lam


def fit_density(
    functions: MeasuringFunctionSet,
    samples,
    support=None,
    init=None,
    tol: float = 1e-9,
    max_iter: int = 100,
) -> MaxEntDensity:
    """Fit multipliers for a fixed function set to the sample averages of ``samples``."""
    samples = np.asarray(samples, dtype=float)
    if support is None:
        support = sample_support(samples)
    alphas = functions.evaluate(samples).mean(axis=1)
    alphas[0] = 1.0
    lam = solve_lagrange(functions, alphas, init=init, tol=tol, max_iter=max_iter, support=support)
    return MaxEntDensity(functions, lam, alphas, support)


def sample_support(samples: np.ndarray):
    sd = samples.std()
    return (float(samples.min() - 3 * sd), float(samples.max() + 3 * sd))


def mdl_score(density: MaxEntDensity, n_samples: int) -> float:
    """Two-part code length ``-sum log p(x_t) + M/2 log T``.

    The log-likelihood term equals ``T * entropy`` because the alphas are the
    sample averages of the measuring functions.
    """
    return float(n_samples * entropy(density) + 0.5 * density.functions.size * math.log(n_samples))


def _histogram(samples: np.ndarray, max_bins: int = 512):
    n = samples.size
    part = np.partition(samples, [n // 4, (3 * n) // 4])
    q25, q75 = part[n // 4], part[(3 * n) // 4]
    span = samples.max() - samples.min()
    h = 2.0 * (q75 - q25) / samples.size ** (1.0 / 3.0)
    nb = int(np.clip(math.ceil(span / h) if h > 0 else 10, 10, max_bins))
    dens, edges = np.histogram(samples, bins=nb, density=True)
    return dens, edges


def _candidate_kernel(density: MaxEntDensity, hist):
    dens, edges = hist
    centres = 0.5 * (edges[:-1] + edges[1:])
    width = edges[1] - edges[0]
    dev = density.pdf(centres) - dens
    i = int(np.argmax(np.abs(dev)))
    half = 0.5 * abs(dev[i])
    sgn = np.sign(dev[i])
    lo = i
    while lo > 0 and np.sign(dev[lo - 1]) == sgn and abs(dev[lo - 1]) >= half:
        lo -= 1
    hi = i
    while hi < dev.size - 1 and np.sign(dev[hi + 1]) == sgn and abs(dev[hi + 1]) >= half:
        hi += 1
    sigma = max(0.5 * (hi - lo + 1) * width, width)
    return float(centres[i]), float(sigma)


def fit_emk(samples, max_local: int = 5, tol: float = 1e-9, max_iter: int = 100) -> MaxEntDensity:
    """Greedy EMK fit: globals first, then Gaussian kernels while MDL decreases."""
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size < 100:
        raise ValueError("fit_emk needs at least 100 samples")
    if not np.all(np.isfinite(samples)):
        raise ValueError("samples must be finite")
    if samples.std() == 0:
        raise ValueError("degenerate samples: zero variance")
    n = samples.size
    support = sample_support(samples)
    x, w = quadrature_grid(support)
    funcs = MeasuringFunctionSet(max_local=max_local)
    vals = funcs.evaluate(samples)
    alphas = vals.mean(axis=1)
    alphas[0] = 1.0
    lam0 = gaussian_warm_start(funcs, alphas)
    r_grid = funcs.evaluate(x)
    lam, _, _ = _solve_on_grid(r_grid, w, alphas, lam0, tol, max_iter)
    best = MaxEntDensity(funcs, lam, alphas, support)
    best_mdl = mdl_score(best, n)
    history = [best_mdl]
    hist = _histogram(samples)
    while len(best.functions.locals) < max_local:
        mu, sig = _candidate_kernel(best, hist)
        cand_funcs = best.functions.with_kernel(mu, sig)
        a_new = np.exp(-((samples - mu) ** 2) / (2 * sig * sig)).mean()
        cand_alphas = np.append(best.alphas, a_new)
        r_new = np.exp(-((x - mu) ** 2) / (2 * sig * sig))
        cand_r = np.vstack([r_grid, r_new])
        try:
            cand_lam, _, _ = _solve_on_grid(cand_r, w, cand_alphas, np.append(best.lambdas, 0.0), tol, max_iter)
        except MaxEntError:
            break
        cand = MaxEntDensity(cand_funcs, cand_lam, cand_alphas, support)
        cand_mdl = mdl_score(cand, n)
        if not cand_mdl < best_mdl:
            break
        best, best_mdl, r_grid = cand, cand_mdl, cand_r
        history.append(best_mdl)
    best.diagnostics = {"mdl_history": history}
    return best
