"""Source density models used inside the decoupled ICA loop.

A model's ``fit(y)`` returns a frozen density exposing ``logpdf``, ``score``
and ``entropy()`` (plug-in entropy at the fitted samples).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import maxent
from ..mggd.estimators import estimate_joint


class _Frozen:
    def entropy(self) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class EmkModel:
    """Maximum-entropy density with global and adaptive local kernels."""

    max_local: int = 5
    hysteresis: bool = True
    name: str = "emk"

    def fit(self, y: np.ndarray):
        return maxent.fit_emk(y, max_local=self.max_local)

    def refit(self, y: np.ndarray, prev):
        """Fresh greedy fit, unless the previous kernel set refitted to ``y`` is within one parameter's code length.

        Keeps the kernel set stable across sweeps so the sweep cost varies
        smoothly with ``W`` instead of jumping with every greedy reselection.
        """
        fresh = self.fit(y)
        if not self.hysteresis or prev.functions == fresh.functions:
            return fresh
        try:
            kept = maxent.fit_density(prev.functions, y, init=prev.lambdas)
        except maxent.MaxEntError:
            return fresh
        t = y.size
        if maxent.mdl_score(fresh, t) < maxent.mdl_score(kept, t) - 0.5 * math.log(t):
            return fresh
        return kept


class _TanhDensity(_Frozen):
    def __init__(self, y):
        self._h = float(np.mean(self.nll(y)))

    @staticmethod
    def nll(y):
        a = np.abs(y)
        return math.log(math.pi) + a + np.log1p(np.exp(-2 * a)) - math.log(2.0)

    def logpdf(self, y):
        return -self.nll(np.asarray(y, dtype=float))

    def score(self, y):
        return -np.tanh(y)

    def entropy(self):
        return self._h


@dataclass(frozen=True)
class TanhModel:
    """Fixed super-Gaussian density ``sech(y)/pi`` (score ``-tanh``)."""

    name: str = "tanh"

    def fit(self, y: np.ndarray):
        return _TanhDensity(y)


class _GgdDensity(_Frozen):
    def __init__(self, y, beta, c):
        self.beta, self.c = float(beta), float(c)
        lb = math.log(self.beta)
        self._lognorm = lb - math.lgamma(1 / (2 * self.beta)) - math.log(2.0) / (2 * self.beta) - 0.5 * math.log(self.c)
        self._h = -float(np.mean(self.logpdf(y)))

    def logpdf(self, y):
        y = np.asarray(y, dtype=float)
        return self._lognorm - 0.5 * (y * y / self.c) ** self.beta

    def score(self, y):
        y = np.asarray(y, dtype=float)
        u = np.maximum(y * y / self.c, 1e-12)
        return -self.beta * u ** (self.beta - 1.0) * y / self.c

    def entropy(self):
        return self._h


@dataclass(frozen=True)
class GgdModel:
    """Univariate GGD with shape and scale fitted by ML (RA-FP + Newton at K=1)."""

    beta_bounds: tuple = (0.25, 8.0)
    name: str = "ggd"

    def fit(self, y: np.ndarray):
        rep = estimate_joint(np.asarray(y, dtype=float)[None, :], method="rafp", beta_bounds=self.beta_bounds)
        p = rep.params
        return _GgdDensity(y, p.shape, float(p.scatter[0, 0]) * p.scale)


def make_model(density):
    if not isinstance(density, str):
        return density
    if density == "emk":
        return EmkModel()
    if density in ("tanh", "fixed_tanh"):
        return TanhModel()
    if density == "ggd":
        return GgdModel()
    raise ValueError(f"unknown density model {density!r}")
