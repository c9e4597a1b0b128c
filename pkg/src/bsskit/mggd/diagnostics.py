"""Non-expansivity probe of the fixed-point functional."""

from __future__ import annotations

import numpy as np

from ..sources import make_ar1_scatter
from .estimators import fp_map
from .spd import riem_distance


def nonexpansivity_probe(data, beta: float, sigma_grid) -> np.ndarray:
    """Surface ``D[i, j] = d(f(M_i), f(M_j)) - d(M_i, M_j)`` over AR(1) scatters.

    ``M_i = make_ar1_scatter(K, sigma_grid[i])`` with ``K`` taken from ``data``.
    Negative entries mean ``f`` contracts that pair.
    """
    data = np.asarray(data, dtype=float)
    grid = np.asarray(sigma_grid, dtype=float)
    if np.any((grid <= 0) | (grid >= 1)):
        raise ValueError("AR(1) grid values must lie in (0, 1)")
    k = data.shape[0]
    ms = [make_ar1_scatter(k, s) for s in grid]
    fs = [fp_map(m, data, beta) for m in ms]
    n = len(grid)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = riem_distance(fs[i], fs[j]) - riem_distance(ms[i], ms[j])
    return out
