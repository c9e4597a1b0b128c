"""Separation-quality and sparsity metrics."""

from __future__ import annotations

from typing import Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment


def _abs_global(g) -> np.ndarray:
    g = np.abs(np.asarray(g, dtype=float))
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError("global matrix must be square")
    if not np.all(np.isfinite(g)):
        raise ValueError("global matrix has non-finite entries")
    return g


def isi(g) -> float:
    """Inter-symbol interference of the global matrix ``G = W A``, in [0, 1].

    Row and column cross-talk, each normalized by the dominant entry, summed
    and divided by ``2N(N-1)``.
    """
    a = _abs_global(g)
    n = a.shape[0]
    if n < 2:
        return 0.0
    rmax = a.max(axis=1)
    cmax = a.max(axis=0)
    if np.any(rmax == 0) or np.any(cmax == 0):
        raise ValueError("ISI undefined: global matrix has an all-zero row or column")
    rows = (a / rmax[:, None]).sum(axis=1) - 1.0
    cols = (a / cmax[None, :]).sum(axis=0) - 1.0
    return float((rows.sum() + cols.sum()) / (2.0 * n * (n - 1)))


def isi_avg(gs: Sequence) -> float:
    if len(gs) == 0:
        raise ValueError("need at least one global matrix")
    return float(np.mean([isi(g) for g in gs]))


def isi_jnt(gs: Sequence) -> float:
    """ISI of the entrywise sum of ``|G^[k]|``; penalizes misaligned permutations."""
    if len(gs) == 0:
        raise ValueError("need at least one global matrix")
    n = np.asarray(gs[0]).shape
    if any(np.asarray(g).shape != n for g in gs):
        raise ValueError("all global matrices must share N")
    return isi(np.sum([_abs_global(g) for g in gs], axis=0))


def assign(similarity) -> np.ndarray:
    """Optimal assignment: ``perm`` maximizing ``sum_n similarity[n, perm[n]]``."""
    s = np.asarray(similarity, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError("similarity must be square")
    rows, cols = linear_sum_assignment(s, maximize=True)
    perm = np.empty(s.shape[0], dtype=int)
    perm[rows] = cols
    return perm


def align_global(g) -> np.ndarray:
    """Permute columns of ``G`` so each row's assigned dominant entry sits on the diagonal.

    Rows are normalized by their max modulus before the assignment, which makes
    the alignment invariant to source-side scaling.
    """
    g = np.asarray(g, dtype=float)
    a = _abs_global(g)
    rmax = a.max(axis=1)
    if np.any(rmax == 0):
        raise ValueError("ISR undefined: degenerate assignment (all-zero row)")
    perm = assign(a / rmax[:, None])
    return g[:, perm]


def isr(g, normalized: bool = False) -> float:
    """Average interference-to-signal ratio after alignment.

    ``(1/N) sum_n sum_{m != n} g_nm^2 / g_nn^2``; ``normalized`` divides by ``N - 1``.
    """
    gt = align_global(g) ** 2
    n = gt.shape[0]
    d = np.diag(gt)
    if np.any(d == 0):
        raise ValueError("ISR undefined: zero matched entry")
    val = float(np.mean((gt.sum(axis=1) - d) / d))
    if normalized:
        val /= max(n - 1, 1)
    return val


def gini(u) -> float:
    """Gini sparsity index of ``|u|`` (1 very sparse, 0 dense)."""
    a = np.sort(np.abs(np.asarray(u, dtype=float).ravel()))
    l1 = a.sum()
    if l1 == 0:
        raise ValueError("Gini index undefined for the zero vector")
    v = a.size
    weights = v - np.arange(1, v + 1) + 0.5
    return float(1.0 - 2.0 * np.dot(a, weights) / (v * l1))


def abs_corr_matrix(s_true, s_est) -> np.ndarray:
    s_true = np.asarray(s_true, dtype=float)
    s_est = np.asarray(s_est, dtype=float)
    if s_true.shape[1] != s_est.shape[1]:
        raise ValueError("sample counts differ")

    def standardize(x, label):
        x = x - x.mean(axis=1, keepdims=True)
        nrm = np.linalg.norm(x, axis=1)
        bad = np.flatnonzero(nrm == 0)
        if bad.size:
            raise ValueError(f"constant row {int(bad[0])} in {label}")
        return x / nrm[:, None]

    return np.clip(np.abs(standardize(s_true, "s_true") @ standardize(s_est, "s_est").T), 0.0, 1.0)


def pair_correlation(s_true, s_est) -> Tuple[np.ndarray, np.ndarray]:
    """Match estimated to true sources by optimal |corr| assignment.

    Returns ``(perm, corr)`` where ``s_est[perm[n]]`` is paired with
    ``s_true[n]`` at absolute correlation ``corr[n]``.
    """
    c = abs_corr_matrix(s_true, s_est)
    perm = assign(c)
    return perm, c[np.arange(c.shape[0]), perm]
