"""Whitening, decoupling vectors and sphere projection."""

from __future__ import annotations

import numpy as np


def _fix_signs(e: np.ndarray) -> np.ndarray:
    # make the largest-modulus entry of each eigenvector positive; this makes
    # whitening equivariant to row permutations of the input
    idx = np.argmax(np.abs(e), axis=0)
    s = np.sign(e[idx, np.arange(e.shape[1])])
    s[s == 0] = 1.0
    return e * s


def whiten(x, n_components: int | None = None, rel_tol: float = 1e-10):
    """PCA whitening of the rows of ``x``.

    Parameters
    ----------
    x : (M, V) array
        Observations, one row per channel.
    n_components : int, optional
        Keep only the leading ``n_components`` principal directions
        (PCA reduction). Defaults to ``M``.

    Returns
    -------
    z : (n, V) array
        Whitened data with identity sample covariance.
    dewhiten : (M, n) array
        ``dewhiten @ z`` restores the demeaned input (exactly when ``n = M``).
    """
    x = np.asarray(x, dtype=float)
    m, v = x.shape
    if v <= m:
        raise ValueError(f"need more samples than channels (V={v}, M={m})")
    xc = x - x.mean(axis=1, keepdims=True)
    c = xc @ xc.T / v
    d, e = np.linalg.eigh(c)
    d, e = d[::-1], _fix_signs(e[:, ::-1])
    n = m if n_components is None else int(n_components)
    if not 1 <= n <= m:
        raise ValueError("n_components out of range")
    bad = np.flatnonzero(d[:n] <= rel_tol * max(d[0], 0.0))
    if d[0] <= 0 or bad.size:
        k = int(bad[0]) if bad.size else 0
        raise ValueError(f"rank-deficient covariance: principal direction {k} has variance {d[k]:.3e}")
    d, e = d[:n], e[:, :n]
    wh = (e / np.sqrt(d)).T
    return wh @ xc, e * np.sqrt(d)


def whitening_matrix(dewhiten: np.ndarray) -> np.ndarray:
    """Left inverse of ``dewhiten``: maps demeaned observations to ``z``."""
    return np.linalg.pinv(dewhiten)


def decouple_h(w, n: int) -> np.ndarray:
    """Unit vector orthogonal to every row of ``W`` except row ``n``.

    The sign is chosen so that ``h @ W[n] > 0``.
    """
    w = np.asarray(w, dtype=float)
    rest = np.delete(w, n, axis=0)
    _, s, vt = np.linalg.svd(rest, full_matrices=True)
    if rest.shape[0] and s[-1] <= 1e-12 * max(s[0], 1e-300):
        raise ValueError(f"rows of W other than {n} are rank-deficient")
    h = vt[-1]
    proj = h @ w[n]
    if proj < 0:
        h = -h
    return h


def sphere_project(w, g) -> np.ndarray:
    """Tangent-space projection ``(I - w w^T) g`` at the unit vector ``w``."""
    w = np.asarray(w, dtype=float)
    g = np.asarray(g, dtype=float)
    return g - w * (w @ g)


def symmetric_decorrelation(w: np.ndarray) -> np.ndarray:
    """``(W W^T)^(-1/2) W``: the closest orthogonal matrix to ``W``."""
    d, e = np.linalg.eigh(w @ w.T)
    return (e / np.sqrt(d)) @ e.T @ w


def smoothed_l1(y, eps: float) -> float:
    """``sum_v sqrt(y_v^2 + eps)``."""
    if eps <= 0:
        raise ValueError("eps must be > 0")
    y = np.asarray(y, dtype=float)
    return float(np.sum(np.sqrt(y * y + eps)))


def smoothed_l1_grad(y, eps: float) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return y / np.sqrt(y * y + eps)
