"""Affine-invariant geometry on symmetric positive-definite matrices."""

from __future__ import annotations

import numpy as np
from scipy.linalg import eigh


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def check_spd(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    a = symmetrize(a)
    if np.linalg.eigvalsh(a)[0] <= 0:
        raise ValueError(f"{name} is not positive definite")
    return a


def spd_power(a: np.ndarray, p: float) -> np.ndarray:
    """Matrix power of an SPD matrix via its eigendecomposition."""
    w, v = eigh(a)
    return (v * w**p) @ v.T


def spd_log(a: np.ndarray) -> np.ndarray:
    w, v = eigh(a)
    return (v * np.log(w)) @ v.T


def floor_eigenvalues(a: np.ndarray, rel: float = 1e-10) -> np.ndarray:
    """Symmetrize and clip eigenvalues at ``rel * trace / K``."""
    a = symmetrize(a)
    w, v = eigh(a)
    floor = rel * max(np.trace(a), 0.0) / a.shape[0]
    if floor <= 0:
        floor = rel
    return symmetrize((v * np.maximum(w, floor)) @ v.T)


def _same_dim(p, q):
    if p.shape != q.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {q.shape}")


def riem_distance(p: np.ndarray, q: np.ndarray) -> float:
    """``||log(P^-1/2 Q P^-1/2)||_F`` from the generalized eigenvalues of (Q, P)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    _same_dim(p, q)
    w = eigh(symmetrize(q), symmetrize(p), eigvals_only=True)
    return float(np.sqrt(np.sum(np.log(w) ** 2)))


def riem_average(p: np.ndarray, q: np.ndarray, t: float) -> np.ndarray:
    """Point ``P #_t Q = P^1/2 (P^-1/2 Q P^-1/2)^t P^1/2`` on the geodesic."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    _same_dim(p, q)
    if not (0.0 <= t <= 1.0):
        raise ValueError("t must lie in [0, 1]")
    if t == 0.0:
        return p.copy()
    if t == 1.0:
        return q.copy()
    w, v = eigh(symmetrize(p))
    ph = (v * np.sqrt(w)) @ v.T
    pih = (v / np.sqrt(w)) @ v.T
    return symmetrize(ph @ spd_power(symmetrize(pih @ q @ pih), t) @ ph)


def strong_convexity_check(r, p, q, t: float, slack: float = 1e-9) -> bool:
    """Check ``d^2(R, P#_tQ) <= t d^2(R,Q) + (1-t) d^2(R,P) - t(1-t) d^2(P,Q)``."""
    g = riem_average(p, q, t)
    lhs = riem_distance(r, g) ** 2
    rhs = (
        t * riem_distance(r, q) ** 2
        + (1 - t) * riem_distance(r, p) ** 2
        - t * (1 - t) * riem_distance(p, q) ** 2
    )
    return bool(lhs <= rhs + slack)


def random_spd(k: int, rng: np.random.Generator, spread: float = 1.0) -> np.ndarray:
    """Random SPD matrix ``Q diag(exp(spread * z)) Q^T`` with Haar-ish ``Q``."""
    q, _ = np.linalg.qr(rng.standard_normal((k, k)))
    return symmetrize((q * np.exp(spread * rng.standard_normal(k))) @ q.T)
