"""Synthetic sources and mixing problems.

Univariate generalized Gaussian (GGD) sources and GGD mixtures, Gamma
sources, multivariate generalized Gaussian (MGGD) source component
vectors with AR(1) scatter, and a simplified fMRI-like spatial-map
generator with Rician noise at a prescribed contrast-to-noise ratio.

All samplers are pure functions of their arguments and a seed.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.special import gammaln

SeedLike = Union[int, np.random.Generator, None]

SCENARIOS = ("all_sparse_no_overlap", "mixed_sparsity_no_overlap", "mixed_sparsity_overlap")


def _rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def derive_seed(master: int, *keys) -> int:
    """Derive an independent child seed as ``master XOR hash(keys)``.

    The hash is the first 8 bytes of BLAKE2b over ``repr(keys)``, masked to
    63 bits, so the rule is stable across processes and Python versions.
    """
    digest = hashlib.blake2b(repr(tuple(keys)).encode(), digest_size=8).digest()
    return (int(master) ^ int.from_bytes(digest, "little")) & ((1 << 63) - 1)


# ---------------------------------------------------------------------------
# Univariate GGD
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GgdSpec:
    beta: float = 1.0
    sigma: float = 1.0
    mu: float = 0.0

    def __post_init__(self):
        if not (self.beta > 0 and np.isfinite(self.beta)):
            raise ValueError(f"GGD shape beta must be > 0, got {self.beta}")
        if not (self.sigma > 0 and np.isfinite(self.sigma)):
            raise ValueError(f"GGD scale sigma must be > 0, got {self.sigma}")
        if not np.isfinite(self.mu):
            raise ValueError("GGD location mu must be finite")

    @property
    def eta(self) -> float:
        """Normalizing constant (peak value of the pdf)."""
        b = self.beta
        return math.exp(math.log(b) - math.log(2.0) / (2 * b) - gammaln(1.0 / (2 * b))) / self.sigma

    def variance(self) -> float:
        b = self.beta
        return (
            2.0 ** (1.0 / b)
            * self.sigma**2
            * math.exp(gammaln(3.0 / (2 * b)) - gammaln(1.0 / (2 * b)))
        )


@dataclass(frozen=True)
class GgdMixtureSpec:
    kernels: Sequence[GgdSpec]
    weights: Sequence[float]

    def __post_init__(self):
        if len(self.kernels) == 0:
            raise ValueError("GGD mixture needs at least one kernel")
        if len(self.kernels) != len(self.weights):
            raise ValueError("kernels and weights differ in length")
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0):
            raise ValueError("mixture weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"mixture weights must sum to 1, got {w.sum()!r}")


def ggd_pdf(x, spec: GgdSpec):
    """GGD density ``eta * exp(-|x - mu|^(2 beta) / (2 sigma^(2 beta)))``.

    Accepts scalars or arrays; raises on non-finite input.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("ggd_pdf requires finite x")
    z = np.abs(x - spec.mu) / spec.sigma
    out = spec.eta * np.exp(-0.5 * z ** (2 * spec.beta))
    return float(out) if out.ndim == 0 else out


def sample_ggd(spec: GgdSpec, n: int, seed: SeedLike = None) -> np.ndarray:
    """Draw ``n`` i.i.d. GGD samples by the Gamma power transform.

    ``g ~ Gamma(1/(2 beta), scale=2)`` and ``x = mu +/- sigma * g^(1/(2 beta))``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = _rng(seed)
    g = rng.gamma(1.0 / (2 * spec.beta), 2.0, size=n)
    sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    return spec.mu + sign * spec.sigma * g ** (1.0 / (2 * spec.beta))


def sample_ggd_mixture(spec: GgdMixtureSpec, n: int, seed: SeedLike = None) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = _rng(seed)
    w = np.asarray(spec.weights, dtype=float)
    idx = rng.choice(len(spec.kernels), size=n, p=w / w.sum())
    out = np.empty(n)
    for k, kern in enumerate(spec.kernels):
        mask = idx == k
        cnt = int(mask.sum())
        if cnt:
            out[mask] = sample_ggd(kern, cnt, rng)
    return out


def random_ggd_mixture_spec(seed: SeedLike = None) -> GgdMixtureSpec:
    """Random GGD-mixture source law used by the flexible-ICA benchmark.

    K is 4 or 5 with means {-8, -4, 4, 8} or {-10, -5, 0, 5, 10}, weights
    drawn from (0, 1) and normalized, shapes uniform on (0.25, 4), unit
    kernel scale.
    """
    rng = _rng(seed)
    k = int(rng.choice([4, 5]))
    means = [-8.0, -4.0, 4.0, 8.0] if k == 4 else [-10.0, -5.0, 0.0, 5.0, 10.0]
    w = rng.uniform(0.0, 1.0, size=k)
    w = w / w.sum()
    w[-1] = 1.0 - w[:-1].sum()
    betas = rng.uniform(0.25, 4.0, size=k)
    kernels = [GgdSpec(beta=float(b), sigma=1.0, mu=m) for b, m in zip(betas, means)]
    return GgdMixtureSpec(kernels=kernels, weights=[float(v) for v in w])


def sample_gamma(shape: float, n: int, seed: SeedLike = None) -> np.ndarray:
    """Draws from ``p(x) = x^(shape-1) exp(-x) / Gamma(shape)``, x >= 0."""
    if shape <= 0:
        raise ValueError("Gamma shape must be > 0")
    return _rng(seed).gamma(shape, 1.0, size=n)


def random_mixing(n: int, seed: SeedLike = None, m: Optional[int] = None) -> np.ndarray:
    """Mixing matrix with i.i.d. standard normal entries (redrawn if singular)."""
    rng = _rng(seed)
    m = n if m is None else m
    for _ in range(100):
        a = rng.standard_normal((m, n))
        if np.linalg.matrix_rank(a) == n and np.linalg.cond(a) < 1e8:
            return a
    raise RuntimeError("could not draw a full-rank mixing matrix")


@dataclass
class MixingProblem:
    sources: np.ndarray
    mixing: np.ndarray
    observations: np.ndarray
    noise: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        s, a, x = self.sources, self.mixing, self.observations
        if a.shape[1] != s.shape[0] or x.shape != (a.shape[0], s.shape[1]):
            raise ValueError("inconsistent shapes for X = A S")


def make_ica_problem(sources: np.ndarray, seed: SeedLike = None) -> MixingProblem:
    a = random_mixing(sources.shape[0], seed)
    return MixingProblem(sources=sources, mixing=a, observations=a @ sources)


def ggd_mixture_problem(n_sources: int, n_samples: int, seed: SeedLike = None) -> MixingProblem:
    """N GGD-mixture sources mixed by a random Gaussian square matrix."""
    rng = _rng(seed)
    s = np.vstack(
        [sample_ggd_mixture(random_ggd_mixture_spec(rng), n_samples, rng) for _ in range(n_sources)]
    )
    return make_ica_problem(s, rng)


def ggd_problem(n_sources: int, n_samples: int, beta: float, seed: SeedLike = None) -> MixingProblem:
    """N zero-mean GGD sources with common shape ``beta``."""
    rng = _rng(seed)
    spec = GgdSpec(beta=beta)
    s = np.vstack([sample_ggd(spec, n_samples, rng) for _ in range(n_sources)])
    return make_ica_problem(s, rng)


def gamma_problem(n_samples: int, seed: SeedLike = None, shapes: Sequence[float] = range(1, 9)) -> MixingProblem:
    """Gamma sources with shapes 1..8 mixed by a random Gaussian matrix."""
    rng = _rng(seed)
    s = np.vstack([sample_gamma(float(b), n_samples, rng) for b in shapes])
    return make_ica_problem(s, rng)


# ---------------------------------------------------------------------------
# MGGD
# ---------------------------------------------------------------------------


def make_ar1_scatter(k: int, sigma: float) -> np.ndarray:
    """AR(1) (Kac-Murdock-Szego) scatter ``S[i, j] = sigma ** |i - j|``."""
    if not (0.0 <= sigma < 1.0):
        raise ValueError(f"AR(1) parameter must lie in [0, 1), got {sigma}")
    if k < 1:
        raise ValueError("dimension must be >= 1")
    i = np.arange(k)
    return float(sigma) ** np.abs(i[:, None] - i[None, :]).astype(float)


def sample_mggd(params, n: int, seed: SeedLike = None) -> np.ndarray:
    """K x n MGGD draws via the spherical stochastic representation.

    ``y = r * L u`` with ``L L^T = scatter``, ``u`` uniform on the unit sphere
    and ``r = (2 m^beta t)^(1/(2 beta))``, ``t ~ Gamma(K/(2 beta), 1)``.
    """
    rng = _rng(seed)
    sigma = np.asarray(params.scatter, dtype=float)
    beta, m = float(params.shape), float(params.scale)
    k = sigma.shape[0]
    u = rng.standard_normal((k, n))
    u /= np.linalg.norm(u, axis=0)
    t = rng.gamma(k / (2 * beta), 1.0, size=n)
    r = (2.0 * m**beta * t) ** (1.0 / (2 * beta))
    return np.linalg.cholesky(sigma) @ (u * r)


@dataclass
class ScvStack:
    """K datasets of N sources each, built from N independent SCVs."""

    sources: np.ndarray  # K x N x V
    mixing: np.ndarray  # K x N x N
    observations: np.ndarray  # K x N x V
    scv_betas: np.ndarray
    scv_sigmas: np.ndarray


def mggd_scv_stack(
    n_sources: int,
    n_datasets: int,
    n_samples: int,
    seed: SeedLike = None,
    beta_range=(0.25, 4.0),
    sigma_range=(0.4, 0.6),
) -> ScvStack:
    """IVA benchmark data: each SCV is MGGD with AR(1) scatter across datasets."""
    from .mggd.density import MggdParams

    rng = _rng(seed)
    s = np.empty((n_datasets, n_sources, n_samples))
    betas = rng.uniform(*beta_range, size=n_sources)
    sigmas = rng.uniform(*sigma_range, size=n_sources)
    for n in range(n_sources):
        p = MggdParams(make_ar1_scatter(n_datasets, float(sigmas[n])), float(betas[n]), 1.0)
        y = sample_mggd(p, n_samples, rng)
        s[:, n, :] = y / y.std(axis=1, keepdims=True)
    a = np.stack([random_mixing(n_sources, rng) for _ in range(n_datasets)])
    x = np.einsum("kij,kjv->kiv", a, s)
    return ScvStack(sources=s, mixing=a, observations=x, scv_betas=betas, scv_sigmas=sigmas)


# ---------------------------------------------------------------------------
# fMRI-like spatial maps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FmriScenario:
    scenario_id: str = "all_sparse_no_overlap"
    n_sources: int = 20
    image_side: int = 100
    n_timepoints: int = 260
    n_subjects: int = 10
    cnr: Optional[float] = None

    def __post_init__(self):
        if self.scenario_id not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario_id!r}; expected one of {SCENARIOS}")
        if self.n_sources < 1 or self.n_subjects < 1 or self.n_timepoints < 2:
            raise ValueError("counts must be positive")
        if self.image_side < 4:
            raise ValueError("image_side too small")
        if self.cnr is not None and self.cnr < 0:
            raise ValueError("cnr must be nonnegative")

    @property
    def n_voxels(self) -> int:
        return self.image_side**2


# Layout conventions: base spread is 1/16 of the grid spacing so that wide
# (3x) blobs never reach the support of a neighbour; overlap scenario pulls
# centres 40% closer together.
_SPREAD_FRACTION = 1.0 / 16.0
_WIDE_FACTOR = 3.0
_OVERLAP_SHRINK = 0.6
_SUPPORT_REL = 1e-3


def blob_layout(scenario: FmriScenario):
    """Centres (row, col) in pixels and spreads of each source blob."""
    n, side = scenario.n_sources, scenario.image_side
    cols = int(math.ceil(math.sqrt(n)))
    rows = int(math.ceil(n / cols))
    d = min(side / cols, side / rows)
    if d < 4:
        raise ValueError("grid too small to place the requested blobs")
    idx = np.arange(n)
    r, c = idx // cols, idx % cols
    centres = np.stack([(r - (rows - 1) / 2) * d, (c - (cols - 1) / 2) * d], axis=1)
    if scenario.scenario_id == "mixed_sparsity_overlap":
        centres = centres * _OVERLAP_SHRINK
        if _OVERLAP_SHRINK * d < 2:
            raise ValueError("grid too small to place overlapping blobs")
    centres = centres + (side - 1) / 2
    s0 = _SPREAD_FRACTION * d
    spreads = np.full(n, s0)
    if scenario.scenario_id != "all_sparse_no_overlap":
        spreads[idx % 3 == 2] = _WIDE_FACTOR * s0
    return centres, spreads


def rasterize_blob(side: int, centre, spread: float) -> np.ndarray:
    """Isotropic Gaussian blob with unit peak; values below 1e-3 are zeroed."""
    g = np.arange(side, dtype=float)
    rr, cc = np.meshgrid(g, g, indexing="ij")
    img = np.exp(-((rr - centre[0]) ** 2 + (cc - centre[1]) ** 2) / (2 * spread**2))
    img[img < _SUPPORT_REL * img.max()] = 0.0
    return img.ravel()


def smooth_timecourses(n_timepoints: int, n_sources: int, rng: np.random.Generator, width: float = 2.0):
    a = gaussian_filter1d(rng.standard_normal((n_timepoints, n_sources)), width, axis=0, mode="wrap")
    a -= a.mean(axis=0)
    return a / a.std(axis=0)


def measure_cnr(signal: np.ndarray, noise: np.ndarray) -> float:
    """Mean temporal std of the signal over its support / mean temporal std of the noise.

    Rows are time points, columns voxels.
    """
    sd_sig = signal.std(axis=0)
    support = sd_sig > _SUPPORT_REL * sd_sig.max()
    return float(sd_sig[support].mean() / noise.std(axis=0).mean())


def add_rician_noise(x: np.ndarray, cnr: float, rng: np.random.Generator, iters: int = 60):
    """Rician-corrupt ``x`` (time x voxel) to a target CNR; returns (noisy, noise).

    The magnitude image is ``sqrt((x + b + s n1)^2 + (s n2)^2)`` on a baseline
    ``b``; the baseline and the per-voxel Rician bias are removed afterwards.
    ``s`` is found by bisection on the measured CNR.
    """
    n1 = rng.standard_normal(x.shape)
    n2 = rng.standard_normal(x.shape)
    base = 4.0 * np.abs(x).max() + 1.0

    def corrupt(s):
        mag = np.sqrt((x + base + s * n1) ** 2 + (s * n2) ** 2) - base
        noise = mag - x
        noise -= noise.mean(axis=0)
        return x + noise, noise

    if cnr == 0:
        raise ValueError("cnr=0 means infinite noise")
    sd_sig = x.std(axis=0)
    target = sd_sig[sd_sig > _SUPPORT_REL * sd_sig.max()].mean() / cnr
    lo, hi = 0.0, 4.0 * target
    while measure_cnr(x, corrupt(hi)[1]) > cnr:
        hi *= 2.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if measure_cnr(x, corrupt(mid)[1]) > cnr:
            lo = mid
        else:
            hi = mid
    return corrupt(0.5 * (lo + hi))


def gen_fmri_like(spec: FmriScenario, seed: SeedLike = None, jitter: float = 0.03) -> List[MixingProblem]:
    """Per-subject spatial-ICA problems ``X (T x V) = A (T x N) S (N x V)``.

    Source maps share one layout across subjects; each subject gets a small
    random shift of every blob centre (``jitter`` times the grid spacing)
    and its own smooth random time courses.
    """
    rng = _rng(seed)
    centres, spreads = blob_layout(spec)
    side = spec.image_side
    spacing = side / math.ceil(math.sqrt(spec.n_sources))
    problems = []
    for subj in range(spec.n_subjects):
        shift = rng.normal(0.0, jitter * spacing, size=centres.shape)
        s = np.vstack([rasterize_blob(side, c, w) for c, w in zip(centres + shift, spreads)])
        a = smooth_timecourses(spec.n_timepoints, spec.n_sources, rng)
        x = a @ s
        noise = None
        if spec.cnr is not None:
            x, noise = add_rician_noise(x, spec.cnr, rng)
        problems.append(
            MixingProblem(
                sources=s,
                mixing=a,
                observations=x,
                noise=noise,
                info={"subject": subj, "scenario": spec.scenario_id, "cnr": spec.cnr},
            )
        )
    return problems
