"""Generator, algorithm and metric registries used by experiment specs.

A generator maps ``(params, seed)`` to a problem object. An algorithm maps
``(problem, params, seed)`` to an outcome dict holding at least the keys the
requested metrics need (``global``, ``globals``, ``corr``, ...). Metrics read
the outcome and return one float.
"""

from __future__ import annotations

import inspect
import warnings
from dataclasses import fields

import numpy as np

from .. import metrics as M
from ..ica import IcaConfig, SparseConfig, init_fastica, run_ica_emk, run_sparse_ica, whiten, whitening_matrix
from ..iva import IvaConfig, run_iva_aggd
from ..mggd import MggdParams, estimate_joint, estimate_scatter
from ..mggd.estimators import trace_normalize
from ..sources import (
    FmriScenario,
    gamma_problem,
    gen_fmri_like,
    ggd_mixture_problem,
    ggd_problem,
    make_ar1_scatter,
    mggd_scv_stack,
    sample_mggd,
)


class MggdSample:
    def __init__(self, data, truth: MggdParams):
        self.data = data
        self.truth = truth


def _gen_mggd(dim: int = 3, shape: float = 1.0, sigma: float = 0.5, scale: float = 1.0, n_samples: int = 10000, seed=None):
    truth = MggdParams(make_ar1_scatter(dim, sigma), shape, scale)
    return MggdSample(sample_mggd(truth, n_samples, seed), truth)


def _gen_fmri(seed=None, jitter: float = 0.03, **params):
    return gen_fmri_like(FmriScenario(**params), seed=seed, jitter=jitter)


def _gen_identity(n_sources: int = 4, n_samples: int = 1000, beta: float = 0.5, seed=None):
    p = ggd_problem(n_sources, n_samples, beta, seed)
    p.mixing = np.eye(n_sources)
    p.observations = p.sources.copy()
    return p


GENERATORS = {
    "ggd_mixture": lambda seed=None, **p: ggd_mixture_problem(seed=seed, **p),
    "ggd": lambda seed=None, **p: ggd_problem(seed=seed, **p),
    "gamma": lambda seed=None, **p: gamma_problem(seed=seed, **p),
    "ggd_identity": _gen_identity,
    "mggd": _gen_mggd,
    "mggd_scv": lambda seed=None, **p: mggd_scv_stack(seed=seed, **p),
    "fmri": _gen_fmri,
}


# ---------------------------------------------------------------------------
# algorithms
# ---------------------------------------------------------------------------


def _split_config(cls, params: dict):
    names = {f.name for f in fields(cls)}
    return {k: v for k, v in params.items() if k in names}, {k: v for k, v in params.items() if k not in names}


def _ica_config(params: dict, seed) -> IcaConfig:
    cfg, rest = _split_config(IcaConfig, params)
    if rest:
        raise ValueError(f"unknown ICA parameters {sorted(rest)}")
    cfg.setdefault("seed", seed)
    return IcaConfig(**cfg)


def _sparse_config(params: dict, seed) -> SparseConfig:
    params = dict(params)
    if "lambda" in params:
        params["lam"] = params.pop("lambda")
    top = {k: params.pop(k) for k in ("lam", "eps", "stage2_max_iter") if k in params}
    return SparseConfig(base=_ica_config(params, seed), **top)


def _demix_outcome(problem, w_white, wh, z, state):
    w = w_white @ wh
    return {
        "global": w @ problem.mixing,
        "s_est": w_white @ z,
        "s_true": problem.sources,
        "iterations": state.iteration,
        "converged": state.converged,
        "diagnostics": state.diagnostics,
    }


def _prep(problem, n_components=None):
    z, dw = whiten(problem.observations, n_components)
    return z, whitening_matrix(dw)


def _per_subject(fn):
    """Apply a single-problem algorithm to every subject of a list and average."""

    def run(problem, seed=None, **params):
        if not isinstance(problem, list):
            return fn(problem, seed=seed, **params)
        outs = [fn(p, seed=None if seed is None else seed + i, **params) for i, p in enumerate(problem)]
        return {"subjects": outs}

    run.__wrapped__ = fn
    return run


@_per_subject
def alg_ica(problem, seed=None, **params):
    n = problem.sources.shape[0]
    z, wh = _prep(problem, n)
    st = run_ica_emk(z, _ica_config(params, seed))
    return _demix_outcome(problem, st.w, wh, z, st)


@_per_subject
def alg_fastica(problem, seed=None, max_iter: int = 200, tol: float = 1e-4):
    n = problem.sources.shape[0]
    z, wh = _prep(problem, n)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        w, info = init_fastica(z, seed=seed, max_iter=max_iter, tol=tol, return_info=True)

    class _S:
        iteration, converged, diagnostics = info["iterations"], info["converged"], {}

    return _demix_outcome(problem, w, wh, z, _S)


@_per_subject
def alg_sparse_ica(problem, seed=None, **params):
    n = problem.sources.shape[0]
    z, wh = _prep(problem, n)
    st = run_sparse_ica(z, _sparse_config(params, seed))
    out = _demix_outcome(problem, st.w, wh, z, st)
    d = st.diagnostics
    out["ratio"] = ratio_value(d["final_total"], d["final_independence"], d["final_sparsity"])
    return out


@_per_subject
def alg_repro(problem, seed=None, **params):
    """Split-half reproducibility: SparseICA on both interleaved halves."""
    from .protocols import split_half

    n = problem.sources.shape[0]
    halves = split_half(problem.observations)
    ys, diags = [], []
    for h in halves:
        z, _ = whiten(h, n)
        st = run_sparse_ica(z, _sparse_config(params, seed))
        ys.append(st.w @ z)
        diags.append(st.diagnostics)
    _, corr = M.pair_correlation(ys[0], ys[1])
    r = [ratio_value(d["final_total"], d["final_independence"], d["final_sparsity"]) for d in diags]
    return {"repro_corr": float(np.mean(corr)), "r1": r[0], "r2": r[1], "diagnostics": diags}


def alg_iva(problem, seed=None, **params):
    cfg, rest = _split_config(IvaConfig, params)
    if rest:
        raise ValueError(f"unknown IVA parameters {sorted(rest)}")
    cfg.setdefault("seed", seed)
    st = run_iva_aggd(problem.observations, IvaConfig(**cfg))
    gs = [st.w[k] @ problem.mixing[k] for k in range(st.w.shape[0])]
    return {"globals": gs, "iterations": st.iteration, "converged": st.converged, "diagnostics": st.diagnostics}


def alg_mggd_fit(problem, seed=None, method="rafp", beta=None, tol=1e-6, max_iter=500, eps=0.01):
    """Scatter fit at known shape (``beta='true'`` or a number) or joint fit when ``beta`` is None."""
    data, truth = problem.data, problem.truth
    if beta is None:
        rep = estimate_joint(data, method=method, tol=tol, max_iter=max_iter, eps=eps)
    else:
        b = truth.shape if beta == "true" else float(beta)
        rep = estimate_scatter(data, b, method=method, tol=tol, max_iter=max_iter, eps=eps)
    est = rep.params
    err = np.linalg.norm(trace_normalize(est.scatter) - trace_normalize(truth.scatter))
    return {
        "frob_error": float(err),
        "beta_hat": float(est.shape),
        "beta_rel_error": float(abs(est.shape - truth.shape) / truth.shape),
        "iterations": rep.iterations,
        "converged": rep.converged,
    }


ALGORITHMS = {
    "ica": alg_ica,
    "fastica": alg_fastica,
    "sparse_ica": alg_sparse_ica,
    "repro": alg_repro,
    "iva": alg_iva,
    "mggd_fit": alg_mggd_fit,
}


def algorithm_params(op: str) -> set:
    """Parameter names an algorithm accepts (used to route bare sweep names)."""
    fn = ALGORITHMS[op]
    fn = getattr(fn, "__wrapped__", fn)
    names = {p for p in inspect.signature(fn).parameters if p not in ("problem", "seed", "params")}
    if op in ("ica", "sparse_ica", "repro"):
        names |= {f.name for f in fields(IcaConfig)}
    if op in ("sparse_ica", "repro"):
        names |= {"lam", "lambda", "eps", "stage2_max_iter"}
    if op == "iva":
        names |= {f.name for f in fields(IvaConfig)}
    return names


def ratio_value(total: float, independence: float, sparsity: float) -> float:
    """``|sparsity - total| / |independence - total|``; a zero denominator gives ``inf``."""
    den = abs(independence - total)
    if den == 0.0:
        return float("inf")
    return float(abs(sparsity - total) / den)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def _subjects(fn):
    def metric(out):
        if "subjects" in out:
            return float(np.mean([fn(o) for o in out["subjects"]]))
        return float(fn(out))

    return metric


def _corr(out):
    _, c = M.pair_correlation(out["s_true"], out["s_est"])
    return float(np.mean(c))


METRICS = {
    "isr": _subjects(lambda o: M.isr(o["global"])),
    "isr_norm": _subjects(lambda o: M.isr(o["global"], normalized=True)),
    "isi": _subjects(lambda o: M.isi(o["global"])),
    "isi_avg": _subjects(lambda o: M.isi_avg(o["globals"])),
    "isi_jnt": _subjects(lambda o: M.isi_jnt(o["globals"])),
    "corr": _subjects(_corr),
    "gini": _subjects(lambda o: np.mean([M.gini(r) for r in o["s_est"]])),
    "repro_corr": _subjects(lambda o: o["repro_corr"]),
    "r1": _subjects(lambda o: o["r1"]),
    "r2": _subjects(lambda o: o["r2"]),
    "ratio": _subjects(lambda o: o["ratio"]),
    "iterations": _subjects(lambda o: o["iterations"]),
    "converged": _subjects(lambda o: float(o["converged"])),
    "frob_error": _subjects(lambda o: o["frob_error"]),
    "beta_hat": _subjects(lambda o: o["beta_hat"]),
    "beta_rel_error": _subjects(lambda o: o["beta_rel_error"]),
}
