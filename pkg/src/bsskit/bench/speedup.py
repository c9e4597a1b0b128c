"""Wall-time speedup of parallel row updates against Amdahl's bound."""

from __future__ import annotations

import math
import os
from typing import List, Sequence

import numpy as np

from ..ica import IcaConfig, run_decoupled, whiten
from ..sources import derive_seed, ggd_mixture_problem

SIZES = (2, 4, 8, 16, 32)


def amdahl(f: float, s: float) -> float:
    """``1 / ((1 - f) + f / s)`` for parallel fraction ``f`` on ``s`` workers."""
    return 1.0 / ((1.0 - f) + f / s)


def effective_workers(n_rows: int, cores: int) -> float:
    # rows are dealt out whole: with N rows on L cores the slowest worker runs ceil(N/L) of them
    return n_rows / math.ceil(n_rows / cores)


def measure_speedup(
    core_counts: Sequence[int],
    sizes: Sequence[int] = SIZES,
    n_samples: int = 1000,
    n_iter: int = 5,
    seed: int = 0,
    density: str = "emk",
    executor: str = "process",
) -> List[dict]:
    """Time ``n_iter`` Jacobi sweeps per source count and core count.

    The one-worker run is the sequential baseline; its fraction of time
    spent inside row tasks is the parallel fraction ``f`` of the Amdahl
    bound. Every run uses the same data and initial state, so the final
    demixing matrices must agree exactly across core counts.
    """
    rows = []
    for n in sizes:
        p = ggd_mixture_problem(n, n_samples, derive_seed(seed, "speedup", n))
        z, _ = whiten(p.observations)
        base = None
        for c in [1] + [c for c in core_counts if c != 1]:
            cfg = IcaConfig(
                max_iter=n_iter,
                tol=1e-300,
                density=density,
                parallel_rows=True,
                n_workers=c,
                executor=executor,
                seed=derive_seed(seed, "init", n),
            )
            st = run_decoupled(z, cfg)
            t = st.diagnostics["loop_time"]
            if base is None:
                base = st
                f = st.diagnostics["row_time"] / t if t > 0 else 0.0
            speed = base.diagnostics["loop_time"] / t
            rows.append(
                {
                    "n_sources": n,
                    "cores": c,
                    "iterations": st.iteration,
                    "wall_time": t,
                    "speedup": speed,
                    "parallel_fraction": f,
                    "amdahl": amdahl(f, c),
                    "amdahl_rows": amdahl(f, effective_workers(n, c)),
                    "identical": bool(np.array_equal(st.w, base.w)),
                }
            )
    return rows


def available_cores() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1
