"""Split-half reproducibility, accuracy surfaces and the sparsity/independence ratio."""

from __future__ import annotations

import copy
import csv
import math
from pathlib import Path
from typing import Sequence, Tuple

import numpy as np

from .registry import ratio_value
from .runner import run_experiment
from .spec import EPS_GRID, LAMBDA_GRID, ExperimentResult, ExperimentSpec, cell_key


def split_half(x) -> Tuple[np.ndarray, np.ndarray]:
    """Interleaved halves: rows 0, 2, 4, ... and rows 1, 3, 5, ..."""
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need a matrix with at least two rows")
    return x[0::2], x[1::2]


def ratio_diagnostic(run) -> Tuple[float, float]:
    """``(r1, r2)`` from the final cost decomposition of the two half runs.

    ``run`` is a pair of mappings (or a mapping with ``half1``/``half2``)
    holding ``final_total``, ``final_independence`` and ``final_sparsity``.
    """
    if isinstance(run, dict):
        run = (run["half1"], run["half2"])
    a, b = run
    return tuple(ratio_value(d["final_total"], d["final_independence"], d["final_sparsity"]) for d in (a, b))


def _with_grid(spec: ExperimentSpec, algorithm_op: str, metrics, lambdas, epsilons) -> ExperimentSpec:
    s = copy.deepcopy(spec)
    s.algorithm = {"op": algorithm_op, "params": dict(spec.algorithm.get("params", {}))}
    s.metrics = list(metrics)
    sweep = {k: v for k, v in s.sweep.items() if k not in ("lam", "lambda", "eps")}
    sweep["lam"] = list(lambdas if lambdas is not None else spec.sweep.get("lam", spec.sweep.get("lambda", LAMBDA_GRID)))
    sweep["eps"] = list(epsilons if epsilons is not None else spec.sweep.get("eps", EPS_GRID))
    s.sweep = sweep
    return s.validate()


def surface(result: ExperimentResult, metric: str, row_axis: str = "lam", col_axis: str = "eps", fixed=None) -> dict:
    """2-D grid of cell means: ``{"rows": [...], "cols": [...], "values": [[...]]}``."""
    sweep = result.spec["sweep"]
    fixed = fixed or {}
    rows, cols = sweep[row_axis], sweep[col_axis]
    vals = np.full((len(rows), len(cols)), math.nan)
    for i, r in enumerate(rows):
        for j, c in enumerate(cols):
            cell = {}
            for axis in sweep:
                cell[axis] = r if axis == row_axis else c if axis == col_axis else fixed[axis]
            agg = result.aggregates.get(cell_key(cell))
            if agg is not None:
                vals[i, j] = agg[metric]["mean"]
    return {"metric": metric, "row_axis": row_axis, "col_axis": col_axis, "rows": list(rows), "cols": list(cols), "values": vals.tolist()}


def write_surface(path, surf: dict) -> None:
    """One ``row col value`` line per cell, blank line between rows (gnuplot ``splot`` layout)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([surf["row_axis"], surf["col_axis"], surf["metric"]])
        for r, line in zip(surf["rows"], surf["values"]):
            for c, v in zip(surf["cols"], line):
                w.writerow([repr(float(r)), repr(float(c)), repr(float(v))])
            fh.write("\n")


def _emit(result: ExperimentResult, spec: ExperimentSpec, metrics) -> dict:
    fixed_axes = [a for a in spec.sweep if a not in ("lam", "eps")]
    if fixed_axes:
        # one surface per combination of the remaining axes
        import itertools

        combos = [dict(zip(fixed_axes, c)) for c in itertools.product(*(spec.sweep[a] for a in fixed_axes))]
    else:
        combos = [{}]
    out = {}
    for m in metrics:
        for fx in combos:
            surf = surface(result, m, fixed=fx)
            name = m if not fx else f"{m}__{cell_key(fx)}"
            out[name] = surf
            if spec.output_dir:
                write_surface(Path(spec.output_dir) / "surfaces" / f"{name}.csv", surf)
    return out


def accuracy_surface(spec: ExperimentSpec, lambdas: Sequence[float] = None, epsilons: Sequence[float] = None, threads: int = 1):
    """Mean aligned |corr| between true and SparseICA-estimated sources per (lam, eps).

    Returns ``(surfaces, result)``.
    """
    s = _with_grid(spec, "sparse_ica", ["corr"], lambdas, epsilons)
    res = run_experiment(s, threads=threads)
    return _emit(res, s, ["corr"]), res


def repro_protocol(spec: ExperimentSpec, lambdas: Sequence[float] = None, epsilons: Sequence[float] = None, threads: int = 1):
    """Cross-half reproducibility surface plus the per-half ratio surfaces.

    For each subject: split the time points into interleaved halves, reduce
    each half to N components, run SparseICA on each, pair the components
    across halves and average their |corr|. Returns ``(surfaces, result)``.
    """
    s = _with_grid(spec, "repro", ["repro_corr", "r1", "r2"], lambdas, epsilons)
    res = run_experiment(s, threads=threads)
    return _emit(res, s, ["repro_corr", "r1", "r2"]), res
