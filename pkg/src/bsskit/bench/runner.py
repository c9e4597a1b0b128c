"""Experiment execution: sweep cells x trials, per-trial isolation, resumable output."""

from __future__ import annotations

import csv
import math
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional

import numpy as np

from .. import __version__
from ..io import write_json
from ..sources import derive_seed
from .registry import ALGORITHMS, GENERATORS, METRICS, algorithm_params
from .spec import ExperimentResult, ExperimentSpec, cell_key


def resolve_cell(spec: ExperimentSpec, cell: dict):
    """Generator and algorithm parameters for one sweep cell."""
    gen = dict(spec.generator.get("params", {}))
    alg = dict(spec.algorithm.get("params", {}))
    accepted = algorithm_params(spec.algorithm["op"])
    for name, value in cell.items():
        if name.startswith("generator."):
            gen[name.split(".", 1)[1]] = value
        elif name.startswith("algorithm."):
            alg[name.split(".", 1)[1]] = value
        elif name in accepted:
            alg["lam" if name == "lambda" else name] = value
        else:
            gen[name] = value
    return gen, alg


def trial_seeds(master: int, trial: int):
    # the same data and initial state for a given trial in every cell (paired comparisons)
    return derive_seed(master, "data", trial), derive_seed(master, "algorithm", trial)


def run_trial(spec: ExperimentSpec, cell: dict, trial: int) -> dict:
    key = cell_key(cell)
    rec = {"cell": key, "trial": trial, "status": "ok", "error": "", "metrics": {}}
    t0 = time.perf_counter()
    try:
        gen, alg = resolve_cell(spec, cell)
        dseed, aseed = trial_seeds(spec.master_seed, trial)
        problem = GENERATORS[spec.generator["op"]](seed=dseed, **gen)
        out = ALGORITHMS[spec.algorithm["op"]](problem, seed=aseed, **alg)
        rec["metrics"] = {m: METRICS[m](out) for m in spec.metrics}
    except Exception as exc:  # recorded, not fatal to the sweep
        rec["status"] = "error"
        rec["error"] = f"{type(exc).__name__}: {exc}"
        rec["traceback"] = traceback.format_exc(limit=3)
    rec["wall_time"] = time.perf_counter() - t0
    return rec


def _trial_job(args):
    spec_dict, cell, trial = args
    return run_trial(ExperimentSpec(**spec_dict), cell, trial)


# ---------------------------------------------------------------------------
# cell tables
# ---------------------------------------------------------------------------


def _cell_path(out_dir: Path, key: str) -> Path:
    return out_dir / "cells" / f"{key}.csv"


def write_cell_csv(path: Path, records: List[dict], metrics: List[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "status", *metrics, "error"])
        for r in records:
            w.writerow([r["trial"], r["status"], *(repr(float(r["metrics"].get(m, math.nan))) for m in metrics), r["error"]])


def read_cell_csv(path: Path, key: str, metrics: List[str]) -> Optional[List[dict]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["trial", "status", *metrics, "error"]:
        return None
    recs = []
    for row in rows[1:]:
        vals = {m: float(v) for m, v in zip(metrics, row[2:-1])}
        status = row[1]
        recs.append(
            {
                "cell": key,
                "trial": int(row[0]),
                "status": status,
                "error": row[-1],
                "metrics": vals if status == "ok" else {},
            }
        )
    return recs


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------


def aggregate(records: List[dict], metrics: List[str]) -> dict:
    by_cell: dict = {}
    for r in records:
        by_cell.setdefault(r["cell"], []).append(r)
    out = {}
    for key, recs in by_cell.items():
        ok = [r for r in recs if r["status"] == "ok"]
        cell = {"n_ok": len(ok), "n_error": len(recs) - len(ok)}
        for m in metrics:
            v = np.array([r["metrics"][m] for r in ok], dtype=float)
            finite = v[np.isfinite(v)]
            cell[m] = {
                "mean": float(finite.mean()) if finite.size else math.nan,
                "std": float(finite.std(ddof=1)) if finite.size > 1 else 0.0,
                "median": float(np.median(finite)) if finite.size else math.nan,
                "n_nonfinite": int(v.size - finite.size),
            }
        out[key] = cell
    return out


def win_rate(a: List[dict], b: List[dict], metric: str, lower_is_better: bool = True) -> float:
    """Fraction of trials (paired by trial index) where ``a`` beats ``b`` strictly."""
    va = {r["trial"]: r["metrics"][metric] for r in a if r["status"] == "ok"}
    vb = {r["trial"]: r["metrics"][metric] for r in b if r["status"] == "ok"}
    common = sorted(set(va) & set(vb))
    if not common:
        return math.nan
    wins = [(va[t] < vb[t]) if lower_is_better else (va[t] > vb[t]) for t in common]
    return float(np.mean(wins))


def _compare(spec: ExperimentSpec, records: List[dict]) -> List[dict]:
    out = []
    for c in spec.compare:
        ka, kb = cell_key(c["a"]), cell_key(c["b"])
        lower = bool(c.get("lower_is_better", True))
        ra = [r for r in records if r["cell"] == ka]
        rb = [r for r in records if r["cell"] == kb]
        out.append({"a": ka, "b": kb, "metric": c["metric"], "lower_is_better": lower, "win_rate": win_rate(ra, rb, c["metric"], lower)})
    return out


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def run_experiment(spec: ExperimentSpec, threads: int = 1, resume: bool = True) -> ExperimentResult:
    """Run every (cell, trial) pair of ``spec``.

    Trial errors are recorded in the record's ``status``/``error`` fields.
    With an ``output_dir``, cells whose CSV table already exists are loaded
    instead of recomputed, then ``result.json`` and ``cells/*.csv`` are
    (re)written. Timings live in the separate ``timing`` section.
    """
    spec.validate()
    out_dir = Path(spec.output_dir) if spec.output_dir else None
    t0 = time.perf_counter()
    cells = spec.cells()
    done: dict = {}
    if out_dir is not None and resume:
        for cell in cells:
            key = cell_key(cell)
            p = _cell_path(out_dir, key)
            if p.exists():
                recs = read_cell_csv(p, key, spec.metrics)
                if recs is not None and len(recs) == spec.trials and all(r["status"] == "ok" for r in recs):
                    done[key] = recs
    jobs = [(cell, t) for cell in cells if cell_key(cell) not in done for t in range(spec.trials)]
    if threads > 1 and len(jobs) > 1:
        payload = spec.to_dict()
        with ProcessPoolExecutor(min(threads, len(jobs), os.cpu_count() or 1)) as pool:
            fresh = list(pool.map(_trial_job, [(payload, c, t) for c, t in jobs]))
    else:
        fresh = [run_trial(spec, c, t) for c, t in jobs]
    timing = {"per_trial": {}, "resumed_cells": sorted(done)}
    for r in fresh:
        timing["per_trial"][f"{r['cell']}#{r['trial']}"] = r.pop("wall_time")
    records: List[dict] = []
    for cell in cells:
        key = cell_key(cell)
        recs = done.get(key) or sorted((r for r in fresh if r["cell"] == key), key=lambda r: r["trial"])
        records.extend(recs)
        if out_dir is not None and key not in done:
            write_cell_csv(_cell_path(out_dir, key), recs, spec.metrics)
    errors = {f"{r['cell']}#{r['trial']}": r.pop("traceback") for r in records if "traceback" in r}
    timing["total"] = time.perf_counter() - t0
    timing["tracebacks"] = errors
    res = ExperimentResult(
        spec=spec.to_dict(),
        records=records,
        aggregates=aggregate(records, spec.metrics),
        win_rates=_compare(spec, records),
        timing=timing,
        version=__version__,
    )
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_json(out_dir / "result.json", res.to_dict())
    return res
