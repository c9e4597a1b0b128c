"""Experiment harness: specs, runner, reproducibility protocol and speedup timing."""

from .protocols import accuracy_surface, ratio_diagnostic, repro_protocol, split_half, surface, write_surface
from .registry import ALGORITHMS, GENERATORS, METRICS, ratio_value
from .runner import aggregate, run_experiment, run_trial, win_rate
from .spec import EPS_GRID, LAMBDA_GRID, ExperimentResult, ExperimentSpec, cell_key
from .speedup import amdahl, available_cores, effective_workers, measure_speedup

__all__ = [
    "ExperimentSpec",
    "ExperimentResult",
    "LAMBDA_GRID",
    "EPS_GRID",
    "cell_key",
    "GENERATORS",
    "ALGORITHMS",
    "METRICS",
    "ratio_value",
    "run_experiment",
    "run_trial",
    "aggregate",
    "win_rate",
    "split_half",
    "ratio_diagnostic",
    "accuracy_surface",
    "repro_protocol",
    "surface",
    "write_surface",
    "measure_speedup",
    "amdahl",
    "effective_workers",
    "available_cores",
]
