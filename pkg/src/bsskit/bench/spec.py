"""Declarative experiment specs and results."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

# Default lambda / eps axes for sparsity sweeps.
LAMBDA_GRID = (1e-8, 1e-6, 1e-4, 1e-3, 1e-2, 1.0, 1e2, 1e3, 1e4)
EPS_GRID = (1e-3, 1e-2, 1e-1, 0.5, 1.46, 5.0, 10.0)

DESK_SCALE = {
    "trials_default": 30,
    "image_side_default": 50,
    "note": "desk-scale trial counts and image sizes; the full protocol uses 100-300 trials and image_side=100",
}


@dataclass
class ExperimentSpec:
    """What to generate, what to run on it, what to measure and over which grid.

    ``generator`` and ``algorithm`` are ``{"op": name, "params": {...}}``
    references into :mod:`bsskit.bench.registry`. ``sweep`` maps a parameter
    name to a finite list of values; names of the form ``generator.x`` or
    ``algorithm.x`` pick the target explicitly, bare names go to the
    algorithm if it declares them and to the generator otherwise.
    """

    name: str
    generator: dict
    algorithm: dict
    metrics: List[str] = field(default_factory=lambda: ["isr_norm"])
    trials: int = 30
    master_seed: int = 0
    output_dir: Optional[str] = None
    sweep: Dict[str, list] = field(default_factory=dict)
    compare: List[dict] = field(default_factory=list)

    def validate(self) -> "ExperimentSpec":
        from .registry import ALGORITHMS, GENERATORS, METRICS

        if not isinstance(self.trials, int) or self.trials < 1:
            raise ValueError("trials must be an integer >= 1")
        for kind, ref, reg in (("generator", self.generator, GENERATORS), ("algorithm", self.algorithm, ALGORITHMS)):
            if not isinstance(ref, dict) or "op" not in ref:
                raise ValueError(f"{kind} must be a mapping with an 'op' key")
            if ref["op"] not in reg:
                raise ValueError(f"unknown {kind} {ref['op']!r}; expected one of {sorted(reg)}")
        for m in self.metrics:
            if m not in METRICS:
                raise ValueError(f"unknown metric {m!r}; expected one of {sorted(METRICS)}")
        for axis, values in self.sweep.items():
            if not isinstance(values, (list, tuple)) or not values:
                raise ValueError(f"sweep axis {axis!r} must be a non-empty list")
            for v in values:
                if isinstance(v, float) and not math.isfinite(v):
                    raise ValueError(f"sweep axis {axis!r} has a non-finite value")
        for c in self.compare:
            if not {"a", "b", "metric"} <= set(c):
                raise ValueError("compare entries need 'a', 'b' and 'metric'")
        return self

    def cells(self) -> List[dict]:
        """Every sweep cell as an ordered ``{axis: value}`` mapping."""
        axes = list(self.sweep)
        return [dict(zip(axes, combo)) for combo in itertools.product(*(self.sweep[a] for a in axes))]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown spec fields: {sorted(extra)}")
        return cls(**d).validate()

    @classmethod
    def from_json(cls, path) -> "ExperimentSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def cell_key(cell: dict) -> str:
    if not cell:
        return "base"
    return "__".join(f"{k}={_fmt(v)}" for k, v in cell.items())


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v).replace("/", "_")


@dataclass
class ExperimentResult:
    spec: dict
    records: List[dict]
    aggregates: Dict[str, dict]
    win_rates: List[dict]
    timing: dict
    version: str
    desk_scale: dict = field(default_factory=lambda: dict(DESK_SCALE))

    @property
    def n_errors(self) -> int:
        return sum(r["status"] != "ok" for r in self.records)

    def payload(self) -> dict:
        """Everything except the timing section; stable across runs."""
        return {
            "spec": self.spec,
            "records": self.records,
            "aggregates": self.aggregates,
            "win_rates": self.win_rates,
            "version": self.version,
            "desk_scale": self.desk_scale,
        }

    def to_dict(self) -> dict:
        d = self.payload()
        d["timing"] = self.timing
        return d

    def mean(self, metric: str, cell: Optional[dict] = None) -> float:
        return self.aggregates[cell_key(cell or {})][metric]["mean"]

    def values(self, metric: str, cell: Optional[dict] = None) -> list:
        key = cell_key(cell or {})
        return [r["metrics"].get(metric) for r in self.records if r["cell"] == key and r["status"] == "ok"]
