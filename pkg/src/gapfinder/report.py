"""Gap reports shared by the composed solver, the baselines and the CLI."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

# replayed gaps must match the reported value this closely
REPLAY_TOL = 1e-5


def _clean(x: Any) -> Any:
    if isinstance(x, float):
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


@dataclass
class GapReport:
    """One adversarial input with its replayed gap.

    ``gap`` is always the simulator replay, signed so that a larger value means
    a worse heuristic;
    ``solver_objective`` is whatever the optimizer claimed, when there was one.
    """

    problem: str
    heuristic_name: str
    reference_name: str
    method: str
    gap: float
    reference_value: float
    heuristic_value: float
    input_key: str = "input"
    input: List[Any] = field(default_factory=list)
    status: str = "Feasible"
    validated: bool = True
    solver_objective: float = math.nan
    solver: Dict[str, Any] = field(default_factory=dict)
    time_series: List[Tuple[float, float]] = field(default_factory=list)
    config: Dict[str, Any] = field(default_factory=dict)
    extra: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "gap": self.gap,
            "opt": self.reference_value,
            "heuristic": self.heuristic_value,
            self.input_key: self.input,
            "solver": dict(self.solver, objective=self.solver_objective, status=self.status),
            "problem": self.problem,
            "heuristic_name": self.heuristic_name,
            "reference_name": self.reference_name,
            "method": self.method,
            "validated": self.validated,
            "time_series": [list(p) for p in self.time_series],
            "config": self.config,
        }
        if self.extra:
            out["extra"] = self.extra
        return _clean(out)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=False)
            fh.write("\n")


def best_so_far(history: Sequence[Tuple[float, float]], sense: str = "max") -> List[Tuple[float, float]]:
    """Running best of (seconds, value) points, one row per improvement."""
    out: List[Tuple[float, float]] = []
    best: Optional[float] = None
    for t, v in history:
        if v is None or (isinstance(v, float) and math.isnan(v)):
            continue
        if best is None or (v > best if sense == "max" else v < best):
            best = v
            out.append((float(t), float(v)))
    return out


def write_time_series(path, series: Sequence[Tuple[float, float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seconds", "best_gap"])
        for t, g in series:
            w.writerow([repr(float(t)), repr(float(g))])


def read_time_series(path) -> List[Tuple[float, float]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return [(float(a), float(b)) for a, b in rows[1:]]
