from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple


@dataclass
class SolveParams:
    """Budget and stopping knobs shared by every backend.

    ``early_stop_window``/``early_stop_progress`` implement the progress rule:
    once an incumbent exists, stop when it improved by less than
    ``early_stop_progress * |incumbent|`` over the last ``early_stop_window``
    seconds.  ``None`` disables the rule.
    """

    time_limit: float = 1200.0
    target_mip_gap: float = 1e-4
    early_stop_window: Optional[float] = None
    early_stop_progress: float = 0.005
    seed: int = 0
    node_limit: Optional[int] = None
    backend: str = "builtin"
    solver_command: Optional[str] = None
    lp_engine: str = "simplex"

    def __post_init__(self):
        if not self.time_limit > 0:
            raise ValueError("time_limit must be positive")
        if not self.target_mip_gap > 0:
            raise ValueError("target_mip_gap must be positive")
        if self.early_stop_window is not None and not self.early_stop_window > 0:
            raise ValueError("early_stop_window must be positive")
        if not 0 < self.early_stop_progress < 1:
            raise ValueError("early_stop_progress must lie in (0, 1)")
        if self.node_limit is not None and self.node_limit <= 0:
            raise ValueError("node_limit must be positive")
        if self.backend not in ("builtin", "highs", "bridge"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.lp_engine not in ("simplex", "highs"):
            raise ValueError(f"unknown lp_engine {self.lp_engine!r}")

    def to_dict(self) -> dict:
        out = asdict(self)
        if math.isinf(out["time_limit"]):
            out["time_limit"] = "inf"
        return out


@dataclass
class SolverReport:
    nodes_explored: int = 0
    lp_iterations: int = 0
    wall_time: float = 0.0
    incumbent_history: List[Tuple[float, float]] = field(default_factory=list)
    backend: str = "builtin"
    stop_reason: str = ""

    def to_dict(self) -> dict:
        return asdict(self)
