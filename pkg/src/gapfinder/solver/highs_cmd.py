"""Command-line MILP solver usable as a bridge target.

    python -m gapfinder.solver.highs_cmd model.mps model.sol [time_limit] [gap]

Reads the MPS file, solves it with HiGHS and writes ``name value`` lines.
"""

from __future__ import annotations

import sys

from .highs import highs_solve
from .mps import read_mps, write_solution
from .params import SolveParams


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if len(argv) < 2:
        print(__doc__, file=sys.stderr)
        return 2
    mps, sol = argv[0], argv[1]
    params = SolveParams(backend="highs")
    if len(argv) > 2:
        params.time_limit = float(argv[2])
    if len(argv) > 3:
        params.target_mip_gap = float(argv[3])
    model = read_mps(mps).freeze()
    solution, _ = highs_solve(model, params)
    write_solution(sol, model, solution, use_mps_names=False)
    return 0


if __name__ == "__main__":
    sys.exit(main())
