"""Activity-based bound tightening over the rows of a matrix form."""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from .standard import MatrixForm

INFEAS_TOL = 1e-6
# continuous bounds are relaxed by this much so roundoff never cuts a feasible point
SAFETY = 1e-7


class Propagator:
    """Rows rewritten as ``g @ x <= h``; equalities contribute both directions."""

    def __init__(self, form: MatrixForm):
        A = form.A.tocoo()
        keep = A.data != 0          # stored zeros carry no bound information
        a_row, a_col, a_val = A.row[keep], A.col[keep], A.data[keep]
        sense = form.senses[a_row]
        le_r, le_c, le_v = [], [], []
        h = []
        nrow = 0
        for s, sign in (("<=", 1.0), (">=", -1.0), ("==", 1.0), ("==", -1.0)):
            rows = np.flatnonzero(form.senses == s)
            if not len(rows):
                continue
            newidx = {r: nrow + k for k, r in enumerate(rows)}
            mask = sense == s
            le_r.append(np.array([newidx[r] for r in a_row[mask]], dtype=int))
            le_c.append(a_col[mask])
            le_v.append(sign * a_val[mask])
            h.append(sign * form.b[rows])
            nrow += len(rows)
        self.m = nrow
        self.r = np.concatenate(le_r) if le_r else np.zeros(0, dtype=int)
        self.c = np.concatenate(le_c) if le_c else np.zeros(0, dtype=int)
        self.v = np.concatenate(le_v) if le_v else np.zeros(0)
        self.h = np.concatenate(h) if h else np.zeros(0)
        self.integral = form.integral
        self.n = len(form.lb)
        self.pos = self.v > 0

    def run(self, lb: np.ndarray, ub: np.ndarray, passes: int = 25) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        """Tightened copies of (lb, ub), or None when the box is proven infeasible."""
        lb, ub = lb.copy(), ub.copy()
        if not len(self.v):
            return (lb, ub) if np.all(lb <= ub + INFEAS_TOL) else None
        r, c, v, pos = self.r, self.c, self.v, self.pos
        for _ in range(passes):
            bound = np.where(pos, lb[c], ub[c])
            inf = ~np.isfinite(bound)
            contrib = np.where(inf, 0.0, v * np.where(inf, 0.0, bound))
            minact = np.bincount(r, weights=contrib, minlength=self.m)
            ninf = np.bincount(r, weights=inf.astype(float), minlength=self.m)
            if np.any((ninf == 0) & (minact > self.h + INFEAS_TOL * (1 + np.abs(self.h)))):
                return None
            # activity of the rest of the row, finite only if at most this entry is unbounded
            rest = np.where(inf, np.where(ninf[r] == 1, minact[r], np.inf),
                            np.where(ninf[r] == 0, minact[r] - contrib, np.inf))
            ok = np.isfinite(rest)
            if not ok.any():
                break
            cand = (self.h[r[ok]] - rest[ok]) / v[ok]
            cols = c[ok]
            up = pos[ok]
            new_ub = ub.copy()
            new_lb = lb.copy()
            np.minimum.at(new_ub, cols[up], cand[up] + SAFETY * (1 + np.abs(cand[up])))
            np.maximum.at(new_lb, cols[~up], cand[~up] - SAFETY * (1 + np.abs(cand[~up])))
            integ = self.integral
            new_ub[integ] = np.floor(new_ub[integ] + 1e-6)
            new_lb[integ] = np.ceil(new_lb[integ] - 1e-6)
            if np.any(new_lb > new_ub + INFEAS_TOL * (1 + np.abs(new_ub))):
                return None
            # clamp tiny crossings from roundoff on continuous variables
            cross = new_lb > new_ub
            new_lb[cross] = new_ub[cross]
            scale = 1 + np.maximum(np.abs(lb), np.abs(ub))
            scale[~np.isfinite(scale)] = 1.0
            gain = np.maximum(_shrink(ub, new_ub), _shrink(-lb, -new_lb))
            changed = gain > 1e-6 * scale
            if not changed.any():
                break
            lb = np.where(changed, new_lb, lb)
            ub = np.where(changed, new_ub, ub)
        return lb, ub


def _shrink(old: np.ndarray, new: np.ndarray) -> np.ndarray:
    """How far an upper bound moved down; infinite when it went from unbounded to finite."""
    out = np.zeros_like(old)
    fin = np.isfinite(old) & np.isfinite(new)
    out[fin] = old[fin] - new[fin]
    out[~np.isfinite(old) & np.isfinite(new)] = np.inf
    return out
