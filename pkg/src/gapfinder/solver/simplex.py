"""Dense bounded-variable primal simplex (two phase).

Problem form::

    minimize    c @ x
    subject to  A[i] @ x  (<=, ==, >=)  b[i]
                lb <= x <= ub              (infinite bounds allowed)

Each row gets a slack ``s`` with ``A x + s = b``; the slack bounds encode the
row sense.  Rows whose residual at the starting point falls outside the slack
bounds get an artificial column, and phase one minimizes the artificial sum.
Pricing is Dantzig's rule; after a run of degenerate pivots the method falls
back to Bland's rule until the objective moves again.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-9
OPT_TOL = 1e-9
PRIMAL_TOL = 1e-7
DEGENERATE_RUN = 40
REFRESH_EVERY = 60

# nonbasic states
AT_LOWER, AT_UPPER, FREE_ZERO, BASIC = 0, 1, 2, 3


class SimplexError(RuntimeError):
    pass


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray
    objective: float
    iterations: int


class _Tableau:
    def __init__(self, A, b, senses, lb, ub):
        m, n = A.shape
        self.m, self.n = m, n
        slack_lb = np.where(senses == "<=", 0.0, np.where(senses == ">=", -np.inf, 0.0))
        slack_ub = np.where(senses == "<=", np.inf, np.where(senses == ">=", 0.0, 0.0))

        xN = np.where(np.isfinite(lb), lb, np.where(np.isfinite(ub), ub, 0.0))
        resid = b - A @ xN
        need_art = (resid < slack_lb - PRIMAL_TOL) | (resid > slack_ub + PRIMAL_TOL)
        art_rows = np.flatnonzero(need_art)
        k = len(art_rows)
        self.num_art = k

        total = n + m + k
        self.lb = np.concatenate([lb, slack_lb, np.zeros(k)])
        self.ub = np.concatenate([ub, slack_ub, np.full(k, np.inf)])
        full = np.zeros((m, total))
        full[:, :n] = A
        full[:, n:n + m] = np.eye(m)
        self.x = np.zeros(total)
        self.x[:n] = xN
        self.state = np.empty(total, dtype=np.int8)
        for j in range(n):
            if np.isfinite(lb[j]):
                self.state[j] = AT_LOWER
            elif np.isfinite(ub[j]):
                self.state[j] = AT_UPPER
            else:
                self.state[j] = FREE_ZERO
        self.basis = np.empty(m, dtype=np.int64)
        signs = np.ones(m)
        for i in range(m):
            s = n + i
            if need_art[i]:
                # slack parked at the bound closest to the residual
                sval = min(max(resid[i], slack_lb[i]), slack_ub[i])
                self.x[s] = sval
                self.state[s] = AT_LOWER if sval == slack_lb[i] else AT_UPPER
                a = n + m + int(np.searchsorted(art_rows, i))
                sign = 1.0 if resid[i] - sval > 0 else -1.0
                full[i, a] = sign
                signs[i] = sign
                self.basis[i] = a
                self.x[a] = abs(resid[i] - sval)
            else:
                self.basis[i] = s
                self.x[s] = resid[i]
        self.state[self.basis] = BASIC
        # B is diagonal with entries +-1, so B^-1 = B
        self.T = full * signs[:, None]
        self.full = full
        self.b = b
        self.iterations = 0

    def refresh(self):
        """Recompute basic values from B^-1 (the slack block of T)."""
        m, n = self.m, self.n
        binv = self.T[:, n:n + m]
        nonbasic = self.state != BASIC
        rhs = self.b - self.full[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = binv @ rhs

    def run(self, cost, max_iter):
        m = self.m
        T = self.T
        bland = False
        degenerate = 0
        last_obj = cost @ self.x
        while True:
            if self.iterations >= max_iter:
                raise SimplexError("simplex iteration limit reached")
            if self.iterations % REFRESH_EVERY == 0 and self.iterations:
                self.refresh()
            d = cost - cost[self.basis] @ T
            st = self.state
            inc = ((st == AT_LOWER) | (st == FREE_ZERO)) & (d < -OPT_TOL) & (self.ub > self.lb)
            dec = ((st == AT_UPPER) | (st == FREE_ZERO)) & (d > OPT_TOL) & (self.ub > self.lb)
            cand = inc | dec
            if not cand.any():
                return "optimal"
            idx = np.flatnonzero(cand)
            if bland:
                j = int(idx[0])
            else:
                j = int(idx[np.argmax(np.abs(d[idx]))])
            direction = 1.0 if inc[j] else -1.0
            col = T[:, j] * direction
            xb = self.x[self.basis]
            lbb = self.lb[self.basis]
            ubb = self.ub[self.basis]
            ratios = np.full(m, np.inf)
            pos = col > PIVOT_TOL
            neg = col < -PIVOT_TOL
            with np.errstate(invalid="ignore", divide="ignore"):
                ratios[pos] = (xb[pos] - lbb[pos]) / col[pos]
                ratios[neg] = (ubb[neg] - xb[neg]) / -col[neg]
            ratios = np.maximum(ratios, 0.0)
            flip = self.ub[j] - self.lb[j]
            tmin = ratios.min() if m else np.inf
            if not np.isfinite(tmin) and not np.isfinite(flip):
                return "unbounded"
            self.iterations += 1
            if flip <= tmin:
                t = flip
                self.x[self.basis] = xb - t * col
                self.x[j] += direction * t
                self.state[j] = AT_UPPER if direction > 0 else AT_LOWER
            else:
                t = tmin
                ties = np.flatnonzero(ratios <= tmin + 1e-12)
                if bland:
                    r = int(ties[np.argmin(self.basis[ties])])
                else:
                    r = int(ties[np.argmax(np.abs(col[ties]))])
                leaving = int(self.basis[r])
                self.x[self.basis] = xb - t * col
                self.x[j] += direction * t
                if col[r] > 0:
                    self.x[leaving] = self.lb[leaving]
                    self.state[leaving] = AT_LOWER
                else:
                    self.x[leaving] = self.ub[leaving]
                    self.state[leaving] = AT_UPPER
                piv = T[r, j]
                T[r] /= piv
                colj = T[:, j].copy()
                colj[r] = 0.0
                T -= np.outer(colj, T[r])
                self.basis[r] = j
                self.state[j] = BASIC
            obj = cost @ self.x
            if obj < last_obj - 1e-12:
                degenerate = 0
                bland = False
            else:
                degenerate += 1
                if degenerate > DEGENERATE_RUN:
                    bland = True
            last_obj = obj

    def drive_out_artificials(self):
        n, m = self.n, self.m
        first_art = n + m
        for r in range(m):
            if self.basis[r] < first_art:
                continue
            row = self.T[r, :first_art]
            cands = np.flatnonzero((np.abs(row) > 1e-7) & (self.state[:first_art] != BASIC))
            if len(cands) == 0:
                continue  # redundant row; artificial stays basic at zero
            j = int(cands[np.argmax(np.abs(row[cands]))])
            leaving = int(self.basis[r])
            piv = self.T[r, j]
            self.T[r] /= piv
            colj = self.T[:, j].copy()
            colj[r] = 0.0
            self.T -= np.outer(colj, self.T[r])
            self.basis[r] = j
            self.state[j] = BASIC
            self.state[leaving] = AT_LOWER
            self.x[leaving] = 0.0
        self.lb[first_art:] = 0.0
        self.ub[first_art:] = 0.0
        self.refresh()


def simplex(c, A, b, senses, lb, ub, max_iter: int = 200000) -> LPResult:
    """Minimize ``c @ x`` over the box-and-row polyhedron."""
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float).reshape(len(b), len(c))
    b = np.asarray(b, dtype=float)
    senses = np.asarray(senses)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    n = len(c)
    if np.any(lb > ub + PRIMAL_TOL):
        return LPResult("infeasible", np.full(n, np.nan), np.nan, 0)

    tab = _Tableau(A, b, senses, lb, ub)
    total = len(tab.x)
    if tab.num_art:
        phase1 = np.zeros(total)
        phase1[n + tab.m:] = 1.0
        tab.run(phase1, max_iter)
        tab.refresh()
        infeas = tab.x[n + tab.m:].sum()
        if infeas > PRIMAL_TOL * max(1.0, np.abs(b).max(initial=0.0)):
            return LPResult("infeasible", np.full(n, np.nan), np.nan, tab.iterations)
        tab.drive_out_artificials()
    cost = np.zeros(total)
    cost[:n] = c
    status = tab.run(cost, max_iter)
    tab.refresh()
    x = tab.x[:n].copy()
    # snap tiny bound violations introduced by floating point
    x = np.minimum(np.maximum(x, lb), ub)
    if status == "unbounded":
        return LPResult("unbounded", x, -np.inf, tab.iterations)
    return LPResult("optimal", x, float(c @ x), tab.iterations)
