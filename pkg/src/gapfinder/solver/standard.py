"""Lower a :class:`Model` to matrix form (always minimization)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from ..model import Model, ModelError, validate


@dataclass
class MatrixForm:
    c: np.ndarray          # minimization costs
    A: sparse.csr_matrix
    b: np.ndarray
    senses: np.ndarray     # "<=", "==", ">="
    lb: np.ndarray
    ub: np.ndarray
    integral: np.ndarray   # bool mask
    obj_const: float
    sign: float            # +1 for min models, -1 for max models

    def user_objective(self, internal: float) -> float:
        return self.sign * internal + self.obj_const

    def to_internal(self, user: float) -> float:
        return self.sign * (user - self.obj_const)

    @property
    def dense_A(self) -> np.ndarray:
        return self.A.toarray()


def to_matrix(model: Model) -> MatrixForm:
    problems = validate(model)
    if problems:
        raise ModelError("invalid model: " + "; ".join(problems[:5]))
    n = len(model.vars)
    rows, cols, vals = [], [], []
    b = np.empty(len(model.constraints))
    senses = np.empty(len(model.constraints), dtype=object)
    for i, con in enumerate(model.constraints):
        for vid, coeff in con.lhs.terms.items():
            rows.append(i)
            cols.append(vid)
            vals.append(coeff)
        b[i] = con.rhs - con.lhs.constant
        senses[i] = con.sense.value
    A = sparse.csr_matrix((vals, (rows, cols)), shape=(len(model.constraints), n))
    c = np.zeros(n)
    const = 0.0
    sign = 1.0
    if model.objective is not None:
        sign = -1.0 if model.objective.sense == "max" else 1.0
        for vid, coeff in model.objective.expr.terms.items():
            c[vid] += sign * coeff
        const = model.objective.expr.constant
    lb = np.array([d.lower for d in model.vars], dtype=float)
    ub = np.array([d.upper for d in model.vars], dtype=float)
    integral = np.array([d.is_integral for d in model.vars], dtype=bool)
    # integer bounds are rounded inward
    lb[integral] = np.ceil(lb[integral] - 1e-9)
    ub[integral] = np.floor(ub[integral] + 1e-9)
    return MatrixForm(c, A, b, senses.astype(str), lb, ub, integral, const, sign)

