"""Dense phase-one simplex for small feasibility problems ``A lam = b, lam >= 0``.

Bland's rule (smallest eligible index enters and leaves) rules out cycling;
an iteration cap still guards against floating-point stalls.  On
infeasibility the final tableau yields a Farkas certificate ``y`` with
``y.A <= 0`` and ``y.b > 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FEAS_TOL = 1e-7
PIVOT_TOL = 1e-10


@dataclass
class LPResult:
    status: str  # "feasible" | "infeasible" | "indeterminate"
    x: np.ndarray | None
    farkas: np.ndarray | None
    infeasibility: float
    iterations: int
    message: str = ""


def phase_one(
    A: np.ndarray,
    b: np.ndarray,
    *,
    feas_tol: float = FEAS_TOL,
    pivot_tol: float = PIVOT_TOL,
    max_iter: int = 50_000,
) -> LPResult:
    """Minimise the sum of artificial variables for ``A x = b, x >= 0``."""
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    m, n = A.shape
    sign = np.where(b < 0, -1.0, 1.0)
    A = A * sign[:, None]
    b = b * sign

    tab = np.zeros((m, n + m + 1))
    tab[:, :n] = A
    tab[:, n : n + m] = np.eye(m)
    tab[:, -1] = b
    basis = list(range(n, n + m))
    cost = np.concatenate([np.zeros(n), np.ones(m)])

    it = 0
    while True:
        cb = cost[basis]
        reduced = cost - cb @ tab[:, :-1]
        entering = np.flatnonzero(reduced < -pivot_tol)
        if entering.size == 0:
            break
        if it >= max_iter:
            return LPResult("indeterminate", None, None, float("nan"), it, "iteration cap reached")
        j = int(entering[0])
        col = tab[:, j]
        rows = np.flatnonzero(col > pivot_tol)
        if rows.size == 0:
            return LPResult("indeterminate", None, None, float("nan"), it, "unbounded direction in phase one")
        ratios = tab[rows, -1] / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
        i = int(min(ties, key=lambda r: basis[r]))
        tab[i] /= tab[i, j]
        others = np.arange(m) != i
        tab[others] -= np.outer(tab[others, j], tab[i])
        basis[i] = j
        it += 1

    objective = float(cost[basis] @ tab[:, -1])
    if objective <= feas_tol:
        x = np.zeros(n)
        for r, var in enumerate(basis):
            if var < n:
                x[var] = tab[r, -1]
        return LPResult("feasible", np.clip(x, 0.0, None), None, objective, it)
    # columns of the artificials hold B^-1; y = c_B B^-1 in the sign-flipped rows
    y = (cost[basis] @ tab[:, n : n + m]) * sign
    return LPResult("infeasible", None, y, objective, it)
