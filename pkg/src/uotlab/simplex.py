"""Dense two-phase revised simplex for small equality-form linear programs.

Solves  min c.x  subject to  A x = b, x >= 0  where A has few rows (the
homogeneous-marginal constraint families) and possibly very many columns
(one per grid atom).  The basis inverse is kept explicitly and updated by
pivoting, with periodic refactorisation; pricing is a single dense
mat-vec over all columns.  Dantzig pricing with a Bland fallback after a
degenerate stall guarantees termination.

Desk scale only: columns up to ~1e5 and a few hundred rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_REFACTOR_EVERY = 64
_STALL_LIMIT = 60


class LpInfeasibleError(RuntimeError):
    """Raised by helpers that cannot express infeasibility in their result."""


@dataclass
class LpResult:
    status: str  # optimal | infeasible | unbounded | iteration_limit
    x: np.ndarray | None
    value: float
    iterations: int

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _pivot_update(binv: np.ndarray, d: np.ndarray, row: int) -> None:
    """In-place product-form update of the basis inverse after a pivot."""
    piv = d[row]
    binv[row, :] /= piv
    others = np.arange(binv.shape[0]) != row
    binv[others, :] -= np.outer(d[others], binv[row, :])


def _simplex_phase(c, A, b, basis, binv, max_iters, tol):
    """Run primal simplex from a feasible basis; mutates basis/binv.

    Returns (status, xB, iterations).
    """
    m, n = A.shape
    xb = binv @ b
    stall = 0
    bland = False
    iters = 0
    last_value = math.inf
    for iters in range(1, max_iters + 1):
        if iters % _REFACTOR_EVERY == 0:
            binv[:] = np.linalg.inv(A[:, basis])
            xb = binv @ b
        y = binv.T @ c[basis]
        reduced = c - A.T @ y
        reduced[basis] = 0.0
        if bland:
            candidates = np.flatnonzero(reduced < -tol)
            if candidates.size == 0:
                return "optimal", xb, iters
            enter = int(candidates[0])
        else:
            enter = int(np.argmin(reduced))
            if reduced[enter] >= -tol:
                return "optimal", xb, iters
        d = binv @ A[:, enter]
        pos = d > tol
        if not np.any(pos):
            return "unbounded", xb, iters
        ratios = np.full(m, math.inf)
        ratios[pos] = xb[pos] / d[pos]
        leave = int(np.argmin(ratios))
        if bland:
            # smallest basic-variable index among the minimal ratios
            best = ratios[leave]
            ties = np.flatnonzero(ratios <= best + tol)
            leave = int(ties[np.argmin(np.asarray(basis)[ties])])
        step = ratios[leave]
        value = float(c[basis] @ xb)
        if step <= tol and value >= last_value - tol * (1.0 + abs(value)):
            stall += 1
            if stall > _STALL_LIMIT:
                bland = True
        else:
            stall = 0
        last_value = value
        _pivot_update(binv, d, leave)
        basis[leave] = enter
        xb = xb - step * d
        xb[leave] = step
        xb = np.maximum(xb, 0.0)
    return "iteration_limit", xb, iters


def solve_lp(c, A, b, max_iters: int | None = None, tol: float = 1e-11) -> LpResult:
    """Minimize c.x over {A x = b, x >= 0} by two-phase revised simplex."""
    c = np.asarray(c, dtype=float).copy()
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).copy()
    m, n = A.shape
    if b.shape != (m,) or c.shape != (n,):
        raise ValueError("inconsistent LP dimensions")
    if max_iters is None:
        max_iters = 50 * (m + n) + 1000

    flip = b < 0
    if np.any(flip):
        A = A.copy()
        A[flip, :] *= -1.0
        b[flip] *= -1.0

    # Phase 1: artificial identity basis.
    A1 = np.hstack([A, np.eye(m)])
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    basis = list(range(n, n + m))
    binv = np.eye(m)
    status, xb, it1 = _simplex_phase(c1, A1, b, basis, binv, max_iters, tol)
    feas = float(c1[basis] @ xb)
    scale = 1.0 + float(np.max(np.abs(b))) if m else 1.0
    if status == "iteration_limit":
        return LpResult("iteration_limit", None, math.nan, it1)
    if feas > 1e-8 * scale:
        return LpResult("infeasible", None, math.inf, it1)

    # Drive leftover artificials out of the basis; drop redundant rows.
    keep_rows = np.ones(m, dtype=bool)
    for r in range(m):
        if basis[r] >= n:
            row = binv[r, :] @ A
            pivots = np.flatnonzero(np.abs(row) > 1e-9)
            if pivots.size:
                d = binv @ A[:, pivots[0]]
                _pivot_update(binv, d, r)
                basis[r] = int(pivots[0])
            else:
                keep_rows[r] = False
    if not np.all(keep_rows):
        rows = np.flatnonzero(keep_rows)
        A = A[rows, :]
        b = b[rows]
        basis = [basis[r] for r in rows]
        m = len(rows)
        binv = np.linalg.inv(A[:, basis])

    status, xb, it2 = _simplex_phase(c, A, b, basis, binv, max_iters, tol)
    if status != "optimal":
        return LpResult(status, None, math.nan if status != "unbounded" else -math.inf, it1 + it2)
    x = np.zeros(n)
    x[np.asarray(basis)] = np.maximum(xb, 0.0)
    return LpResult("optimal", x, float(c @ x), it1 + it2)


def transport_lp(mu: np.ndarray, nu: np.ndarray, cost: np.ndarray,
                 mass_tol: float = 1e-9) -> tuple[np.ndarray | None, float, str]:
    """Classical balanced optimal transport as a dense LP.

    Returns (plan, value, status); value is +inf with status 'infeasible'
    when the masses differ or when infinite costs block every coupling.
    """
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    cost = np.asarray(cost, dtype=float)
    n0, n1 = cost.shape
    if abs(mu.sum() - nu.sum()) > mass_tol * (1.0 + mu.sum() + nu.sum()):
        return None, math.inf, "infeasible"

    finite = np.isfinite(cost.ravel())
    cols = np.flatnonzero(finite)
    if cols.size == 0:
        if mu.sum() <= mass_tol:
            return np.zeros((n0, n1)), 0.0, "optimal"
        return None, math.inf, "infeasible"

    # rows: n0 row-sum constraints plus n1-1 column sums (last is implied)
    m = n0 + n1 - 1
    A = np.zeros((m, cols.size))
    i_idx, j_idx = np.divmod(cols, n1)
    A[i_idx, np.arange(cols.size)] = 1.0
    in_cols = j_idx < n1 - 1
    A[n0 + j_idx[in_cols], np.flatnonzero(in_cols)] = 1.0
    b = np.concatenate([mu, nu[:-1]])
    res = solve_lp(cost.ravel()[cols], A, b, tol=1e-11)
    if not res.optimal:
        return None, math.inf, res.status
    plan = np.zeros(n0 * n1)
    plan[cols] = res.x
    return plan.reshape(n0, n1), res.value, "optimal"
