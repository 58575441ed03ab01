"""Extended-space formulation over location-radial atoms.

A plan here is a nonnegative weight tensor over atoms (x0, s0, x1, s1) where
the s_i run over finite radial grids.  The p-th homogeneous marginal of a
plan is the projection to X weighted by s_i^p, and the problem

    inf (H_p, alpha)   s.t.  h_i^p alpha = mu_i

is a linear program over the atoms because the objective is linear in the
weights.  Its entropic regularisation adds eps * Div(alpha | nu_Y) for a
probability reference nu_Y and is solved by alternating KL projections onto
the two homogeneous-marginal constraint families (generalized iterative
scaling): each projection multiplies alpha by exp(lambda(x_i) s_i^p) where
lambda(x_i) solves a scalar monotone equation per support point, here by a
safeguarded Newton iteration in the log domain.

Radial grids default to geometric spacing below the mass cap
s* = (mu0(X) + mu1(X))^(1/p); rescaling by the pushforward
(x0, s0, x1, s1) -> (x0, s0/theta, x1, s1/theta) with
theta = ((s0^p + s1^p)^(1/p)) / s* normalises any plan to unit mass without
changing the objective, which is exact thanks to the 1-homogeneity of H.

The per-point tilt solves inside one projection are independent of each
other (and could run in parallel); projections themselves alternate
sequentially, and plans are immutable snapshots between iterations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .costs import CostMatrix, perspective_H
from .entropy import KL, divergence_arrays
from .measures import DiscreteMeasure, GroundMismatchError, GroundSet
from .simplex import solve_lp, transport_lp
from .solver_x import SolveReport, SolverConfig

_LOG_TINY = -745.0


class InfeasibleProblemError(RuntimeError):
    """No grid atom can carry the mass a constraint requires."""


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RadialGrid:
    """Strictly increasing radial nodes including 0, bounded by a cap."""

    nodes: np.ndarray
    cap: float

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 1:
            raise ValueError("radial grid needs a 1-d node array")
        if nodes[0] != 0.0:
            raise ValueError("radial grids include the node 0")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("radial nodes must be strictly increasing")
        if nodes[-1] > self.cap * (1 + 1e-12):
            raise ValueError("radial nodes must not exceed the cap")
        nodes.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)

    @property
    def size(self) -> int:
        return self.nodes.size

    @staticmethod
    def geometric(cap: float, n_nodes: int = 64, smin_frac: float = 1e-4) -> "RadialGrid":
        """Node 0 plus a geometric ladder on [smin_frac*cap, cap]."""
        if cap <= 0:
            raise ValueError("cap must be positive")
        if n_nodes < 2:
            raise ValueError("need at least two nodes")
        ladder = np.geomspace(smin_frac * cap, cap, n_nodes - 1)
        ladder[-1] = cap
        return RadialGrid(np.concatenate([[0.0], ladder]), cap)


@dataclass(frozen=True)
class ExtendedPlan:
    """Weights over (x0, s0-node, x1, s1-node) atoms."""

    row_ground: GroundSet
    col_ground: GroundSet
    grid0: RadialGrid
    grid1: RadialGrid
    p: float
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        shape = (self.row_ground.size, self.grid0.size,
                 self.col_ground.size, self.grid1.size)
        if w.shape != shape:
            raise ValueError(f"extended plan shape {w.shape} != {shape}")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("extended plan weights must be finite and nonnegative")
        if self.p <= 0:
            raise ValueError("p must be positive")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))


@dataclass(frozen=True)
class ExtendedAtoms:
    """Weighted atom cloud on (X x R+)^2 with off-grid radial coordinates."""

    row_ground: GroundSet
    col_ground: GroundSet
    x0: np.ndarray
    s0: np.ndarray
    x1: np.ndarray
    s1: np.ndarray
    weights: np.ndarray
    p: float

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    def homogeneous_marginal(self, index: int) -> DiscreteMeasure:
        if index == 0:
            ground, idx, s = self.row_ground, self.x0, self.s0
        elif index == 1:
            ground, idx, s = self.col_ground, self.x1, self.s1
        else:
            raise ValueError("index must be 0 or 1")
        w = np.zeros(ground.size)
        np.add.at(w, idx, (s ** self.p) * self.weights)
        return DiscreteMeasure(ground, w)

    def objective(self, cost: CostMatrix) -> float:
        h = perspective_H(self.s0 ** self.p, self.s1 ** self.p,
                          cost.values[self.x0, self.x1])
        return float(np.sum(h * self.weights))


@dataclass(frozen=True)
class YMeasure:
    """Measure on X x R+ supported on ground points times a radial grid."""

    ground: GroundSet
    grid: RadialGrid
    weights: np.ndarray  # (points, nodes)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))


# ---------------------------------------------------------------------------
# Construction helpers
# ---------------------------------------------------------------------------

def mass_cap(mu0: DiscreteMeasure, mu1: DiscreteMeasure, p: float) -> float:
    return (mu0.total_mass + mu1.total_mass) ** (1.0 / p)

def default_grids(mu0: DiscreteMeasure, mu1: DiscreteMeasure, p: float = 1.0,
                  n_nodes: int = 64, smin_frac: float = 1e-4
                  ) -> tuple[RadialGrid, RadialGrid]:
    cap = mass_cap(mu0, mu1, p)
    grid = RadialGrid.geometric(cap, n_nodes=n_nodes, smin_frac=smin_frac)
    return grid, grid


def default_nu_y(mu0: DiscreteMeasure, mu1: DiscreteMeasure,
                 grids: tuple[RadialGrid, RadialGrid], p: float = 1.0) -> ExtendedPlan:
    """Uniform probability over all atoms with both radial values positive."""
    grid0, grid1 = grids
    w = np.ones((mu0.ground.size, grid0.size, mu1.ground.size, grid1.size))
    w[:, grid0.nodes == 0.0, :, :] = 0.0
    w[:, :, :, grid1.nodes == 0.0] = 0.0
    total = w.sum()
    if total <= 0:
        raise ValueError("reference needs at least one positive radial node per side")
    return ExtendedPlan(mu0.ground, mu1.ground, grid0, grid1, p, w / total)


def hp_tensor(cost: CostMatrix, grid0: RadialGrid, grid1: RadialGrid, p: float) -> np.ndarray:
    """H_p over the atom tensor, shape (n0, K0, n1, K1)."""
    s0p = grid0.nodes ** p
    s1p = grid1.nodes ** p
    return perspective_H(
        s0p[None, :, None, None],
        s1p[None, None, None, :],
        cost.values[:, None, :, None],
    )


def homogeneous_marginal(alpha: ExtendedPlan, index: int) -> DiscreteMeasure:
    """h_i^p alpha: projection to X weighted by s_i^p."""
    w = alpha.weights
    if index == 0:
        s = alpha.grid0.nodes ** alpha.p
        out = np.einsum("ikjl,k->i", w, s)
        return DiscreteMeasure(alpha.row_ground, out)
    if index == 1:
        s = alpha.grid1.nodes ** alpha.p
        out = np.einsum("ikjl,l->j", w, s)
        return DiscreteMeasure(alpha.col_ground, out)
    raise ValueError("index must be 0 or 1")


def plan_objective(alpha: ExtendedPlan, cost: CostMatrix) -> float:
    """(H_p, alpha) over the atom tensor."""
    h = hp_tensor(cost, alpha.grid0, alpha.grid1, alpha.p)
    return float(np.sum(h * alpha.weights))


# ---------------------------------------------------------------------------
# Unregularised LP
# ---------------------------------------------------------------------------

def _marginal_rows(n0: int, k0: int, n1: int, k1: int, s0p: np.ndarray, s1p: np.ndarray):
    """Constraint matrix of the two homogeneous-marginal families."""
    nvars = n0 * k0 * n1 * k1
    a = np.zeros((n0 + n1, nvars))
    idx = np.arange(nvars)
    i0 = idx // (k0 * n1 * k1)
    k0i = (idx // (n1 * k1)) % k0
    i1 = (idx // k1) % n1
    k1i = idx % k1
    a[i0, idx] = s0p[k0i]
    a[n0 + i1, idx] += s1p[k1i]
    return a


def _check_reachable(mu: DiscreteMeasure, grid: RadialGrid, side: str) -> None:
    if np.any(mu.weights > 0) and not np.any(grid.nodes > 0):
        raise InfeasibleProblemError(
            f"{side} marginal carries mass but its radial grid has no positive node"
        )


def solve_y_unreg(mu0: DiscreteMeasure, mu1: DiscreteMeasure, cost: CostMatrix,
                  p: float, grids: tuple[RadialGrid, RadialGrid],
                  mode: str = "equality") -> tuple[ExtendedPlan, float]:
    """Linear program min (H_p, alpha) under homogeneous-marginal constraints.

    ``mode='inequality'`` solves the relaxed variant h_i^p alpha <= mu_i with
    the defect priced at F(0) per unit of unmatched mass.
    """
    if cost.shape != (mu0.ground.size, mu1.ground.size):
        raise GroundMismatchError("cost shape does not match supports")
    grid0, grid1 = grids
    _check_reachable(mu0, grid0, "first")
    _check_reachable(mu1, grid1, "second")
    n0, n1 = mu0.ground.size, mu1.ground.size
    k0, k1 = grid0.size, grid1.size
    s0p = grid0.nodes ** p
    s1p = grid1.nodes ** p

    h = hp_tensor(cost, grid0, grid1, p).ravel()
    a = _marginal_rows(n0, k0, n1, k1, s0p, s1p)
    b = np.concatenate([mu0.weights, mu1.weights])
    if mode == "equality":
        cvec = h
    elif mode == "inequality":
        # slack columns priced at F(0) = 1 per unit defect
        a = np.hstack([a, np.eye(n0 + n1)])
        cvec = np.concatenate([h, np.full(n0 + n1, KL.F_zero)])
    else:
        raise ValueError("mode must be 'equality' or 'inequality'")

    res = solve_lp(cvec, a, b)
    if res.status == "infeasible":
        raise InfeasibleProblemError("homogeneous-marginal constraints are infeasible on this grid")
    if not res.optimal:
        raise RuntimeError(f"LP solve failed with status {res.status}")
    x = res.x[: n0 * k0 * n1 * k1]
    alpha = ExtendedPlan(mu0.ground, mu1.ground, grid0, grid1, p,
                         x.reshape(n0, k0, n1, k1))
    return alpha, res.value


# ---------------------------------------------------------------------------
# Entropic solve: alternating KL projections
# ---------------------------------------------------------------------------

def _tilt_solve(w: np.ndarray, a: np.ndarray, target_log: float) -> float:
    """Solve LSE(w + delta * a) = target_log for delta.

    w are log-weights (finite), a > 0.  The left side is convex and strictly
    increasing in delta; Newton steps are safeguarded by a bracket found by
    doubling, with bisection as fallback.
    """
    def value_and_slope(delta):
        z = w + delta * a
        m = np.max(z)
        e = np.exp(z - m)
        se = float(np.sum(e))
        val = m + math.log(se) - target_log
        slope = float(np.sum(a * e)) / se
        return val, slope

    val, slope = value_and_slope(0.0)
    if abs(val) < 1e-14:
        return 0.0
    step = max(1.0, abs(val) / max(slope, 1e-12))
    if val < 0:
        lo, hi = 0.0, step
        while value_and_slope(hi)[0] <= 0:
            lo, hi = hi, hi * 2.0
            if hi > 1e13:
                raise InfeasibleProblemError("tilt equation has no finite solution")
    else:
        lo, hi = -step, 0.0
        while value_and_slope(lo)[0] > 0:
            lo, hi = lo * 2.0, lo
            if lo < -1e13:
                raise InfeasibleProblemError("tilt equation has no finite solution")

    delta = 0.5 * (lo + hi)
    for _ in range(200):
        val, slope = value_and_slope(delta)
        if abs(val) < 1e-14:
            return delta
        if val > 0:
            hi = delta
        else:
            lo = delta
        newton = delta - val / max(slope, 1e-300)
        delta = newton if lo < newton < hi else 0.5 * (lo + hi)
    return delta


def _project_family(log_alpha: np.ndarray, sp: np.ndarray, mu_w: np.ndarray,
                    axis_point: int, lam: np.ndarray) -> None:
    """KL projection onto one homogeneous-marginal family; updates lam in place.

    ``axis_point`` is 0 when points index axis 0 (radial axis 1), and 2 when
    points index axis 2 (radial axis 3) of the atom tensor.
    """
    n = log_alpha.shape[axis_point]
    for i in range(n):
        slc = np.moveaxis(log_alpha, axis_point, 0)[i]
        radial_axis = 0 if axis_point == 0 else 2
        s_shape = [1, 1, 1]
        s_shape[radial_axis] = sp.size
        a_full = np.broadcast_to(sp.reshape(s_shape), slc.shape)
        mask = (a_full > 0) & (slc > _LOG_TINY)
        if mu_w[i] <= 0:
            # park the tilt low enough that every positive-radial atom underflows
            if np.any(sp > 0):
                lam[i] = 4.0 * _LOG_TINY / float(np.min(sp[sp > 0]))
            continue
        if not np.any(mask):
            raise InfeasibleProblemError(
                "a support point carries mass but no reachable atom has a positive radial node"
            )
        w = slc[mask] + np.log(a_full[mask])
        delta = _tilt_solve(w, a_full[mask], math.log(mu_w[i]))
        lam[i] += delta


def _apply_tilts(log_base: np.ndarray, s0p, s1p, lam0, lam1) -> np.ndarray:
    return (log_base
            + (lam0[:, None] * s0p[None, :])[:, :, None, None]
            + (lam1[:, None] * s1p[None, :])[None, None, :, :])


def solve_y_eps(mu0: DiscreteMeasure, mu1: DiscreteMeasure, cost: CostMatrix,
                p: float, grids: tuple[RadialGrid, RadialGrid],
                nu_y: Optional[ExtendedPlan], eps: float, config: SolverConfig,
                ) -> tuple[ExtendedPlan, SolveReport]:
    """Entropic extended-space solve by generalized iterative scaling.

    Minimises (H_p, alpha) + eps * Div(alpha | nu_Y) subject to
    h_i^p alpha = mu_i.  The explicit ``eps`` governs the regularisation;
    ``config`` carries the iteration controls.  nu_Y must be a probability
    measure over the atom tensor (default: uniform over atoms with positive
    radial values).
    Convergence is declared when the largest homogeneous-marginal residual,
    relative to the mass scale, drops below ``config.tolerance``.  Targets
    far below the starting regularisation are reached by an internal
    eps-continuation ladder with rescaled tilts.
    """
    grid0, grid1 = grids
    if nu_y is None:
        nu_y = default_nu_y(mu0, mu1, grids, p)
    if nu_y.grid0 is not grid0 and not np.array_equal(nu_y.grid0.nodes, grid0.nodes):
        raise GroundMismatchError("reference grid does not match grid0")
    if nu_y.grid1 is not grid1 and not np.array_equal(nu_y.grid1.nodes, grid1.nodes):
        raise GroundMismatchError("reference grid does not match grid1")
    if abs(nu_y.total_mass - 1.0) > 1e-8:
        raise ValueError("nu_Y must be a probability measure over the atoms")
    _check_reachable(mu0, grid0, "first")
    _check_reachable(mu1, grid1, "second")

    n0, n1 = mu0.ground.size, mu1.ground.size
    s0p = grid0.nodes ** p
    s1p = grid1.nodes ** p
    h = hp_tensor(cost, grid0, grid1, p)
    with np.errstate(divide="ignore"):
        log_nu = np.where(nu_y.weights > 0, np.log(np.maximum(nu_y.weights, 1e-300)), -math.inf)

    # continuation ladder down to the target eps
    ladder = [eps]
    while ladder[0] < 0.25:
        ladder.insert(0, min(2.0 * ladder[0], 0.5))
    lam0 = np.zeros(n0)
    lam1 = np.zeros(n1)
    scale = max(1.0, float(np.max(mu0.weights)), float(np.max(mu1.weights)))

    iters_total = 0
    res0 = res1 = math.inf
    for stage, stage_eps in enumerate(ladder):
        final = stage == len(ladder) - 1
        tol = config.tolerance if final else max(config.tolerance, 1e-6)
        if stage > 0:
            prev = ladder[stage - 1]
            lam0 *= prev / stage_eps
            lam1 *= prev / stage_eps
        log_base = log_nu - h / stage_eps
        budget = config.max_iters if final else max(200, config.max_iters // 4)
        for _ in range(budget):
            iters_total += 1
            log_alpha = _apply_tilts(log_base, s0p, s1p, lam0, lam1)
            _project_family(log_alpha, s0p, mu0.weights, 0, lam0)
            log_alpha = _apply_tilts(log_base, s0p, s1p, lam0, lam1)
            _project_family(log_alpha, s1p, mu1.weights, 2, lam1)
            log_alpha = _apply_tilts(log_base, s0p, s1p, lam0, lam1)
            with np.errstate(under="ignore"):
                alpha_w = np.exp(np.minimum(log_alpha, 700.0))
            h0 = np.einsum("ikjl,k->i", alpha_w, s0p)
            h1 = np.einsum("ikjl,l->j", alpha_w, s1p)
            res0 = float(np.max(np.abs(h0 - mu0.weights))) / scale
            res1 = float(np.max(np.abs(h1 - mu1.weights))) / scale
            if max(res0, res1) <= tol:
                break
            if iters_total >= config.max_iters:
                break
        if iters_total >= config.max_iters:
            break

    log_alpha = _apply_tilts(log_nu - h / eps, s0p, s1p, lam0, lam1)
    with np.errstate(under="ignore"):
        alpha_w = np.exp(np.minimum(log_alpha, 700.0))
    alpha = ExtendedPlan(mu0.ground, mu1.ground, grid0, grid1, p, alpha_w)

    primal = float(np.sum(h * alpha_w)) + eps * divergence_arrays(KL, alpha_w, nu_y.weights)
    h0 = np.einsum("ikjl,k->i", alpha_w, s0p)
    h1 = np.einsum("ikjl,l->j", alpha_w, s1p)
    dual = eps * (float(lam0 @ mu0.weights) + float(lam1 @ mu1.weights)
                  + nu_y.total_mass - float(np.sum(alpha_w)))
    res0 = float(np.max(np.abs(h0 - mu0.weights))) / scale
    res1 = float(np.max(np.abs(h1 - mu1.weights))) / scale
    converged = max(res0, res1) <= config.tolerance
    report = SolveReport(primal, dual, primal - dual, iters_total, (res0, res1), converged)
    return alpha, report


# ---------------------------------------------------------------------------
# Rescaling and the transport decomposition
# ---------------------------------------------------------------------------

def rescale_plan(alpha: ExtendedPlan, p: Optional[float] = None) -> ExtendedAtoms:
    """Normalise a plan to unit mass by the radial pushforward.

    Drops atoms with s0 = s1 = 0, computes theta = (s0^p + s1^p)^(1/p) / s*
    per atom with s* derived from the plan's own homogeneous-marginal masses,
    and pushes each atom to (x0, s0/theta, x1, s1/theta) with weight
    theta^p * alpha.  Off-grid radial coordinates are kept exactly so the
    objective and homogeneous marginals are preserved to rounding.
    """
    if p is None:
        p = alpha.p
    idx = np.nonzero(alpha.weights)
    i0, k0, i1, k1 = idx
    s0 = alpha.grid0.nodes[k0]
    s1 = alpha.grid1.nodes[k1]
    w = alpha.weights[idx]
    keep = ~((s0 == 0.0) & (s1 == 0.0))
    i0, i1, s0, s1, w = i0[keep], i1[keep], s0[keep], s1[keep], w[keep]

    m0 = homogeneous_marginal(alpha, 0).total_mass
    m1 = homogeneous_marginal(alpha, 1).total_mass
    if m0 + m1 <= 0:
        return ExtendedAtoms(alpha.row_ground, alpha.col_ground,
                             i0, s0, i1, s1, w, p)
    s_star = (m0 + m1) ** (1.0 / p)
    theta = (s0 ** p + s1 ** p) ** (1.0 / p) / s_star
    return ExtendedAtoms(
        alpha.row_ground, alpha.col_ground,
        i0, s0 / theta, i1, s1 / theta, (theta ** p) * w, p,
    )


def uot_as_ot_decomposition(alpha: ExtendedPlan, cost: CostMatrix
                            ) -> tuple[YMeasure, YMeasure, float]:
    """Ordinary marginals of an extended plan and its coupling value.

    The pair (beta0, beta1) are measures on X x R+ obtained by projecting
    alpha to each factor; the value is (H_p, alpha).  Re-solving balanced
    transport between beta0 and beta1 under the cost H_p can only improve
    on the value, with equality at optimal alpha.
    """
    w = alpha.weights
    beta0 = YMeasure(alpha.row_ground, alpha.grid0, w.sum(axis=(2, 3)))
    beta1 = YMeasure(alpha.col_ground, alpha.grid1, w.sum(axis=(0, 1)))
    return beta0, beta1, plan_objective(alpha, cost)


def extended_ot_value(beta0: YMeasure, beta1: YMeasure, cost: CostMatrix,
                      p: float) -> float:
    """Balanced transport between two Y-measures under the cost H_p."""
    h = hp_tensor(cost, beta0.grid, beta1.grid, p)
    n0, k0 = beta0.weights.shape
    n1, k1 = beta1.weights.shape
    pairs = h.transpose(0, 1, 2, 3).reshape(n0 * k0, n1 * k1)
    _, value, status = transport_lp(beta0.weights.ravel(), beta1.weights.ravel(), pairs)
    if status != "optimal":
        raise RuntimeError(f"transport LP failed: {status}")
    return value
