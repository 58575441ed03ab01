"""Original-space regularised unbalanced transport.

Implements the four equivalent functionals of the problem

    UOT_eps(mu0, mu1) = inf_gamma  sum_i Div(gamma_i | mu_i) + (c, gamma)
                                   + eps * Div(gamma | nu_X)

over plans gamma on the product support, together with a generalized
Sinkhorn solver.  The solver performs exact alternating maximisation of the
concave dual

    D(phi) = sum_i mu_i(1 - exp(-phi_i))
             + eps * nu_X(1 - exp((phi_0 + phi_1 - c)/eps)),

whose block updates close to a = (mu0 / (K b))^(1/(1+eps)) with scaling
variables a = exp(phi_0/eps), b = exp(phi_1/eps) and kernel
K = exp(-c/eps) * nu_X.  Iterations run either on plain scaling vectors or
fully in the log domain (default), which keeps eps <= 1e-2 and infinite
costs finite.

Solver state is confined to each solve call; distinct solves may run in
parallel and results are deterministic for a fixed thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .costs import CostMatrix, perspective_H_eps
from .entropy import KL, EntropyFunction, EntropyKind, divergence_arrays
from .measures import DiscreteMeasure, GroundMismatchError, Plan, product, split_arrays
from .simplex import transport_lp

_EXP_CLIP = 700.0  # exp overflow guard
_LOG_TINY = -745.0  # log of the smallest positive double, used to clamp potentials


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DualPotentials:
    """Pair of dual potential vectors over the two supports."""

    phi0: np.ndarray
    phi1: np.ndarray

    def __post_init__(self):
        p0 = np.array(self.phi0, dtype=float)
        p1 = np.array(self.phi1, dtype=float)
        if not (np.all(np.isfinite(p0)) and np.all(np.isfinite(p1))):
            raise ValueError("dual potentials must be finite")
        p0.flags.writeable = False
        p1.flags.writeable = False
        object.__setattr__(self, "phi0", p0)
        object.__setattr__(self, "phi1", p1)


@dataclass(frozen=True)
class SolverConfig:
    """Iteration controls; tolerance is a relative duality-gap target."""

    eps: float
    max_iters: int = 10_000
    tolerance: float = 1e-9
    stabilization: str = "log_domain"  # or "scaling"

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if not (0.0 < self.tolerance < 1.0):
            raise ValueError("tolerance must lie in (0, 1)")
        if self.stabilization not in ("log_domain", "scaling"):
            raise ValueError("stabilization must be 'log_domain' or 'scaling'")


@dataclass(frozen=True)
class SolveReport:
    primal: float
    dual: float
    gap: float
    iterations: int
    marginal_residuals: tuple[float, float]
    converged: bool


# ---------------------------------------------------------------------------
# Shape checks and shared pieces
# ---------------------------------------------------------------------------

def _check_instance(mu0: DiscreteMeasure, mu1: DiscreteMeasure, cost: CostMatrix,
                    nu_x: Optional[Plan]):
    n0, n1 = mu0.ground.size, mu1.ground.size
    if cost.shape != (n0, n1):
        raise GroundMismatchError(
            f"cost shape {cost.shape} does not match supports ({n0}, {n1})"
        )
    if nu_x is not None:
        if nu_x.row_ground is not mu0.ground or nu_x.col_ground is not mu1.ground:
            raise GroundMismatchError("reference plan must live on the same grounds")


def default_nu_x(mu0: DiscreteMeasure, mu1: DiscreteMeasure) -> Plan:
    """Product reference normalized to a probability measure."""
    m = mu0.total_mass * mu1.total_mass
    if m <= 0:
        raise ValueError("default reference needs both measures to carry mass")
    return Plan(mu0.ground, mu1.ground, np.outer(mu0.weights, mu1.weights) / m)


def _coupling_value(cost: np.ndarray, gamma: np.ndarray) -> float:
    """(c, gamma) with the 0 * inf = 0 convention on gamma-null pairs."""
    pos = gamma > 0
    if np.any(pos & np.isinf(cost)):
        return math.inf
    return float(np.sum(np.where(pos, cost, 0.0) * gamma))


# ---------------------------------------------------------------------------
# Functional evaluators
# ---------------------------------------------------------------------------

def eval_primal_eps(plan: Plan, mu0: DiscreteMeasure, mu1: DiscreteMeasure,
                    cost: CostMatrix, nu_x: Plan, eps: float,
                    entropy: EntropyFunction = KL) -> float:
    """Primal value Div(g0|mu0) + Div(g1|mu1) + (c,g) + eps*Div(g|nu_X)."""
    _check_instance(mu0, mu1, cost, nu_x)
    g = plan.weights
    total = divergence_arrays(entropy, g.sum(axis=1), mu0.weights)
    total += divergence_arrays(entropy, g.sum(axis=0), mu1.weights)
    total += _coupling_value(cost.values, g)
    total += eps * divergence_arrays(entropy, g, nu_x.weights)
    return total


def eval_dual_eps(phi: DualPotentials, mu0: DiscreteMeasure, mu1: DiscreteMeasure,
                  cost: CostMatrix, nu_x: Plan, eps: float,
                  entropy: EntropyFunction = KL) -> float:
    """Dual value sum_i mu_i(-F*(-phi_i)) + eps*nu_X(-F*((phi0+phi1-c)/eps)).

    Integrals run over the supports of mu_i and nu_X only, so clamped
    potentials at zero-mass points cannot overflow.
    """
    _check_instance(mu0, mu1, cost, nu_x)
    total = 0.0
    for m, p in ((mu0.weights, phi.phi0), (mu1.weights, phi.phi1)):
        pos = m > 0
        total += float(np.sum(m[pos] * (-entropy.F_star(-p[pos]))))
    expo = (phi.phi0[:, None] + phi.phi1[None, :] - cost.values) / eps
    expo = np.minimum(expo, _EXP_CLIP)
    pos = nu_x.weights > 0
    total += eps * float(np.sum(nu_x.weights[pos] * (-entropy.F_star(expo[pos]))))
    return total


def eval_reverse_eps(plan: Plan, mu0: DiscreteMeasure, mu1: DiscreteMeasure,
                     cost: CostMatrix, nu_x: Plan, eps: float,
                     entropy: EntropyFunction = KL) -> float:
    """Reverse value with densities of (mu_i, nu_X) relative to the plan."""
    _check_instance(mu0, mu1, cost, nu_x)
    g = plan.weights
    g0, g1 = g.sum(axis=1), g.sum(axis=0)
    rho0, sing0 = split_arrays(mu0.weights, g0)
    rho1, sing1 = split_arrays(mu1.weights, g1)
    varrho, sing_nu = split_arrays(nu_x.weights, g)

    pos = g > 0
    integrand = np.zeros_like(g)
    r0 = entropy.R(rho0)
    r1 = entropy.R(rho1)
    rr = entropy.R(varrho[pos]) if np.any(pos) else np.zeros(0)
    integrand[pos] = (
        r0[np.nonzero(pos)[0]] + r1[np.nonzero(pos)[1]] + cost.values[pos] + eps * rr
    )
    if np.any(np.isinf(integrand[pos])):
        return math.inf
    total = float(np.sum(integrand[pos] * g[pos]))
    total += entropy.R_inf * float(np.sum(sing0) + np.sum(sing1))
    total += eps * entropy.R_inf * float(np.sum(sing_nu))
    return total


def eval_homogeneous_eps(plan: Plan, mu0: DiscreteMeasure, mu1: DiscreteMeasure,
                         cost: CostMatrix, nu_x: Plan, eps: float) -> float:
    """Homogeneous value: regularised perspective cost of the plan densities.

    The plan-null masses of mu_i and nu_X are charged at F(0), matching the
    defect terms of the extended formulation.
    """
    _check_instance(mu0, mu1, cost, nu_x)
    g = plan.weights
    g0, g1 = g.sum(axis=1), g.sum(axis=0)
    rho0, sing0 = split_arrays(mu0.weights, g0)
    rho1, sing1 = split_arrays(mu1.weights, g1)
    varrho, sing_nu = split_arrays(nu_x.weights, g)

    i_idx, j_idx = np.nonzero(g > 0)
    hvals = perspective_H_eps(
        rho0[i_idx], rho1[j_idx], varrho[i_idx, j_idx], cost.values[i_idx, j_idx], eps
    )
    total = float(np.sum(hvals * g[i_idx, j_idx]))
    total += KL.F_zero * float(np.sum(sing0) + np.sum(sing1) + np.sum(sing_nu))
    return total


# ---------------------------------------------------------------------------
# Generalized Sinkhorn
# ---------------------------------------------------------------------------

def _lse(a: np.ndarray, axis: int) -> np.ndarray:
    """Log-sum-exp along an axis; empty (all -inf) slices give -inf."""
    amax = np.max(a, axis=axis)
    finite = np.isfinite(amax)
    safe = np.where(finite, amax, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - np.expand_dims(safe, axis)), axis=axis))
    return np.where(finite, out + safe, -math.inf)


def _plan_from_logs(f, g, log_k) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        expo = f[:, None] + g[None, :] + log_k
        values = np.exp(np.minimum(np.where(np.isneginf(log_k), 0.0, expo), _EXP_CLIP))
    return np.where(np.isneginf(log_k), 0.0, values)


def _clamped_potentials(f, g, eps: float) -> DualPotentials:
    # clamp so that exp((phi0 + phi1 - c)/eps) underflows exactly at the
    # clamped points while mu-side terms stay negligible; the clamped values
    # only occur where the paired measure has zero mass
    lim = -_LOG_TINY + 40.0 / eps
    phi0 = eps * np.clip(f, -lim, lim)
    phi1 = eps * np.clip(g, -lim, lim)
    return DualPotentials(phi0, phi1)


def _first_order_residuals(gamma, mu0_w, mu1_w, phi: DualPotentials):
    res = []
    for m, p, marg in ((mu0_w, phi.phi0, gamma.sum(axis=1)),
                       (mu1_w, phi.phi1, gamma.sum(axis=0))):
        pos = m > 0
        if np.any(pos):
            sigma = marg[pos] / m[pos]
            res.append(float(np.max(np.abs(sigma - np.exp(-p[pos])))))
        else:
            res.append(0.0)
    return (res[0], res[1])


def solve_x_eps(mu0: DiscreteMeasure, mu1: DiscreteMeasure, cost: CostMatrix,
                nu_x: Optional[Plan], config: SolverConfig,
                init: Optional[tuple[np.ndarray, np.ndarray]] = None,
                on_iteration: Optional[Callable[[int, float], None]] = None,
                ) -> tuple[Plan, DualPotentials, SolveReport]:
    """Generalized Sinkhorn for the KL-penalised regularised problem.

    Alternates the closed-form block updates of the dual until the relative
    duality gap drops below ``config.tolerance``.  ``init`` optionally warm
    starts the log-scaling vectors (f, g) = (phi0, phi1)/eps;
    ``on_iteration`` receives (iteration, dual value) after every update
    pair, which is how dual monotonicity is observed.
    """
    if nu_x is None:
        nu_x = default_nu_x(mu0, mu1)
    _check_instance(mu0, mu1, cost, nu_x)
    eps = config.eps
    n0, n1 = mu0.ground.size, mu1.ground.size

    if mu0.total_mass == 0.0 or mu1.total_mass == 0.0:
        # one side empty: the zero plan is optimal outright
        plan = Plan(mu0.ground, mu1.ground, np.zeros((n0, n1)))
        lo, hi = _LOG_TINY - 40.0 / eps, 40.0 / eps
        f = np.full(n0, lo if mu0.total_mass == 0.0 else hi)
        g = np.full(n1, lo if mu1.total_mass == 0.0 else hi)
        phi = _clamped_potentials(f, g, eps)
        primal = eval_primal_eps(plan, mu0, mu1, cost, nu_x, eps)
        dual = eval_dual_eps(phi, mu0, mu1, cost, nu_x, eps)
        report = SolveReport(primal, dual, primal - dual, 0,
                             _first_order_residuals(plan.weights, mu0.weights,
                                                    mu1.weights, phi),
                             True)
        return plan, phi, report

    with np.errstate(divide="ignore"):
        log_mu0 = np.log(mu0.weights)
        log_mu1 = np.log(mu1.weights)
        log_nu = np.where(nu_x.weights > 0, np.log(np.maximum(nu_x.weights, 1e-300)),
                          -math.inf)
    log_k = log_nu - np.where(np.isinf(cost.values), math.inf, cost.values) / eps
    damp = 1.0 / (1.0 + eps)

    if init is not None:
        f = np.array(init[0], dtype=float)
        g = np.array(init[1], dtype=float)
    else:
        f = np.zeros(n0)
        g = np.zeros(n1)

    use_logs = config.stabilization == "log_domain"
    if not use_logs:
        with np.errstate(under="ignore"):
            kern = np.exp(log_k)
        a = np.exp(np.minimum(f, _EXP_CLIP))
        b = np.exp(np.minimum(g, _EXP_CLIP))

    unreachable = np.isneginf(log_k)

    def shifted(vec):
        # -inf kernel entries stay -inf no matter the potential
        with np.errstate(invalid="ignore"):
            out = vec + log_k
        return np.where(unreachable, -math.inf, out)

    primal = dual = math.inf
    gap = math.inf
    iters = 0
    check_every = 5
    for iters in range(1, config.max_iters + 1):
        if use_logs:
            row = _lse(shifted(g[None, :]), axis=1)
            f = np.where(np.isneginf(log_mu0), -math.inf, damp * (log_mu0 - row))
            col = _lse(shifted(f[:, None]), axis=0)
            g = np.where(np.isneginf(log_mu1), -math.inf, damp * (log_mu1 - col))
        else:
            kb = kern @ b
            with np.errstate(divide="ignore", invalid="ignore"):
                a = np.where(kb > 0, (mu0.weights / np.where(kb > 0, kb, 1.0)) ** damp, 0.0)
                ka = kern.T @ a
                b = np.where(ka > 0, (mu1.weights / np.where(ka > 0, ka, 1.0)) ** damp, 0.0)
            with np.errstate(divide="ignore"):
                f = np.log(np.where(a > 0, a, np.nan))
                g = np.log(np.where(b > 0, b, np.nan))
            f = np.where(np.isnan(f), -math.inf, f)
            g = np.where(np.isnan(g), -math.inf, g)

        should_check = (iters % check_every == 0) or iters == config.max_iters
        if on_iteration is not None or should_check:
            phi = _clamped_potentials(f, g, eps)
            dual = eval_dual_eps(phi, mu0, mu1, cost, nu_x, eps)
            if on_iteration is not None:
                on_iteration(iters, dual)
        if should_check:
            gamma = _plan_from_logs(f, g, log_k)
            plan = Plan(mu0.ground, mu1.ground, gamma)
            primal = eval_primal_eps(plan, mu0, mu1, cost, nu_x, eps)
            gap = primal - dual
            # secondary criterion: the first-order marginal conditions; the
            # side updated first is stale by half an iteration, so the gap
            # alone would leave sigma_i - exp(-phi_i) at sqrt(gap) scale
            res = _first_order_residuals(gamma, mu0.weights, mu1.weights, phi)
            if gap <= config.tolerance * (1.0 + abs(primal)) and (
                max(res) <= max(config.tolerance, 1e-9)
            ):
                break

    gamma = _plan_from_logs(f, g, log_k)
    plan = Plan(mu0.ground, mu1.ground, gamma)
    phi = _clamped_potentials(f, g, eps)
    primal = eval_primal_eps(plan, mu0, mu1, cost, nu_x, eps)
    dual = eval_dual_eps(phi, mu0, mu1, cost, nu_x, eps)
    gap = primal - dual
    converged = gap <= config.tolerance * (1.0 + abs(primal))
    report = SolveReport(primal, dual, gap, iters,
                         _first_order_residuals(gamma, mu0.weights, mu1.weights, phi),
                         converged)
    return plan, phi, report


# ---------------------------------------------------------------------------
# Unregularised problem
# ---------------------------------------------------------------------------

_CONTINUATION_EPS = (1.0, 0.3, 0.1, 0.03, 0.01, 0.003, 0.001, 3e-4, 1e-4)


def eval_primal_unreg(plan: Plan, mu0: DiscreteMeasure, mu1: DiscreteMeasure,
                      cost: CostMatrix, entropy: EntropyFunction = KL) -> float:
    g = plan.weights
    total = divergence_arrays(entropy, g.sum(axis=1), mu0.weights)
    total += divergence_arrays(entropy, g.sum(axis=0), mu1.weights)
    total += _coupling_value(cost.values, g)
    return total


def _feasible_dual_value(sigma0, sigma1, mu0_w, mu1_w, cost):
    """Lower bound from potentials phi_i = -log sigma_i shifted into the
    constraint set {phi0 + phi1 <= c}."""
    with np.errstate(divide="ignore"):
        phi0 = np.where(sigma0 > 0, -np.log(np.where(sigma0 > 0, sigma0, 1.0)), -_EXP_CLIP)
        phi1 = np.where(sigma1 > 0, -np.log(np.where(sigma1 > 0, sigma1, 1.0)), -_EXP_CLIP)
    finite = np.isfinite(cost)
    if np.any(finite):
        viol = np.max((phi0[:, None] + phi1[None, :] - cost)[finite])
        if viol > 0:
            phi0 = phi0 - viol / 2.0
            phi1 = phi1 - viol / 2.0
    val = float(np.sum(mu0_w * (1.0 - np.exp(-phi0))) +
                np.sum(mu1_w * (1.0 - np.exp(-phi1))))
    return val


def _pgd_direct(mu0_w, mu1_w, cost, max_iters=60_000, grad_tol=1e-12):
    """Projected gradient with Armijo backtracking on the plan entries."""
    support = np.isfinite(cost) & (mu0_w[:, None] > 0) & (mu1_w[None, :] > 0)
    gamma = np.where(support, np.outer(mu0_w, mu1_w), 0.0)
    tot = max(mu0_w.sum(), mu1_w.sum(), 1e-12)
    gamma = gamma / tot
    c_safe = np.where(support, cost, 0.0)
    floor = -200.0  # surrogate slope for log at zero marginals

    def value(gm):
        v = divergence_arrays(KL, gm.sum(axis=1), mu0_w)
        v += divergence_arrays(KL, gm.sum(axis=0), mu1_w)
        return v + float(np.sum(c_safe * gm))

    def gradient(gm):
        g0, g1 = gm.sum(axis=1), gm.sum(axis=0)
        with np.errstate(divide="ignore"):
            l0 = np.where((g0 > 0) & (mu0_w > 0), np.log(np.maximum(g0, 1e-300) / np.maximum(mu0_w, 1e-300)), floor)
            l1 = np.where((g1 > 0) & (mu1_w > 0), np.log(np.maximum(g1, 1e-300) / np.maximum(mu1_w, 1e-300)), floor)
        return l0[:, None] + l1[None, :] + c_safe

    val = value(gamma)
    step = 1.0
    iters = 0
    stalled = 0
    for iters in range(1, max_iters + 1):
        grad = gradient(gamma)
        trial_full = np.where(support, np.maximum(gamma - step * grad, 0.0), 0.0)
        gm_norm = float(np.max(np.abs(trial_full - gamma))) / max(step, 1e-12)
        if gm_norm <= grad_tol * (1.0 + tot):
            break
        accepted = False
        prev_val = val
        for _ in range(60):
            trial = np.where(support, np.maximum(gamma - step * grad, 0.0), 0.0)
            if not np.any(trial != gamma):
                break  # below float resolution; no further progress possible
            tval = value(trial)
            if tval <= val + 1e-4 * float(np.sum(grad * (trial - gamma))):
                gamma, val = trial, tval
                accepted = True
                step = min(step * 2.0, 1e6)
                break
            step *= 0.5
        if not accepted:
            break
        # Armijo certifies sub-ulp decreases near the optimum; bail out once
        # the value stops moving in floats
        stalled = stalled + 1 if val >= prev_val - 1e-14 * (1.0 + abs(prev_val)) else 0
        if stalled >= 25:
            break
    return gamma, val, iters


def solve_x_unreg(mu0: DiscreteMeasure, mu1: DiscreteMeasure, cost: CostMatrix,
                  entropy: EntropyFunction = KL,
                  method: str = "eps_continuation") -> tuple[Plan, SolveReport]:
    """Minimise the unregularised functional Div+Div+(c, .).

    ``eps_continuation`` follows warm-started regularised solves down an
    eps ladder and reports the unregularised value of the final plan;
    ``direct`` runs projected gradient on the plan entries (small instances).
    Balanced entropies route to the exact transport LP.
    """
    _check_instance(mu0, mu1, cost, None)
    if entropy.kind is EntropyKind.BALANCED:
        plan_w, value, status = transport_lp(mu0.weights, mu1.weights, cost.values)
        if status != "optimal":
            plan = Plan(mu0.ground, mu1.ground, np.zeros(cost.shape))
            return plan, SolveReport(math.inf, math.inf, 0.0, 0, (math.inf, math.inf), False)
        plan = Plan(mu0.ground, mu1.ground, plan_w)
        res0 = float(np.max(np.abs(plan_w.sum(axis=1) - mu0.weights)))
        res1 = float(np.max(np.abs(plan_w.sum(axis=0) - mu1.weights)))
        return plan, SolveReport(value, value, 0.0, 0, (res0, res1), True)

    if mu0.total_mass == 0.0 or mu1.total_mass == 0.0:
        plan = Plan(mu0.ground, mu1.ground, np.zeros(cost.shape))
        value = mu0.total_mass + mu1.total_mass
        return plan, SolveReport(value, value, 0.0, 0, (0.0, 0.0), True)

    if method == "direct":
        if max(mu0.ground.size, mu1.ground.size) > 12:
            raise ValueError("direct method is limited to at most 12 support points per side")
        gamma, value, iters = _pgd_direct(mu0.weights, mu1.weights, cost.values)
    elif method == "eps_continuation":
        nu = default_nu_x(mu0, mu1)
        fg = None
        gamma = np.zeros(cost.shape)
        iters = 0
        for eps in _CONTINUATION_EPS:
            # warm-started path following; the damped update contracts like
            # 1/(1+eps), so tiny-eps stages get a budget, not a tight target
            cfg = SolverConfig(eps=eps, max_iters=3000, tolerance=1e-9)
            plan, phi, rep = solve_x_eps(mu0, mu1, cost, nu, cfg, init=fg)
            fg = (phi.phi0 / eps, phi.phi1 / eps)
            gamma = plan.weights
            iters += rep.iterations
        value = eval_primal_unreg(Plan(mu0.ground, mu1.ground, gamma), mu0, mu1, cost)
    else:
        raise ValueError("method must be 'eps_continuation' or 'direct'")

    g0, g1 = gamma.sum(axis=1), gamma.sum(axis=0)
    sigma0, _ = split_arrays(g0, mu0.weights)
    sigma1, _ = split_arrays(g1, mu1.weights)
    dual = _feasible_dual_value(sigma0, sigma1, mu0.weights, mu1.weights, cost.values)
    plan = Plan(mu0.ground, mu1.ground, gamma)
    primal = value
    gap = primal - dual
    converged = gap <= 1e-6 * (1.0 + abs(primal))
    report = SolveReport(primal, dual, gap, iters, (0.0, 0.0), converged)
    return plan, report


# ---------------------------------------------------------------------------
# Identities between the regularisation conventions
# ---------------------------------------------------------------------------

def _plain_kl(gamma: np.ndarray, ref: np.ndarray) -> float:
    """sum gamma log(gamma/ref) - gamma, the convention without the +ref term."""
    pos = gamma > 0
    if np.any(pos & (ref <= 0)):
        return math.inf
    t = gamma[pos]
    return float(np.sum(t * np.log(t / ref[pos]) - t))


def check_remark_identities(mu0: DiscreteMeasure, mu1: DiscreteMeasure,
                            cost: CostMatrix, nu_x: Optional[Plan], eps: float,
                            seed: int = 0) -> dict:
    """Cross-check the three regularisation conventions and the homogeneity
    functional rewrite.

    Evaluates, at one converged plan, the value with the full divergence
    penalty, the variant with F(s) = s log s - s, and the variant that
    absorbs the cost into the reference exp(-c/eps) nu_X; returns the
    residuals of the affine relations tying them together.  Also compares
    the two algebraic forms of the mass-normalised product-reference
    penalty on a random plan.
    """
    if nu_x is None:
        nu_x = default_nu_x(mu0, mu1)
    cfg = SolverConfig(eps=eps, max_iters=50_000, tolerance=1e-12)
    plan, _, rep = solve_x_eps(mu0, mu1, cost, nu_x, cfg)
    g = plan.weights
    nu_w = nu_x.weights
    nu_mass = float(np.sum(nu_w))

    value = rep.primal
    marg_cost = value - eps * divergence_arrays(KL, g, nu_w)

    tilde_value = marg_cost + eps * _plain_kl(g, nu_w)
    residual_tilde = abs(value - (tilde_value + eps * nu_mass))

    bar_ref = np.where(np.isinf(cost.values), 0.0, np.exp(-np.minimum(cost.values, _EXP_CLIP) / eps)) * nu_w
    bar_marg = marg_cost - _coupling_value(cost.values, g)
    bar_value = bar_marg + eps * divergence_arrays(KL, g, bar_ref)
    residual_bar = abs(value - (bar_value - eps * float(np.sum(bar_ref)) + eps * nu_mass))

    # two forms of the homogeneity-preserving penalty, on a random plan
    rng = np.random.default_rng(seed)
    m0, m1 = mu0.total_mass, mu1.total_mass
    base = np.outer(mu0.weights, mu1.weights)
    gamma_rand = base * rng.uniform(0.25, 4.0, size=base.shape)
    half_form = 0.5 * (
        divergence_arrays(KL, gamma_rand, base / m0)
        + divergence_arrays(KL, gamma_rand, base / m1)
    )
    c0 = 0.5 * math.log(m0 * m1)
    c1 = 2.0 * m0 * m1 / (m0 + m1)
    sigma, _ = split_arrays(gamma_rand, base)
    pos = base > 0
    s = sigma[pos]
    g_form = float(np.sum(np.where(s > 0, s * np.log(np.where(s > 0, s, 1.0)), 0.0) * base[pos]))
    g_form += (c0 - 1.0) * float(np.sum(gamma_rand)) + float(np.sum(base)) / c1
    residual_g = abs(half_form - g_form)

    return {
        "uot_eps": value,
        "tilde_value": tilde_value,
        "bar_value": bar_value,
        "residual_tilde": residual_tilde,
        "residual_bar": residual_bar,
        "residual_g_forms": residual_g,
        "solver_gap": rep.gap,
    }
