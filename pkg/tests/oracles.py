"""Independent numerical oracles used to cross-check closed forms and solvers.

Everything here is deliberately self-contained: the reverse entropy, the
shared-scale objectives and the generic optimisers are written from their
definitions rather than imported from the package, so an agreement test
exercises two genuinely different computational routes.
"""

import math

import numpy as np

_INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def reverse_kl(s: float) -> float:
    """Reverse KL entropy s - log s - 1 with the boundary value +inf."""
    if s < 0:
        raise ValueError("negative argument")
    if s == 0.0:
        return math.inf
    return s - math.log(s) - 1.0


def golden_section(f, lo: float, hi: float, iters: int = 200) -> tuple[float, float]:
    """Minimise a unimodal function on [lo, hi] by golden-section search."""
    a, b = lo, hi
    x1 = b - _INV_GOLDEN * (b - a)
    x2 = a + _INV_GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INV_GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INV_GOLDEN * (b - a)
            f2 = f(x2)
    xm = 0.5 * (a + b)
    return xm, f(xm)


def h_by_minimization(s0: float, s1: float, c: float) -> float:
    """inf_t t (R(s0/t) + R(s1/t) + c) over the shared scale t > 0."""
    t_max = 10.0 * max(s0, s1, 1.0)

    def objective(t):
        return t * (reverse_kl(s0 / t) + reverse_kl(s1 / t) + c)

    _, val = golden_section(objective, 1e-12, t_max)
    return val


def h_eps_by_minimization(s0: float, s1: float, S: float, c: float, eps: float) -> float:
    """inf_t t (R(s0/t) + R(s1/t) + eps R(S/t) + c)."""
    t_max = 10.0 * max(s0, s1, S, 1.0)

    def objective(t):
        return t * (reverse_kl(s0 / t) + reverse_kl(s1 / t)
                    + eps * reverse_kl(S / t) + c)

    _, val = golden_section(objective, 1e-12, t_max)
    return val


def h_eps_by_dual_ascent(s0: float, s1: float, S: float, c: float, eps: float,
                         rounds: int = 60) -> float:
    """Coordinate ascent on the concave two-potential dual of the
    regularised shared-scale cost."""

    def objective(phi0, phi1):
        return (s0 * (1.0 - math.exp(-phi0)) + s1 * (1.0 - math.exp(-phi1))
                - eps * S * (math.exp((phi0 + phi1 - c) / eps) - 1.0))

    phi0 = phi1 = 0.0
    span = 5.0 + abs(c)
    for _ in range(rounds):
        phi0, _ = golden_section(lambda t: -objective(t, phi1), -span, span, iters=120)
        phi1, _ = golden_section(lambda t: -objective(phi0, t), -span, span, iters=120)
    return objective(phi0, phi1)


def projected_gradient(value, grad, x0: np.ndarray, iters: int = 50_000,
                       grad_tol: float = 1e-13) -> tuple[np.ndarray, float]:
    """Generic projected gradient descent onto the nonnegative orthant with
    Armijo backtracking."""
    x = np.array(x0, dtype=float)
    fx = value(x)
    step = 1.0
    stalled = 0
    for _ in range(iters):
        g = grad(x)
        ref = np.maximum(x - g, 0.0)
        if float(np.max(np.abs(ref - x))) <= grad_tol * (1.0 + float(np.max(np.abs(x)))):
            break
        moved = False
        prev = fx
        for _ in range(70):
            trial = np.maximum(x - step * g, 0.0)
            if not np.any(trial != x):
                break  # below float resolution
            ft = value(trial)
            if ft <= fx + 1e-4 * float(np.sum(g * (trial - x))):
                x, fx = trial, ft
                step = min(step * 2.0, 1e8)
                moved = True
                break
            step *= 0.5
        if not moved:
            break
        stalled = stalled + 1 if fx >= prev - 1e-14 * (1.0 + abs(prev)) else 0
        if stalled >= 30:
            break
    return x, fx


def constrained_minimize(value, grad, a_mat: np.ndarray, b: np.ndarray,
                         x0: np.ndarray, inner: int = 4000) -> tuple[np.ndarray, float]:
    """Augmented-Lagrangian loop for min f(x) s.t. A x = b, x >= 0.

    Bounds are handled by projected gradient on each subproblem; each penalty
    level runs several multiplier updates before the penalty grows, which
    keeps the subproblems well-conditioned.
    """
    x = np.array(x0, dtype=float)
    y = np.zeros(b.size)
    for rho in (1e1, 1e2, 1e3, 1e4, 1e4, 1e5, 1e5, 1e6, 1e6, 1e6):
        for _ in range(8):
            def al_value(z):
                r = a_mat @ z - b
                return value(z) + float(y @ r) + 0.5 * rho * float(r @ r)

            def al_grad(z):
                r = a_mat @ z - b
                return grad(z) + a_mat.T @ (y + rho * r)

            x, _ = projected_gradient(al_value, al_grad, x, iters=inner, grad_tol=1e-14)
            r = a_mat @ x - b
            y = y + rho * r
            if float(np.max(np.abs(r))) < 1e-11:
                break
    return x, value(x)


def bisect(f, lo: float, hi: float, iters: int = 200) -> float:
    """Root of an increasing scalar function by plain bisection."""
    flo, fhi = f(lo), f(hi)
    if flo > 0 or fhi < 0:
        raise ValueError("root not bracketed")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if f(mid) <= 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
