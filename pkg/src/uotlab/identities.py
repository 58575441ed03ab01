"""Balanced entropic transport variants on grid measures and their relations.

Three conventions for the same family of problems on probability measures
mu, nu over a uniform grid in R^d, with cost c(x, y) = |x - y|^2:

    V1 = min (c, g) + eps * H(g)           H(.) against the Lebesgue measure
    V2 = min (c, g) + eps * H(g | mu x nu)
    V3 = min eps * H(g | K)                K the heat kernel at time eps/2

all over couplings g of (mu, nu).  On the grid, the Lebesgue measure weights
each plan atom by cellVolume^2 and the relative entropy is discretised as
H(mu) = sum mu_i log(mu_i / cellVolume), which makes the relations

    V2 = V1 - eps * (H(mu) + H(nu))
    V3 = (1/2) * V1(2 eps) + (d eps / 2) * log(2 pi eps)

exact identities at any fixed coupling, hence exact at the optimum; the
optimal plans of the related problems coincide.  Each problem is solved by
log-domain balanced Sinkhorn with the matching reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class GridMeasure:
    """Probability weights over the cell centers of a uniform grid in R^d."""

    points: np.ndarray
    cell_volume: float
    weights: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        w = np.array(self.weights, dtype=float)
        if pts.ndim != 2 or w.shape != (pts.shape[0],):
            raise ValueError("points must be (cells, dim) with one weight per cell")
        if self.cell_volume <= 0:
            raise ValueError("cell volume must be positive")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("grid measures are probability measures")
        pts.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def grid_measure(n_per_side: int, dim: int, weights=None,
                 rng: Optional[np.random.Generator] = None,
                 box: float = 1.0) -> GridMeasure:
    """Uniform grid of cell centers over [0, box]^dim with given weights."""
    axes = [(np.arange(n_per_side) + 0.5) * (box / n_per_side)] * dim
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    cell_volume = (box / n_per_side) ** dim
    n = points.shape[0]
    if weights is None:
        if rng is None:
            w = np.full(n, 1.0 / n)
        else:
            w = rng.uniform(0.2, 1.0, size=n)
            w = w / w.sum()
    else:
        w = np.asarray(weights, dtype=float)
        w = w / w.sum()
    return GridMeasure(points, cell_volume, w)


def entropy_against_lebesgue(mu: GridMeasure) -> float:
    """Discretised differential entropy sum mu_i log(mu_i / cellVolume)."""
    w = mu.weights
    pos = w > 0
    return float(np.sum(w[pos] * np.log(w[pos] / mu.cell_volume)))


def _sq_cost(mu: GridMeasure, nu: GridMeasure) -> np.ndarray:
    diff = mu.points[:, None, :] - nu.points[None, :, :]
    return np.sum(diff * diff, axis=-1)


def _relative_entropy(gamma: np.ndarray, reference: np.ndarray) -> float:
    pos = gamma > 0
    return float(np.sum(gamma[pos] * np.log(gamma[pos] / reference[pos])))


# ---------------------------------------------------------------------------
# Balanced Sinkhorn with an explicit reference
# ---------------------------------------------------------------------------

def balanced_sinkhorn(mu_w: np.ndarray, nu_w: np.ndarray, cost: np.ndarray,
                      eps: float, reference: np.ndarray, tol: float = 1e-13,
                      max_iters: int = 200_000) -> tuple[np.ndarray, int, float]:
    """Solve min (c, g) + eps * H(g | reference) over couplings of (mu, nu).

    Log-domain scaling iterations on the kernel reference * exp(-c/eps);
    stops when the worst marginal deviation falls below ``tol``.  Returns
    (plan, iterations, residual).
    """
    with np.errstate(divide="ignore"):
        log_mu = np.log(mu_w)
        log_nu = np.log(nu_w)
        log_k = np.where(reference > 0, np.log(np.maximum(reference, 1e-300)), -math.inf)
    log_k = log_k - np.where(np.isinf(cost), math.inf, cost) / eps

    def lse(a, axis):
        amax = np.max(a, axis=axis, keepdims=True)
        safe = np.where(np.isfinite(amax), amax, 0.0)
        with np.errstate(divide="ignore"):
            out = np.log(np.sum(np.exp(a - safe), axis=axis)) + np.squeeze(safe, axis)
        return out

    f = np.zeros(mu_w.size)
    g = np.zeros(nu_w.size)
    residual = math.inf
    iters = 0
    for iters in range(1, max_iters + 1):
        f = log_mu - lse(g[None, :] + log_k, axis=1)
        g = log_nu - lse(f[:, None] + log_k, axis=0)
        if iters % 10 == 0 or iters == max_iters:
            gamma = np.exp(f[:, None] + g[None, :] + log_k)
            residual = max(
                float(np.max(np.abs(gamma.sum(axis=1) - mu_w))),
                float(np.max(np.abs(gamma.sum(axis=0) - nu_w))),
            )
            if residual <= tol:
                break
    gamma = np.exp(f[:, None] + g[None, :] + log_k)
    return gamma, iters, residual


# ---------------------------------------------------------------------------
# The three conventions
# ---------------------------------------------------------------------------

def w_eps_1(mu: GridMeasure, nu: GridMeasure, eps: float) -> tuple[float, np.ndarray]:
    """(c, g) + eps * H(g) with the plan-level Lebesgue weight cellVolume^2."""
    cost = _sq_cost(mu, nu)
    ref = np.full(cost.shape, mu.cell_volume * nu.cell_volume)
    gamma, _, res = balanced_sinkhorn(mu.weights, nu.weights, cost, eps, ref)
    value = float(np.sum(cost * gamma)) + eps * _relative_entropy(gamma, ref)
    return value, gamma


def w_eps_2(mu: GridMeasure, nu: GridMeasure, eps: float) -> tuple[float, np.ndarray]:
    """(c, g) + eps * H(g | mu x nu)."""
    cost = _sq_cost(mu, nu)
    ref = np.outer(mu.weights, nu.weights)
    gamma, _, res = balanced_sinkhorn(mu.weights, nu.weights, cost, eps, ref)
    value = float(np.sum(cost * gamma)) + eps * _relative_entropy(gamma, ref)
    return value, gamma


def w_eps_3(mu: GridMeasure, nu: GridMeasure, eps: float) -> tuple[float, np.ndarray]:
    """eps * H(g | K) against the heat-kernel reference at time eps/2."""
    cost = _sq_cost(mu, nu)
    d = mu.dim
    kernel = ((2.0 * math.pi * eps) ** (-d / 2.0)
              * np.exp(-cost / (2.0 * eps))
              * (mu.cell_volume * nu.cell_volume))
    gamma, _, res = balanced_sinkhorn(mu.weights, nu.weights, np.zeros_like(cost),
                                      eps, kernel)
    value = eps * _relative_entropy(gamma, kernel)
    return value, gamma


def verify_identities(mu: GridMeasure, nu: GridMeasure, eps: float) -> dict:
    """Residuals of the affine relations between the three conventions.

    Each problem is solved independently; the relations are algebraic at a
    fixed coupling with consistent references, so residuals sit at solver
    precision, and the optimal plans of matched problems coincide.
    """
    if mu.dim != nu.dim:
        raise ValueError("grid measures must share the ambient dimension")
    d = mu.dim
    v1, g1 = w_eps_1(mu, nu, eps)
    v2, g2 = w_eps_2(mu, nu, eps)
    v3, g3 = w_eps_3(mu, nu, eps)
    v1_2eps, g1_2eps = w_eps_1(mu, nu, 2.0 * eps)
    h_mu = entropy_against_lebesgue(mu)
    h_nu = entropy_against_lebesgue(nu)
    return {
        "w1": v1,
        "w2": v2,
        "w3": v3,
        "w1_double_eps": v1_2eps,
        "entropy_mu": h_mu,
        "entropy_nu": h_nu,
        "residual_w2": abs(v2 - (v1 - eps * (h_mu + h_nu))),
        "residual_w3": abs(v3 - (0.5 * v1_2eps + 0.5 * d * eps * math.log(2.0 * math.pi * eps))),
        "plan_residual_w2": float(np.max(np.abs(g2 - g1))),
        "plan_residual_w3": float(np.max(np.abs(g3 - g1_2eps))),
    }
