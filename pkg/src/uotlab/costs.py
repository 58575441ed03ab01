"""Ground costs and marginal perspective cost functions.

The marginal perspective cost of a pair of radial values (s0, s1) at ground
cost c is the shared-scale infimum

    H(s0, s1, c) = inf_{t>0} t * (R(s0/t) + R(s1/t) + c),

which for KL reverse entropies has the closed form
``s0 + s1 - 2 sqrt(s0 s1) exp(-c/2)``.  Its regularised counterpart adds a
third radial value S weighted by eps inside the infimum and closes to

    H_eps(s0, s1, S, c) = s0 + s1 + eps*S
        - (2+eps) * (s0 s1)^(1/(2+eps)) * S^(eps/(2+eps)) * exp(-c/(2+eps)).

Both are 1-homogeneous in their radial arguments.  Conventions:

* if any base in the product term is 0, the whole product term is 0 (the
  t -> 0 limit of the defining infimum at degenerate radial values);
* +inf costs short-circuit, the exponential factor is exactly 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .entropy import KL, EntropyFunction, EntropyKind
from .measures import GroundSet

HALF_PI = math.pi / 2.0


@dataclass(frozen=True)
class CostMatrix:
    """Extended-real cost matrix over point pairs of two ground sets."""

    values: np.ndarray
    provenance: str = "custom"

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("cost matrix must be 2-dimensional")
        if np.any(np.isnan(v)) or np.any(v < 0):
            raise ValueError("cost entries must be >= 0 or +inf")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape


def hk_cost(d):
    """Cone-type cost -log(cos^2 d) for d < pi/2, +inf beyond."""
    arr = np.asarray(d, dtype=float)
    scalar = arr.ndim == 0
    if np.any(arr < 0):
        raise ValueError("distances must be nonnegative")
    inside = arr < HALF_PI
    with np.errstate(divide="ignore", invalid="ignore"):
        cos2 = np.cos(np.where(inside, arr, 0.0)) ** 2
        out = np.where(inside, -np.log(cos2), math.inf)
    return float(out) if scalar else out


def sqeuclidean_matrix(g0: GroundSet, g1: GroundSet) -> CostMatrix:
    d = g0.distances_to(g1)
    return CostMatrix(d * d, provenance="squared_euclidean")


def hk_matrix(g0: GroundSet, g1: GroundSet) -> CostMatrix:
    return CostMatrix(hk_cost(g0.distances_to(g1)), provenance="hellinger_kantorovich")


# ---------------------------------------------------------------------------
# Perspective costs
# ---------------------------------------------------------------------------

def perspective_H(s0, s1, c, entropy: EntropyFunction = KL):
    """Marginal perspective cost H(s0, s1, c); vectorized over arrays."""
    a0, a1, cc = np.broadcast_arrays(
        np.asarray(s0, dtype=float), np.asarray(s1, dtype=float), np.asarray(c, dtype=float)
    )
    scalar = a0.ndim == 0
    if np.any(a0 < 0) or np.any(a1 < 0):
        raise ValueError("radial arguments must be nonnegative")
    if entropy.kind is EntropyKind.KL:
        infc = np.isinf(cc)
        expf = np.where(infc, 0.0, np.exp(-np.where(infc, 0.0, cc) / 2.0))
        out = np.maximum(a0 + a1 - 2.0 * np.sqrt(a0 * a1) * expf, 0.0)
    else:
        # sharp marginals force a common scale: a*c on the diagonal, else +inf
        diag = a0 == a1
        prod = np.where(diag & (a0 == 0), 0.0, np.where(a0 == 0, 1.0, a0) * cc)
        out = np.where(diag, prod, np.inf)
    return float(out) if scalar else out


def perspective_H_eps(s0, s1, S, c, eps: float):
    """Regularised marginal perspective cost H_eps(s0, s1, S, c) for KL."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    a0, a1, aS, cc = np.broadcast_arrays(
        np.asarray(s0, dtype=float),
        np.asarray(s1, dtype=float),
        np.asarray(S, dtype=float),
        np.asarray(c, dtype=float),
    )
    scalar = a0.ndim == 0
    if np.any(a0 < 0) or np.any(a1 < 0) or np.any(aS < 0):
        raise ValueError("radial arguments must be nonnegative")
    q = 2.0 + eps
    degenerate = (a0 == 0) | (a1 == 0) | (aS == 0) | np.isinf(cc)
    safe0 = np.where(degenerate, 1.0, a0)
    safe1 = np.where(degenerate, 1.0, a1)
    safeS = np.where(degenerate, 1.0, aS)
    safec = np.where(degenerate, 0.0, cc)
    term = np.where(
        degenerate,
        0.0,
        q * np.exp((np.log(safe0) + np.log(safe1) + eps * np.log(safeS) - safec) / q),
    )
    out = np.maximum(a0 + a1 + eps * aS - term, 0.0)
    return float(out) if scalar else out


def perspective_H_p(x0_idx, s0, x1_idx, s1, cost: CostMatrix, p: float,
                    entropy: EntropyFunction = KL):
    """p-th power perspective cost H_p(y0, y1) = H(x0, s0^p, x1, s1^p)."""
    if p <= 0:
        raise ValueError("p must be positive")
    c = cost.values[np.asarray(x0_idx), np.asarray(x1_idx)]
    return perspective_H(np.asarray(s0, dtype=float) ** p, np.asarray(s1, dtype=float) ** p, c, entropy)


def perspective_H_p_eps(x0_idx, s0, x1_idx, s1, S, cost: CostMatrix, p: float, eps: float):
    """Regularised p-th power perspective cost H_eps(x0, s0^p, x1, s1^p, S^p)."""
    if p <= 0:
        raise ValueError("p must be positive")
    c = cost.values[np.asarray(x0_idx), np.asarray(x1_idx)]
    return perspective_H_eps(
        np.asarray(s0, dtype=float) ** p,
        np.asarray(s1, dtype=float) ** p,
        np.asarray(S, dtype=float) ** p,
        c,
        eps,
    )


def second_order_H_tilde(s0, s1, w0, w1, H_val):
    """Second-order perspective: w0 * H when the density pair agrees, else +inf.

    A zero shared density annihilates the cost even when H is +inf (the
    contribution of a null set).
    """
    a0, a1, b0, b1, h = np.broadcast_arrays(
        np.asarray(s0, dtype=float),
        np.asarray(s1, dtype=float),
        np.asarray(w0, dtype=float),
        np.asarray(w1, dtype=float),
        np.asarray(H_val, dtype=float),
    )
    scalar = a0.ndim == 0
    if np.any(a0 < 0) or np.any(a1 < 0):
        raise ValueError("radial arguments must be nonnegative")
    if np.any(b0 < 0) or np.any(b1 < 0):
        raise ValueError("density arguments must be nonnegative")
    agree = b0 == b1
    prod = np.where(b0 == 0, 0.0, np.where(b0 == 0, 1.0, b0) * h)
    out = np.where(agree, prod, np.inf)
    return float(out) if scalar else out
