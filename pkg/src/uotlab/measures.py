"""Finitely supported measures on a metric ground set.

Measures are atomic only: a ground set is a finite point cloud in R^n and a
measure is a vector of nonnegative weights over those points.  Plans are
nonnegative matrices over pairs of ground sets.  Continuous singular parts
reduce, in this setting, to atoms sitting where a reference measure has zero
weight, which keeps every Lebesgue decomposition exact.

All types are immutable after construction (weight arrays are frozen), so
values can be shared freely across threads.  Ground sets are compared by
object identity: two measures interoperate only if they were built on the
same GroundSet instance, which prevents silently mixing supports.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


class GroundMismatchError(ValueError):
    """Raised when an operation mixes measures living on different grounds."""


def _frozen_array(values, ndim: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must contain finite values")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class GroundSet:
    """Finite point cloud in R^n with a named metric (only 'euclidean')."""

    points: np.ndarray
    metric: str = "euclidean"

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError("points must be a nonempty (count, dim) array")
        if self.metric != "euclidean":
            raise ValueError(f"unsupported metric: {self.metric!r}")
        # pairwise-distinct points; duplicates would make atoms ambiguous
        if len({tuple(p) for p in pts}) != pts.shape[0]:
            raise ValueError("ground set points must be pairwise distinct")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def distances_to(self, other: "GroundSet") -> np.ndarray:
        """Euclidean distance matrix between this ground set and another."""
        diff = self.points[:, None, :] - other.points[None, :, :]
        return np.sqrt(np.sum(diff * diff, axis=-1))


@dataclass(frozen=True)
class DiscreteMeasure:
    """Nonnegative weights over the points of a ground set."""

    ground: GroundSet
    weights: np.ndarray

    def __post_init__(self):
        w = _frozen_array(self.weights, 1, "weights")
        if w.shape[0] != self.ground.size:
            raise ValueError(
                f"weight count {w.shape[0]} does not match ground size {self.ground.size}"
            )
        if np.any(w < 0):
            raise ValueError("measure weights must be nonnegative")
        object.__setattr__(self, "weights", w)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))


@dataclass(frozen=True)
class Plan:
    """Nonnegative matrix of weights over pairs of two ground sets."""

    row_ground: GroundSet
    col_ground: GroundSet
    weights: np.ndarray

    def __post_init__(self):
        w = _frozen_array(self.weights, 2, "weights")
        if w.shape != (self.row_ground.size, self.col_ground.size):
            raise ValueError(
                f"plan shape {w.shape} does not match grounds "
                f"({self.row_ground.size}, {self.col_ground.size})"
            )
        if np.any(w < 0):
            raise ValueError("plan weights must be nonnegative")
        object.__setattr__(self, "weights", w)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))


@dataclass(frozen=True)
class LebesgueSplit:
    """Atomwise decomposition measure = density * reference + singular part.

    The density is only meaningful where the reference has positive weight;
    the singular part carries exactly the mass sitting on reference-null
    atoms, so the reconstruction is exact.
    """

    density: np.ndarray
    singular_part: DiscreteMeasure

    def __post_init__(self):
        d = _frozen_array(self.density, 1, "density")
        object.__setattr__(self, "density", d)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def marginal(plan: Plan, index: int) -> DiscreteMeasure:
    """Project a plan to one of its sides by summing over the other."""
    if index == 0:
        return DiscreteMeasure(plan.row_ground, np.sum(plan.weights, axis=1))
    if index == 1:
        return DiscreteMeasure(plan.col_ground, np.sum(plan.weights, axis=0))
    raise ValueError("marginal index must be 0 or 1")


def lebesgue_split(measure: DiscreteMeasure, reference: DiscreteMeasure) -> LebesgueSplit:
    """Decompose `measure` against `reference` atomwise.

    Returns density d and singular part s with measure = d * reference + s,
    where s vanishes on every atom charged by the reference.
    """
    if measure.ground is not reference.ground:
        raise GroundMismatchError("lebesgue_split requires a shared ground set")
    ref = reference.weights
    m = measure.weights
    pos = ref > 0
    density = np.zeros_like(m)
    np.divide(m, ref, out=density, where=pos)
    singular = np.where(pos, 0.0, m)
    return LebesgueSplit(density, DiscreteMeasure(measure.ground, singular))


def split_arrays(measure: np.ndarray, reference: np.ndarray):
    """Array-level Lebesgue split used by the functional evaluators.

    Works for measures and plans alike; returns (density, singular) with
    measure = density * reference + singular elementwise.
    """
    pos = reference > 0
    density = np.zeros_like(measure, dtype=float)
    np.divide(measure, reference, out=density, where=pos)
    singular = np.where(pos, 0.0, measure)
    return density, singular


def product(mu0: DiscreteMeasure, mu1: DiscreteMeasure) -> Plan:
    """Product measure mu0 (x) mu1 as a plan over the two grounds."""
    return Plan(mu0.ground, mu1.ground, np.outer(mu0.weights, mu1.weights))


def mass(obj) -> float:
    """Total mass of a measure or plan (sum of weights)."""
    if isinstance(obj, (DiscreteMeasure, Plan)):
        return obj.total_mass
    return float(np.sum(np.asarray(obj, dtype=float)))


# ---------------------------------------------------------------------------
# Serialization: measures as {"points": ..., "weights": ...}, plans as
# {"rows": ..., "cols": ..., "weights": ...}
# ---------------------------------------------------------------------------

def measure_to_dict(measure: DiscreteMeasure) -> dict:
    return {
        "points": measure.ground.points.tolist(),
        "weights": measure.weights.tolist(),
    }


def measure_from_dict(data: dict) -> DiscreteMeasure:
    try:
        ground = GroundSet(np.array(data["points"], dtype=float))
        return DiscreteMeasure(ground, np.array(data["weights"], dtype=float))
    except KeyError as exc:
        raise ValueError(f"measure object is missing field {exc}") from exc


def plan_to_dict(plan: Plan) -> dict:
    return {
        "rows": plan.row_ground.size,
        "cols": plan.col_ground.size,
        "weights": plan.weights.tolist(),
    }


def plan_weights_from_dict(data: dict) -> np.ndarray:
    """Plan weights from the wire format; grounds are supplied separately."""
    try:
        w = np.array(data["weights"], dtype=float)
        if w.shape != (int(data["rows"]), int(data["cols"])):
            raise ValueError(
                f"plan weights shape {w.shape} does not match rows/cols "
                f"({data['rows']}, {data['cols']})"
            )
    except KeyError as exc:
        raise ValueError(f"plan object is missing field {exc}") from exc
    return w


def load_measure(path) -> DiscreteMeasure:
    with open(path, "r", encoding="utf-8") as fh:
        return measure_from_dict(json.load(fh))


def save_measure(measure: DiscreteMeasure, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(measure_to_dict(measure), fh, sort_keys=True, indent=2)
        fh.write("\n")
