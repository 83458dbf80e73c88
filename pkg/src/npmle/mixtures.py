"""Finite atomic probability measures on the line.

A :class:`DiscreteMixture` is the pair (weights, sorted locations). It is the
state and output type of every solver in the package, and the object that
certificates talk about.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    AtomCountMismatch,
    DuplicateLocation,
    NonPositiveWeight,
    WeightSumMismatch,
)

WEIGHT_SUM_INPUT_TOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DiscreteMixture:
    """Mixture sum_j p_j delta_{y_j} with y_1 < ... < y_k.

    Use :func:`make_mixture` to build one from user input. The constructor
    itself only checks shapes, positivity and ordering, so the Newton solver
    can carry iterates whose weights are off the simplex by rounding error.
    """

    weights: np.ndarray
    locations: np.ndarray

    def __post_init__(self) -> None:
        w = _frozen(self.weights).reshape(-1)
        y = _frozen(self.locations).reshape(-1)
        if w.shape != y.shape or w.size == 0:
            raise ValueError("weights and locations must be non-empty and of equal length")
        if not np.all(np.isfinite(w)) or not np.all(np.isfinite(y)):
            raise ValueError("weights and locations must be finite")
        if np.any(w <= 0):
            raise NonPositiveWeight(f"weights must be > 0, got min {w.min():.3e}")
        if y.size > 1 and np.any(np.diff(y) <= 0):
            raise DuplicateLocation("locations must be strictly increasing")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "locations", y)

    @property
    def k(self) -> int:
        return int(self.weights.size)

    def __len__(self) -> int:
        return self.k

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DiscreteMixture):
            return NotImplemented
        return bool(
            np.array_equal(self.weights, other.weights)
            and np.array_equal(self.locations, other.locations)
        )

    def __hash__(self) -> int:
        return hash((self.weights.tobytes(), self.locations.tobytes()))

    def __repr__(self) -> str:
        atoms = ", ".join(f"{p:.6g}@{y:.6g}" for p, y in zip(self.weights, self.locations))
        return f"DiscreteMixture({atoms})"

    def theta(self) -> np.ndarray:
        """Concatenated parameter vector (p_1..p_k, y_1..y_k)."""
        return np.concatenate([self.weights, self.locations])

    def mean(self) -> float:
        return float(np.dot(self.weights, self.locations))

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "locations": self.locations.tolist()}


@dataclass(frozen=True)
class SeparationStats:
    delta: float
    min_gap: float
    min_weight: float


def make_mixture(weights: Sequence[float], locations: Sequence[float]) -> DiscreteMixture:
    """Validate, sort and (lightly) renormalize a mixture.

    >>> make_mixture([0.5, 0.5], [1.0, -1.0]).locations.tolist()
    [-1.0, 1.0]
    """
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    y = np.asarray(locations, dtype=np.float64).reshape(-1)
    if w.shape != y.shape or w.size == 0:
        raise ValueError("weights and locations must be non-empty and of equal length")
    if np.any(w <= 0):
        raise NonPositiveWeight(f"weights must be > 0, got min {w.min():.3e}")
    total = float(w.sum())
    if abs(total - 1.0) >= WEIGHT_SUM_INPUT_TOL:
        raise WeightSumMismatch(f"weights sum to {total!r}")
    order = np.argsort(y, kind="stable")
    w, y = w[order], y[order]
    if y.size > 1 and np.any(np.diff(y) == 0):
        raise DuplicateLocation("coincident locations")
    return DiscreteMixture(w / total, y)


def point_mass(y: float) -> DiscreteMixture:
    return DiscreteMixture(np.array([1.0]), np.array([float(y)]))


def w1_distance(a: DiscreteMixture, b: DiscreteMixture) -> float:
    """Exact W1 on the line: integral of |F_a - F_b| between breakpoints."""
    pts = np.concatenate([a.locations, b.locations])
    mass = np.concatenate([a.weights / a.weights.sum(), -b.weights / b.weights.sum()])
    order = np.argsort(pts, kind="stable")
    pts, mass = pts[order], mass[order]
    diff_cdf = np.cumsum(mass)[:-1]
    return float(np.sum(np.abs(diff_cdf) * np.diff(pts)))


def param_distance(a: DiscreteMixture, b: DiscreteMixture) -> float:
    """Euclidean distance between (p, y) parameter vectors of equal k."""
    if a.k != b.k:
        raise AtomCountMismatch(f"k={a.k} vs k={b.k}")
    return float(np.linalg.norm(a.theta() - b.theta()))


def hausdorff_support_distance(a: DiscreteMixture, b: DiscreteMixture) -> float:
    d = np.abs(a.locations[:, None] - b.locations[None, :])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def merge_adjacent(m: DiscreteMixture, max_gap: float) -> DiscreteMixture:
    """Collapse runs of atoms with consecutive gaps <= max_gap.

    Each run becomes one atom at its weight-normalized mean, so mass and the
    first moment are both preserved.
    """
    if not max_gap > 0:
        raise ValueError("max_gap must be > 0")
    if m.k == 1:
        return m
    breaks = np.flatnonzero(np.diff(m.locations) > max_gap) + 1
    starts = np.concatenate([[0], breaks])
    if starts.size == m.k:
        return m
    w = np.add.reduceat(m.weights, starts)
    wy = np.add.reduceat(m.weights * m.locations, starts)
    y = wy / w
    # runs keep their order, but guard against rounding producing ties
    if y.size > 1 and np.any(np.diff(y) <= 0):
        raise DuplicateLocation("merge produced coincident atoms")
    return DiscreteMixture(w, y)


def separation_stats(m: DiscreteMixture) -> SeparationStats:
    if m.k == 1:
        return SeparationStats(delta=float("inf"), min_gap=float("inf"), min_weight=float(m.weights[0]))
    gaps = np.diff(m.locations)
    left = np.concatenate([[np.inf], gaps])
    right = np.concatenate([gaps, [np.inf]])
    nearest = np.minimum(left, right)
    return SeparationStats(
        delta=float(np.min(m.weights * nearest)),
        min_gap=float(gaps.min()),
        min_weight=float(m.weights.min()),
    )
