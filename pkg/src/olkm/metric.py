"""Incrementally revealed metric spaces and assignment costs.

A :class:`MetricRegistry` holds the points of the metric space in arrival
order.  It is append-only: once a point has an id, that id and every pairwise
distance involving it are fixed forever.  Two modes are supported, Euclidean
coordinate vectors and explicit symmetric distance matrices (the latter is
what the adversarial graph/star constructions use).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PointId = int

MASS_TOL = 1e-8
TRIANGLE_TOL = 1e-9


class MetricError(ValueError):
    pass


class UnknownPointError(KeyError):
    pass


class MetricRegistry:
    """Append-only set of points with a distance oracle."""

    def __init__(self, mode: str = "euclidean"):
        if mode not in ("euclidean", "explicit"):
            raise MetricError(f"unknown mode {mode!r}")
        self.mode = mode
        self._coords: list[np.ndarray] = []
        self._coord_index: dict[bytes, int] = {}
        self._matrix: np.ndarray | None = None

    @classmethod
    def from_matrix(cls, matrix) -> "MetricRegistry":
        """Build an explicit registry from a symmetric distance matrix.

        Symmetry, zero diagonal, non-negativity and the triangle inequality
        are validated on load.
        """
        m = np.asarray(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise MetricError("distance matrix must be square")
        if not np.allclose(m, m.T, atol=TRIANGLE_TOL):
            raise MetricError("distance matrix must be symmetric")
        if np.any(np.diag(m) != 0):
            raise MetricError("distance matrix must have zero diagonal")
        if np.any(m < 0):
            raise MetricError("distances must be non-negative")
        for i in range(m.shape[0]):
            if np.any(m > m[i][None, :] + m[i][:, None] + 1e-9):
                raise MetricError("triangle inequality violated")
        reg = cls(mode="explicit")
        reg._matrix = m
        return reg

    def __len__(self) -> int:
        if self.mode == "explicit":
            return self._matrix.shape[0]
        return len(self._coords)

    def add_point(self, coords) -> PointId:
        """Register a Euclidean point, returning its id.

        Coinciding coordinates map to the existing id, so the registry is a
        set and ids are dense in first-arrival order.
        """
        if self.mode != "euclidean":
            raise MetricError("add_point is only available in euclidean mode")
        c = np.asarray(coords, dtype=float)
        if self._coords and c.shape != self._coords[0].shape:
            raise MetricError("all points must share one dimension")
        key = c.tobytes()
        existing = self._coord_index.get(key)
        if existing is not None:
            return existing
        pid = len(self._coords)
        self._coords.append(c)
        self._coord_index[key] = pid
        return pid

    def add_points(self, coords_list) -> list[PointId]:
        return [self.add_point(c) for c in coords_list]

    def coords(self, pid: PointId) -> np.ndarray:
        self._check(pid)
        return self._coords[pid]

    def _check(self, pid: PointId) -> None:
        if not 0 <= pid < len(self):
            raise UnknownPointError(pid)

    def distance(self, a: PointId, b: PointId) -> float:
        self._check(a)
        self._check(b)
        if self.mode == "explicit":
            return float(self._matrix[a, b])
        return float(np.linalg.norm(self._coords[a] - self._coords[b]))

    def dist_matrix(self, rows, cols) -> np.ndarray:
        """Pairwise distances between two id sequences, shape (|rows|, |cols|)."""
        r = np.asarray(rows, dtype=int)
        c = np.asarray(cols, dtype=int)
        n = len(self)
        if (r.size and (r.min() < 0 or r.max() >= n)) or (
            c.size and (c.min() < 0 or c.max() >= n)
        ):
            raise UnknownPointError("id out of range")
        if self.mode == "explicit":
            return self._matrix[np.ix_(r, c)]
        pts = np.asarray(self._coords)
        diff = pts[r][:, None, :] - pts[c][None, :, :]
        return np.sqrt((diff * diff).sum(axis=2))

    def aspect_ratio(self) -> float:
        """Max over min positive pairwise distance of all registered points."""
        n = len(self)
        if n < 2:
            raise MetricError("aspect ratio needs at least two points")
        d = self.dist_matrix(range(n), range(n))
        off = d[~np.eye(n, dtype=bool)]
        pos = off[off > 0]
        if pos.size == 0:
            raise MetricError("all points identical")
        return float(off.max() / pos.min())


@dataclass
class WeightedInstance:
    """One round's clients: (point id, positive weight) pairs."""

    members: list[tuple[PointId, float]]
    round: int = 0

    def __post_init__(self):
        if not self.members:
            raise MetricError("instance must be nonempty")
        for _, w in self.members:
            if w <= 0:
                raise MetricError("weights must be positive")

    @classmethod
    def unit(cls, ids, round: int = 0) -> "WeightedInstance":
        return cls([(int(i), 1.0) for i in ids], round=round)

    @property
    def ids(self) -> np.ndarray:
        return np.array([i for i, _ in self.members], dtype=int)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.members], dtype=float)

    def distinct_count(self, reg: MetricRegistry) -> int:
        """Number of geometrically distinct member points."""
        ids = np.unique(self.ids)
        if ids.size <= 1:
            return ids.size
        d = reg.dist_matrix(ids, ids)
        reps = [i for i in range(ids.size) if not np.any(d[i, :i] == 0)]
        return len(reps)


@dataclass(frozen=True)
class CenterSet:
    """Integral solution: between 1 and k distinct point ids."""

    centers: tuple[PointId, ...]

    def __post_init__(self):
        if len(self.centers) == 0:
            raise MetricError("center set must be nonempty")
        if len(set(self.centers)) != len(self.centers):
            raise MetricError("duplicate center ids")
        object.__setattr__(self, "centers", tuple(sorted(self.centers)))

    def __len__(self):
        return len(self.centers)

    def __contains__(self, pid):
        return pid in self.centers


@dataclass
class FractionalSolution:
    """Nonnegative mass over registry ids summing to k.

    ``ids[i]`` names the registry point carrying ``mass[i]``; ids are kept in
    reveal order.  The per-coordinate cap of 1 only binds when the capped
    simplex (rather than the plain scaled simplex) is in force.
    """

    ids: list[PointId]
    mass: np.ndarray
    k: int

    def __post_init__(self):
        self.mass = np.asarray(self.mass, dtype=float)
        if len(self.ids) != self.mass.size:
            raise MetricError("ids / mass length mismatch")

    def validate(self, box: bool = True) -> None:
        if np.any(self.mass < -MASS_TOL):
            raise MetricError("negative mass")
        if box and np.any(self.mass > 1 + MASS_TOL):
            raise MetricError("mass exceeds per-point cap")
        if abs(self.mass.sum() - self.k) > MASS_TOL:
            raise MetricError(
                f"total mass {self.mass.sum()} != k={self.k}"
            )

    def copy(self) -> "FractionalSolution":
        return FractionalSolution(list(self.ids), self.mass.copy(), self.k)

    @classmethod
    def indicator(cls, ids, k: int) -> "FractionalSolution":
        ids = list(ids)
        if len(ids) != k:
            raise MetricError("indicator needs exactly k ids")
        return cls(ids, np.ones(k), k)


def assignment_cost(reg: MetricRegistry, Y: CenterSet, x: PointId) -> float:
    """Distance from x to the nearest center in Y."""
    return float(reg.dist_matrix([x], Y.centers).min())


def instance_cost(reg: MetricRegistry, Y: CenterSet, R: WeightedInstance) -> float:
    """Weighted sum of assignment costs of R's members to Y."""
    d = reg.dist_matrix(R.ids, Y.centers).min(axis=1)
    return float(d @ R.weights)


def fractional_costs(reg: MetricRegistry, y: FractionalSolution, targets):
    """Fractional connection cost of every target point under y.

    Each target greedily consumes y-mass from its nearest carriers (ties
    broken by ascending id) until exactly one unit is assigned.  Returns
    ``(costs, thresholds)`` where ``thresholds[j]`` is the largest carrier
    distance receiving positive mass -- the M-value the subgradient needs.
    """
    targets = np.asarray(targets, dtype=int)
    total = y.mass.sum()
    if total < 1 - MASS_TOL:
        raise MetricError("total fractional mass below one unit")
    # pre-sort carriers by id so a stable distance sort breaks ties by id
    id_order = np.argsort(np.asarray(y.ids))
    ids_sorted = np.asarray(y.ids)[id_order]
    mass_sorted = y.mass[id_order]
    d = reg.dist_matrix(targets, ids_sorted)
    order = np.argsort(d, axis=1, kind="stable")
    d_ord = np.take_along_axis(d, order, axis=1)
    m_ord = mass_sorted[order]
    cums = np.cumsum(m_ord, axis=1)
    # greedy take: alpha_j = clip(1 - mass consumed before j, 0, m_j)
    alpha = np.clip(1.0 - (cums - m_ord), 0.0, m_ord)
    costs = (alpha * d_ord).sum(axis=1)
    pos = np.argmax(cums >= 1.0 - MASS_TOL, axis=1)
    thresholds = d_ord[np.arange(targets.size), pos]
    return costs, thresholds


def fractional_assignment_cost(
    reg: MetricRegistry,
    y: FractionalSolution,
    x: PointId,
    return_details: bool = False,
):
    """Fractional connection cost of a single point.

    With ``return_details`` also returns the greedy assignment vector alpha
    (aligned with ``y.ids``) and the threshold distance M.
    """
    if not return_details:
        costs, _ = fractional_costs(reg, y, [x])
        return float(costs[0])
    total = y.mass.sum()
    if total < 1 - MASS_TOL:
        raise MetricError("total fractional mass below one unit")
    ids = np.asarray(y.ids)
    d = reg.dist_matrix([x], ids)[0]
    order = np.lexsort((ids, d))
    alpha = np.zeros_like(y.mass)
    remaining = 1.0
    M = 0.0
    for j in order:
        if remaining <= MASS_TOL:
            break
        take = min(y.mass[j], remaining)
        if take > 0:
            alpha[j] = take
            remaining -= take
            M = d[j]
    cost = float(alpha @ d)
    return cost, alpha, float(M)


def aspect_ratio(reg: MetricRegistry) -> float:
    return reg.aspect_ratio()
