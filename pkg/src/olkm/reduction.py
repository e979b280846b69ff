"""Online conversion of a raw round into a k-point weighted proxy instance.

Each arriving instance is summarized by k centers chosen from its own
points; every client is folded into its nearest center, and the center's
weight is the cluster size divided by the summarizing solution's cost.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import offline
from .metric import MetricError, MetricRegistry, WeightedInstance


@dataclass
class ReducedRound:
    """The k-point proxy for one round."""

    instance: WeightedInstance
    source_cost: float
    cluster_sizes: list[int]


def reduce_instance(
    reg: MetricRegistry,
    V: WeightedInstance,
    k: int,
    solver: str = "auto",
    seed: int = 0,
) -> ReducedRound:
    """Summarize a unit-weight instance into exactly k weighted centers.

    Requires at least k+1 distinct points so the summarizing cost is
    positive.  Centers always come from V itself; if the offline solver
    collapses coincident points below k centers, the farthest unused
    distinct points of V are swapped in.
    """
    if np.any(V.weights != 1.0):
        raise MetricError("reduction expects a raw unit-weight instance")
    distinct = offline.dedupe_pool(reg, V.ids)
    if len(distinct) < k + 1:
        raise MetricError(
            f"need at least k+1={k + 1} distinct points, got {len(distinct)}"
        )
    sol = offline.solve(reg, V, k, V.ids, method=solver, seed=seed)
    centers = list(sol.centers.centers)
    if len(centers) < k:
        centers = _pad_centers(reg, centers, distinct, k)
    centers = sorted(centers)

    d = reg.dist_matrix(V.ids, centers)
    # nearest center, ties to the lowest center id (centers are sorted)
    assign = np.argmin(d, axis=1)
    source_cost = float(d[np.arange(len(V.ids)), assign].sum())
    if source_cost <= 0:
        raise MetricError("summarizing cost is zero despite k+1 distinct points")
    sizes = np.bincount(assign, minlength=k)
    # every cluster is nonempty: each center is a point of V and is its own
    # nearest center, centers being pairwise at positive distance
    members = [(centers[i], sizes[i] / source_cost) for i in range(k)]
    instance = WeightedInstance(members, round=V.round)
    if len(instance.members) != k:
        raise MetricError("reduced instance does not have exactly k members")
    return ReducedRound(
        instance=instance,
        source_cost=source_cost,
        cluster_sizes=[int(s) for s in sizes],
    )


def _pad_centers(reg, centers, distinct, k):
    """Add the farthest unused distinct points until k centers exist."""
    centers = list(centers)
    unused = [p for p in distinct if p not in centers]
    while len(centers) < k and unused:
        d = reg.dist_matrix(unused, centers).min(axis=1)
        far = int(np.argmax(d))
        centers.append(unused.pop(far))
    if len(centers) < k:
        raise MetricError("not enough distinct points to reach k centers")
    return centers
