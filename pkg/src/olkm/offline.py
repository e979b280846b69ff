"""Offline k-median solvers.

``solve_exact`` enumerates all size-k subsets of a candidate pool and is the
ground truth at desk scale.  ``solve_local_search`` is the classical
single-swap heuristic used where enumeration is out of budget, and is also
the constant-factor approximation the online reduction relies on.
"""
from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .metric import CenterSet, MetricError, MetricRegistry, WeightedInstance

DEFAULT_SUBSET_BUDGET = 5_000_000


class BudgetExceededError(MetricError):
    """Raised when subset enumeration would exceed the configured budget."""


def subset_budget() -> int:
    raw = os.environ.get("OLKM_SUBSET_BUDGET")
    return int(raw) if raw else DEFAULT_SUBSET_BUDGET


@dataclass
class KMedianSolution:
    centers: CenterSet
    cost: float
    exact: bool


@lru_cache(maxsize=32)
def _combinations(n: int, k: int) -> np.ndarray:
    return np.array(list(itertools.combinations(range(n), k)), dtype=np.int64)


def dedupe_pool(reg: MetricRegistry, ids) -> list[int]:
    """Collapse zero-distance duplicates to the lowest id, sorted ascending."""
    ids = sorted(set(int(i) for i in ids))
    if len(ids) <= 1:
        return ids
    d = reg.dist_matrix(ids, ids)
    keep = []
    for i in range(len(ids)):
        if not any(d[i, j] == 0 for j in range(i)):
            keep.append(ids[i])
    return keep


def solve_exact(
    reg: MetricRegistry,
    R: WeightedInstance,
    k: int,
    candidate_pool,
    budget: int | None = None,
) -> KMedianSolution:
    """Minimum-cost size-k subset of the pool, ties broken lexicographically."""
    pool = dedupe_pool(reg, candidate_pool)
    if not pool:
        raise MetricError("empty candidate pool")
    if len(pool) < k:
        raise MetricError(f"pool smaller than k={k}")
    budget = subset_budget() if budget is None else budget
    if math.comb(len(pool), k) > budget:
        raise BudgetExceededError(
            f"C({len(pool)},{k}) exceeds budget {budget}; use local search"
        )
    combos = _combinations(len(pool), k)
    d = reg.dist_matrix(pool, R.ids)
    # combos are lexicographic, argmin returns the first minimizer
    costs = d[combos].min(axis=1) @ R.weights
    best = int(np.argmin(costs))
    centers = CenterSet(tuple(pool[j] for j in combos[best]))
    return KMedianSolution(centers, float(costs[best]), exact=True)


def _farthest_point_seed(d: np.ndarray, k: int) -> list[int]:
    """Greedy farthest-point traversal over pool indices, starting at 0."""
    chosen = [0]
    mind = d[0].copy()
    while len(chosen) < k:
        nxt = int(np.argmax(mind))
        chosen.append(nxt)
        mind = np.minimum(mind, d[nxt])
    return chosen


def solve_local_search(
    reg: MetricRegistry,
    R: WeightedInstance,
    k: int,
    candidate_pool,
    seed: int = 0,
    rel_tol: float = 1e-6,
) -> KMedianSolution:
    """Best-improvement single-swap local search.

    Deterministic: seeding is farthest-point traversal from the lowest pool
    id and the best improving swap is applied each pass, so the seed argument
    only exists for interface parity with randomized solvers.
    """
    pool = dedupe_pool(reg, candidate_pool)
    if len(pool) < k:
        raise MetricError(f"pool smaller than k={k}")
    d = reg.dist_matrix(pool, pool)
    dc = reg.dist_matrix(pool, R.ids)
    w = R.weights

    def cost_of(indices) -> float:
        return float(dc[list(indices)].min(axis=0) @ w)

    current = _farthest_point_seed(d, k)
    cur_cost = cost_of(current)
    improved = True
    while improved:
        improved = False
        best_swap = None
        best_cost = cur_cost
        in_set = set(current)
        for out_pos in range(k):
            rest = current[:out_pos] + current[out_pos + 1 :]
            rest_min = (
                dc[rest].min(axis=0) if rest else np.full(len(R.ids), np.inf)
            )
            for cand in range(len(pool)):
                if cand in in_set:
                    continue
                c = float(np.minimum(rest_min, dc[cand]) @ w)
                if c < best_cost:
                    best_cost = c
                    best_swap = (out_pos, cand)
        if best_swap is not None and best_cost < cur_cost * (1 - rel_tol):
            out_pos, cand = best_swap
            current[out_pos] = cand
            cur_cost = best_cost
            improved = True
    centers = CenterSet(tuple(pool[j] for j in current))
    return KMedianSolution(centers, cost_of(current), exact=False)


def solve(
    reg, R, k, candidate_pool, method: str = "auto", seed: int = 0
) -> KMedianSolution:
    """Exact when the pool is small, local search otherwise."""
    pool = dedupe_pool(reg, candidate_pool)
    if method == "exact" or (method == "auto" and len(pool) <= 12):
        try:
            return solve_exact(reg, R, k, pool)
        except BudgetExceededError:
            if method == "exact":
                raise
    return solve_local_search(reg, R, k, pool, seed=seed)


def hindsight_optimum(
    reg: MetricRegistry,
    rounds: list[WeightedInstance],
    k: int,
    objective: str = "sum_ratio",
    opt_values: list[float] | None = None,
    candidate_pool=None,
) -> KMedianSolution:
    """Best fixed size-k center set over a whole round sequence.

    With ``sum_ratio`` the per-round costs are divided by the supplied (or
    internally computed) per-round optima; ``sum_cost`` sums raw costs, which
    is the benchmark of the reduced problem.
    """
    if objective not in ("sum_ratio", "sum_cost"):
        raise MetricError(f"unknown objective {objective!r}")
    if candidate_pool is None:
        candidate_pool = sorted({int(i) for R in rounds for i in R.ids})
    pool = dedupe_pool(reg, candidate_pool)
    if objective == "sum_ratio" and opt_values is None:
        opt_values = []
        for R in rounds:
            opt_values.append(solve(reg, R, k, pool).cost)
    try:
        if math.comb(len(pool), k) > subset_budget():
            raise BudgetExceededError("hindsight pool too large")
        combos = _combinations(len(pool), k)
        totals = np.zeros(len(combos))
        for idx, R in enumerate(rounds):
            d = reg.dist_matrix(pool, R.ids)
            costs = d[combos].min(axis=1) @ R.weights
            if objective == "sum_ratio":
                opt = opt_values[idx]
                if opt <= 0:
                    raise MetricError("per-round optimum is zero")
                costs = costs / opt
            totals += costs
        best = int(np.argmin(totals))
        centers = CenterSet(tuple(pool[j] for j in combos[best]))
        return KMedianSolution(centers, float(totals[best]), exact=True)
    except BudgetExceededError:
        # aggregate the rounds into one weighted instance and local search
        agg: dict[int, float] = {}
        for idx, R in enumerate(rounds):
            scale = 1.0 / opt_values[idx] if objective == "sum_ratio" else 1.0
            for pid, w in R.members:
                agg[pid] = agg.get(pid, 0.0) + w * scale
        merged = WeightedInstance(sorted(agg.items()))
        sol = solve_local_search(reg, merged, k, pool)
        total = 0.0
        for idx, R in enumerate(rounds):
            c = float(
                reg.dist_matrix(R.ids, sol.centers.centers).min(axis=1)
                @ R.weights
            )
            total += c / opt_values[idx] if objective == "sum_ratio" else c
        return KMedianSolution(sol.centers, total, exact=False)


def restricted_vs_unrestricted_gap(
    reg: MetricRegistry, R: WeightedInstance, k: int
) -> float:
    """Cost ratio of the best client-restricted to the best unrestricted
    size-k solution; classically at most 2."""
    restricted = solve_exact(reg, R, k, R.ids)
    unrestricted = solve_exact(reg, R, k, range(len(reg)))
    if unrestricted.cost == 0:
        if restricted.cost == 0:
            return 1.0
        raise MetricError("unrestricted optimum is zero but restricted is not")
    return restricted.cost / unrestricted.cost
