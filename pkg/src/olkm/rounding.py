"""Integral center selection from a fractional solution.

Two schemes: a greedy threshold scan whose loss scales with k, and a
two-phase dependent randomized scheme with constant expected loss.  Both
share the same scan; a binary search finds the smallest threshold that
stays feasible, which is what the experiment harness uses by default.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .metric import (
    CenterSet,
    FractionalSolution,
    MetricError,
    MetricRegistry,
    PointId,
    fractional_costs,
)

MASS_EPS = 1e-12


@dataclass
class RoundingOutcome:
    centers: CenterSet
    mode: str  # "deterministic" | "randomized"
    threshold_used: float
    theta: float | None = None
    padded: bool = False

    def to_json(self) -> dict:
        return {
            "centers": list(self.centers.centers),
            "mode": self.mode,
            "threshold_used": self.threshold_used,
            "theta": self.theta,
            "padded": self.padded,
        }

    @classmethod
    def from_json(cls, obj) -> "RoundingOutcome":
        return cls(
            centers=CenterSet(tuple(obj["centers"])),
            mode=obj["mode"],
            threshold_used=obj["threshold_used"],
            theta=obj.get("theta"),
            padded=obj.get("padded", False),
        )


@dataclass
class MatchedPairs:
    """Phase-2 layout: greedy matching, ball weights and interval order."""

    pairs: list[tuple[PointId, PointId]]
    solitary: PointId | None
    weights: dict[PointId, float]
    radii: dict[PointId, float]

    @property
    def order(self) -> list[PointId]:
        out: list[PointId] = []
        for a, b in self.pairs:
            out.extend((a, b))
        if self.solitary is not None:
            out.append(self.solitary)
        return out


class ScanData:
    """Threshold-independent precomputation shared by all scan probes:
    per-point fractional costs, the scan order, and pairwise distances."""

    def __init__(self, reg: MetricRegistry, y: FractionalSolution):
        self.reg = reg
        self.y = y
        self.ids = np.asarray(y.ids)
        self.costs, _ = fractional_costs(reg, y, self.ids)
        self.order = np.lexsort((self.ids, self.costs))
        self.d = reg.dist_matrix(self.ids, self.ids)

    def scan(self, multiplier: float, stop_after: int | None = None) -> list[int]:
        """Open point i when its distance to the already-opened set exceeds
        multiplier times its fractional cost; first point always opens.
        Returns positions into ``ids`` in opening order.

        ``stop_after`` aborts once that many centers have opened — the
        feasibility probes of the threshold search only need to know the
        bound was crossed, not the full set."""
        if multiplier <= 0:
            raise MetricError("multiplier must be positive")
        opened: list[int] = []
        min_to_open = np.full(self.ids.size, np.inf)
        for pos in self.order:
            if min_to_open[pos] > multiplier * self.costs[pos]:
                opened.append(int(pos))
                if stop_after is not None and len(opened) > stop_after:
                    return opened
                min_to_open = np.minimum(min_to_open, self.d[pos])
        return opened


def round_deterministic(
    reg: MetricRegistry,
    y: FractionalSolution,
    k: int,
    multiplier: float | None = None,
    data: ScanData | None = None,
) -> RoundingOutcome:
    """Greedy threshold rounding; the default multiplier 2k+2 guarantees at
    most k centers.  Smaller multipliers may open more — callers probing
    them (the threshold search) must check the size themselves."""
    if multiplier is None:
        multiplier = 2 * k + 2
    data = data or ScanData(reg, y)
    centers = [int(data.ids[p]) for p in data.scan(multiplier)]
    return RoundingOutcome(
        centers=CenterSet(tuple(centers)),
        mode="deterministic",
        threshold_used=float(multiplier),
    )


def _ball_radii(data: ScanData, ybar_pos: list[int]) -> dict[int, float]:
    """r_i = distance from i to its closest other candidate (∞ if alone)."""
    ybar = [int(data.ids[p]) for p in ybar_pos]
    d = data.d[np.ix_(ybar_pos, ybar_pos)]
    radii: dict[int, float] = {}
    for i in range(len(ybar)):
        others = np.delete(d[i], i)
        radii[ybar[i]] = float(others.min()) if others.size else math.inf
    return radii


def _ball_weights(
    data: ScanData, ybar_pos: list[int], radii: dict[int, float]
) -> dict[int, float]:
    """y-mass strictly inside each candidate's open ball of radius r_i/2;
    every mass point feeds at most one ball, the lowest-id qualifying one."""
    ybar = [int(data.ids[p]) for p in ybar_pos]
    by_id = sorted(range(len(ybar)), key=lambda i: ybar[i])
    rad = np.array([radii[ybar[i]] for i in by_id])
    inside = data.d[:, [ybar_pos[i] for i in by_id]] < rad[None, :] / 2
    weights = {c: 0.0 for c in ybar}
    has = inside.any(axis=1)
    first = np.argmax(inside, axis=1)
    mask = has & (data.y.mass > MASS_EPS)
    sums = np.bincount(first[mask], weights=data.y.mass[mask], minlength=len(ybar))
    for i, s in zip(by_id, sums):
        weights[ybar[i]] = float(s)
    return weights


def _phase2_layout(data: ScanData, ybar_pos: list[int]) -> MatchedPairs:
    """Ball radii/weights and the greedy closest-pair matching over Ȳ."""
    ybar = [int(data.ids[p]) for p in ybar_pos]
    n = len(ybar)
    d = data.d[np.ix_(ybar_pos, ybar_pos)]
    radii = _ball_radii(data, ybar_pos)
    weights = _ball_weights(data, ybar_pos, radii)
    # greedy matching: repeatedly pair the closest unmatched centers,
    # distance ties broken by lexicographic id pair
    unmatched = sorted(range(n), key=lambda i: ybar[i])
    pairs: list[tuple[int, int]] = []
    while len(unmatched) >= 2:
        best = None
        for a in range(len(unmatched)):
            for b in range(a + 1, len(unmatched)):
                i, j = unmatched[a], unmatched[b]
                key = (d[i, j], ybar[i], ybar[j])
                if best is None or key < best[0]:
                    best = (key, i, j)
        _, i, j = best
        unmatched = [u for u in unmatched if u not in (i, j)]
        pairs.append((ybar[i], ybar[j]))
    solitary = ybar[unmatched[0]] if unmatched else None
    return MatchedPairs(pairs=pairs, solitary=solitary, weights=weights, radii=radii)


def _intervals(layout: MatchedPairs) -> tuple[list[PointId], np.ndarray]:
    """Consecutive half-open intervals [L_s, L_s + w_s) in layout order."""
    order = layout.order
    widths = np.array([layout.weights[c] for c in order])
    edges = np.concatenate([[0.0], np.cumsum(widths)])
    return order, edges


def _select(order: list[PointId], edges: np.ndarray, theta: float) -> list[PointId]:
    """Centers whose interval contains a + theta for some integer a >= 0."""
    chosen = []
    for s, c in enumerate(order):
        lo, hi = edges[s], edges[s + 1]
        a = math.ceil(lo - theta)
        if a >= 0 and a + theta < hi:
            chosen.append(c)
    return chosen


def _fallback(order, layout):
    # an empty draw is only reachable with an infeasibly small probe
    # multiplier; keep the heaviest ball so the outcome stays a CenterSet
    return [max(order, key=lambda c: layout.weights[c])]


def randomized_layout(
    reg: MetricRegistry,
    y: FractionalSolution,
    phase1_multiplier: float = 4.0,
    data: ScanData | None = None,
) -> tuple[MatchedPairs, list[PointId], np.ndarray]:
    """Phase-1 scan plus the phase-2 interval layout (θ-independent)."""
    data = data or ScanData(reg, y)
    ybar_pos = data.scan(phase1_multiplier)
    layout = _phase2_layout(data, ybar_pos)
    order, edges = _intervals(layout)
    return layout, order, edges


def round_randomized(
    reg: MetricRegistry,
    y: FractionalSolution,
    k: int,
    phase1_multiplier: float = 4.0,
    rng_seed: int = 0,
    data: ScanData | None = None,
) -> RoundingOutcome:
    """Two-phase dependent rounding.

    Phase 1 runs the threshold scan at the given multiplier to get a
    candidate set Ȳ (possibly larger than k); phase 2 lays the candidates'
    ball weights out as adjacent intervals on the line, draws a single
    θ ∈ [0,1) and keeps every candidate whose interval contains an integer
    shift of θ.  At multiplier 4 the result has at most k centers for
    every θ and each matched pair contributes at least one center.
    """
    layout, order, edges = randomized_layout(reg, y, phase1_multiplier, data)
    theta = float(np.random.default_rng(rng_seed).random())
    chosen = _select(order, edges, theta) or _fallback(order, layout)
    return RoundingOutcome(
        centers=CenterSet(tuple(chosen)),
        mode="randomized",
        threshold_used=float(phase1_multiplier),
        theta=theta,
    )


def _theta_pieces(order, edges):
    """The selection is piecewise constant in θ; yield (length, chosen)."""
    breaks = {0.0, 1.0}
    for e in edges:
        breaks.add(float(e) % 1.0)
    pts = sorted(breaks)
    for lo, hi in zip(pts[:-1], pts[1:]):
        if hi - lo > 0:
            yield hi - lo, _select(order, edges, 0.5 * (lo + hi))


def expected_rounding_costs(
    reg: MetricRegistry,
    y: FractionalSolution,
    k: int,
    clients,
    phase1_multiplier: float = 4.0,
    data: ScanData | None = None,
) -> np.ndarray:
    """Exact expected distance from each client to the randomized output,
    by enumerating the θ-breakpoints of the interval layout."""
    layout, order, edges = randomized_layout(reg, y, phase1_multiplier, data)
    clients = np.asarray(clients, dtype=int)
    dist = reg.dist_matrix(clients, order)
    pos = {c: i for i, c in enumerate(order)}
    out = np.zeros(clients.size)
    for length, chosen in _theta_pieces(order, edges):
        if not chosen:
            chosen = _fallback(order, layout)
        cols = [pos[c] for c in chosen]
        out += length * dist[:, cols].min(axis=1)
    return out


def expected_rounding_cost(
    reg: MetricRegistry,
    y: FractionalSolution,
    k: int,
    client: PointId,
    phase1_multiplier: float = 4.0,
) -> float:
    return float(expected_rounding_costs(reg, y, k, [client], phase1_multiplier)[0])


def heuristic_threshold_search(
    reg: MetricRegistry,
    y: FractionalSolution,
    k: int,
    mode: str = "deterministic",
    rng_seed: int = 0,
    iterations: int = 40,
    data: ScanData | None = None,
) -> RoundingOutcome:
    """Smallest feasible threshold by bisection, theoretical constant as
    the guaranteed fallback.

    Feasible means: at most k opened centers (deterministic), or every
    candidate ball holding mass above 1/2 with total mass at most k
    (randomized), which is what the selection-count argument needs.
    """
    data = data or ScanData(reg, y)
    if mode == "deterministic":
        hi = 2.0 * k + 2.0

        def feasible(c: float) -> bool:
            return len(data.scan(c, stop_after=k)) <= k

    elif mode == "randomized":
        hi = 4.0

        def feasible(c: float) -> bool:
            # each ball needs w_i > 1/2 with Σw ≤ k, so 2k candidates
            # already rule the threshold out — skip the layout work
            ybar_pos = data.scan(c, stop_after=2 * k)
            if len(ybar_pos) > 2 * k:
                return False
            w = _ball_weights(data, ybar_pos, _ball_radii(data, ybar_pos))
            return all(wi > 0.5 for wi in w.values()) and sum(w.values()) <= k

    else:
        raise MetricError(f"unknown rounding mode {mode!r}")

    lo = 0.0
    if not feasible(hi):
        # theoretical guarantee covers the endpoint; only the randomized
        # Σw ≤ k test can be off by mass-tolerance noise — keep hi anyway
        lo = hi
    for _ in range(iterations):
        if lo >= hi:
            break
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    if mode == "deterministic":
        return round_deterministic(reg, y, k, multiplier=hi, data=data)
    return round_randomized(
        reg, y, k, phase1_multiplier=hi, rng_seed=rng_seed, data=data
    )


def pad_to_k(
    reg: MetricRegistry, Y: CenterSet, y: FractionalSolution, k: int
) -> CenterSet:
    """Top the center set up to k with the worst-served revealed points.

    Candidates are geometrically distinct revealed points, added in order
    of decreasing fractional connection cost; adding centers never hurts
    any assignment.  Returns fewer than k only when the revealed space is
    that small.
    """
    if len(Y) >= k:
        return Y
    from .offline import dedupe_pool

    pool = dedupe_pool(reg, y.ids)
    cand = [p for p in pool if p not in Y.centers]
    if cand:
        far = reg.dist_matrix(cand, Y.centers).min(axis=1)
        cand = [p for p, f in zip(cand, far) if f > 0]
    if not cand:
        return Y
    costs, _ = fractional_costs(reg, y, cand)
    order = sorted(range(len(cand)), key=lambda i: (-costs[i], cand[i]))
    centers = list(Y.centers)
    for i in order:
        if len(centers) == k:
            break
        centers.append(cand[i])
    return CenterSet(tuple(centers))
