"""Synthetic round-stream generators and adversarial constructions.

Every generator materializes its full ground point set up front from the
seed, so point ids and all optimum computations are reproducible
bit-for-bit.  Streams emit instances for rounds 0..T; round 0 is the
cold-start instance the online loop initializes from.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .metric import CenterSet, MetricError, MetricRegistry, WeightedInstance

GENERATORS = (
    "uniform_square",
    "uniform_rectangle",
    "multiple_clusters",
    "hypersphere",
    "oscillating",
    "scale_changing",
    "small_drift",
    "file",
    "lb_det",
    "lb_rand",
    "lb_additive",
    "lb_ftl",
)


@dataclass
class ExperimentConfig:
    generator: str = "uniform_square"
    k: int = 3
    T: int = 300
    points_per_round: int = 10
    seed: int = 0
    rounding: str = "both"  # det | rand | both
    simplex_only: bool = True
    heuristic_threshold: bool = True
    benchmark: str = "exact"  # exact | local_search
    output_path: str | None = None
    # generator-specific knobs (defaults match the standard presets)
    n_points: int = 0  # 0 = generator default ground-set size
    dims: int = 2
    delta: float = 100.0
    m: int = 8  # cluster size for the star / one-cluster-per-round builds
    lam: int = 4
    T0: int = 5
    drift: float = 0.02
    disc_radius: float = 0.5
    origin_round: int = 100
    theta_reps: int = 5
    pad: bool = True
    input_path: str | None = None

    def validate(self) -> None:
        if self.generator not in GENERATORS:
            raise MetricError(f"unknown generator {self.generator!r}")
        if self.k < 1 or self.T < 1:
            raise MetricError("k and T must be at least 1")
        if self.points_per_round < 1:
            raise MetricError("points_per_round must be positive")
        if self.rounding not in ("det", "rand", "both", "none"):
            raise MetricError(f"unknown rounding {self.rounding!r}")
        if self.benchmark not in ("exact", "local_search"):
            raise MetricError(f"unknown benchmark {self.benchmark!r}")
        if self.generator == "file" and not self.input_path:
            raise MetricError("file generator needs input_path")
        if self.generator in ("lb_det", "lb_rand", "lb_additive") and self.delta <= 1:
            raise MetricError("delta must exceed 1")
        if self.generator in ("lb_rand", "lb_additive") and self.m < self.k + 1:
            raise MetricError("cluster size m must be at least k+1")
        if self.generator == "lb_ftl":
            if self.k != 1:
                raise MetricError("the two-level star construction uses k=1")
            if self.lam < 2 or self.T0 < 1:
                raise MetricError("need lam >= 2 and T0 >= 1")
        if self.generator == "lb_additive" and self.T != self.k - 1:
            raise MetricError("the one-cluster-per-round build fixes T = k-1")


class Stream:
    """A sequence of instances, optionally adaptive to announced centers."""

    def __init__(
        self,
        reg: MetricRegistry,
        k: int,
        T: int,
        rounds: list[WeightedInstance] | None = None,
        adaptive: Callable[[int, CenterSet | None], WeightedInstance] | None = None,
        regions: dict[int, str] | None = None,
        meta: dict | None = None,
    ):
        if rounds is None and adaptive is None:
            raise MetricError("stream needs rounds or an adaptive rule")
        self.reg = reg
        self.k = k
        self.T = T
        self._rounds = rounds
        self._adaptive = adaptive
        self.regions = regions
        self.meta = meta or {}

    @property
    def adaptive(self) -> bool:
        return self._adaptive is not None and self._rounds is None

    def instance(self, t: int, Y: CenterSet | None = None) -> WeightedInstance:
        if not 0 <= t <= self.T:
            raise MetricError(f"round {t} outside 0..{self.T}")
        if self._rounds is not None:
            return self._rounds[t]
        return self._adaptive(t, Y)


def _sampled_ground_set_stream(cfg, pts, regions=None, meta=None) -> Stream:
    """Shared tail: register points, sample points_per_round ids per round."""
    rng = np.random.default_rng(cfg.seed + 1)
    reg = MetricRegistry()
    ids = np.array(reg.add_points(pts))
    if cfg.points_per_round > len(ids):
        raise MetricError("points_per_round exceeds ground-set size")
    rounds = [
        WeightedInstance.unit(
            ids[rng.choice(len(ids), cfg.points_per_round, replace=False)], round=t
        )
        for t in range(cfg.T + 1)
    ]
    return Stream(reg, cfg.k, cfg.T, rounds=rounds, regions=regions, meta=meta)


def gen_uniform_square(cfg: ExperimentConfig) -> Stream:
    n = cfg.n_points or 400
    rng = np.random.default_rng(cfg.seed)
    return _sampled_ground_set_stream(cfg, rng.random((n, 2)))


def gen_uniform_rectangle(cfg: ExperimentConfig) -> Stream:
    n = cfg.n_points or 400
    rng = np.random.default_rng(cfg.seed)
    pts = rng.random((n, 2)) * np.array([1.0, 10.0])
    return _sampled_ground_set_stream(cfg, pts)


def gen_multiple_clusters(cfg: ExperimentConfig) -> Stream:
    """k discs of radius 0.05 around uniform centers in the unit square."""
    n = cfg.n_points or 400
    rng = np.random.default_rng(cfg.seed)
    centers = rng.random((cfg.k, 2))
    per = [n // cfg.k + (1 if c < n % cfg.k else 0) for c in range(cfg.k)]
    pts, labels = [], []
    for c in range(cfg.k):
        r = 0.05 * np.sqrt(rng.random(per[c]))
        ang = 2 * np.pi * rng.random(per[c])
        pts.append(centers[c] + np.c_[r * np.cos(ang), r * np.sin(ang)])
        labels.extend([c] * per[c])
    stream = _sampled_ground_set_stream(cfg, np.vstack(pts))
    stream.regions = {i: str(labels[i]) for i in range(n)}
    return stream


def gen_hypersphere(cfg: ExperimentConfig) -> Stream:
    """Uniform points on the unit sphere; the origin joins one instance
    mid-stream and stays available from then on."""
    n = cfg.n_points or 400
    rng = np.random.default_rng(cfg.seed)
    g = rng.standard_normal((n - 1, cfg.dims))
    boundary = g / np.linalg.norm(g, axis=1, keepdims=True)
    reg = MetricRegistry()
    origin = reg.add_point(np.zeros(cfg.dims))
    bids = np.array(reg.add_points(boundary))
    samp = np.random.default_rng(cfg.seed + 1)
    rounds = []
    for t in range(cfg.T + 1):
        chosen = list(bids[samp.choice(len(bids), cfg.points_per_round, replace=False)])
        if t == cfg.origin_round:
            chosen.append(origin)
        rounds.append(WeightedInstance.unit(chosen, round=t))
    regions = {origin: "origin", **{int(i): "boundary" for i in bids}}
    return Stream(reg, cfg.k, cfg.T, rounds=rounds, regions=regions)


def _batch_index(t: int, base: int = 3) -> int:
    """1-based batch of round t under boundaries base, base^2, base^3, ..."""
    if t < 1:
        return 1
    h = 1
    while t > base**h:
        h += 1
    return h


def _square_cluster(rng, center, side=0.4, count=10):
    return center + side * (rng.random((count, 2)) - 0.5)


def gen_oscillating(cfg: ExperimentConfig) -> Stream:
    """Two clusters; batches of geometrically growing length alternate."""
    rng = np.random.default_rng(cfg.seed)
    reg = MetricRegistry()
    clusters = [
        reg.add_points(_square_cluster(rng, np.array([0.0, 0.0]))),
        reg.add_points(_square_cluster(rng, np.array([1.0, 0.0]))),
    ]
    rounds, regions = [], {}
    for c, ids in enumerate(clusters):
        regions.update({int(i): str(c) for i in ids})
    for t in range(cfg.T + 1):
        c = (_batch_index(t) - 1) % 2
        rounds.append(WeightedInstance.unit(clusters[c], round=t))
    meta = {"active_cluster": [(_batch_index(t) - 1) % 2 for t in range(cfg.T + 1)]}
    return Stream(reg, cfg.k, cfg.T, rounds=rounds, regions=regions, meta=meta)


def gen_scale_changing(cfg: ExperimentConfig) -> Stream:
    """Five clusters geometrically far apart, visited in growing batches."""
    rng = np.random.default_rng(cfg.seed)
    reg = MetricRegistry()
    xs = [float(int(10 ** (i - 1))) for i in range(5)]  # 0, 1, 10, 100, 1000
    clusters = [
        reg.add_points(_square_cluster(rng, np.array([x, 0.0]))) for x in xs
    ]
    rounds, regions = [], {}
    for c, ids in enumerate(clusters):
        regions.update({int(i): str(c) for i in ids})
    for t in range(cfg.T + 1):
        c = min(_batch_index(t) - 1, 4)
        rounds.append(WeightedInstance.unit(clusters[c], round=t))
    meta = {"active_cluster": [min(_batch_index(t) - 1, 4) for t in range(cfg.T + 1)]}
    return Stream(reg, cfg.k, cfg.T, rounds=rounds, regions=regions, meta=meta)


def gen_small_drift(cfg: ExperimentConfig) -> Stream:
    """A disc of points drifting right; half of each draw arrives."""
    rng = np.random.default_rng(cfg.seed)
    reg = MetricRegistry()
    rounds = []
    draw = max(cfg.points_per_round * 2, cfg.points_per_round + 1)
    for t in range(cfg.T + 1):
        center = np.array([cfg.drift * t, 0.0])
        r = cfg.disc_radius * np.sqrt(rng.random(draw))
        ang = 2 * np.pi * rng.random(draw)
        ids = reg.add_points(center + np.c_[r * np.cos(ang), r * np.sin(ang)])
        chosen = rng.choice(draw, cfg.points_per_round, replace=False)
        rounds.append(WeightedInstance.unit([ids[i] for i in chosen], round=t))
    return Stream(reg, cfg.k, cfg.T, rounds=rounds)


def gen_file(cfg: ExperimentConfig) -> Stream:
    from .io import read_instance_file

    reg, rounds = read_instance_file(cfg.input_path)
    return Stream(reg, cfg.k, len(rounds) - 1, rounds=rounds)


def _uniform_cluster_matrix(k_clusters: int, size: int, delta: float) -> np.ndarray:
    """Blocks of intra-distance 1, inter-distance delta."""
    n = k_clusters * size
    m = np.full((n, n), delta)
    for c in range(k_clusters):
        s = slice(c * size, (c + 1) * size)
        m[s, s] = 1.0
    np.fill_diagonal(m, 0.0)
    return m


def gen_lb_deterministic_adversary(cfg: ExperimentConfig) -> Stream:
    """k+1 two-point clusters; each round demands the cluster the announced
    centers left uncovered.

    The k-1 filler clusters are the historically most demanded ones, which
    concentrates the fixed benchmark's frequencies and keeps its cost low
    while the adaptive demand stays expensive for the algorithm.
    """
    k = cfg.k
    reg = MetricRegistry.from_matrix(_uniform_cluster_matrix(k + 1, 2, cfg.delta))
    cluster_of = {i: i // 2 for i in range(2 * (k + 1))}
    counts = np.zeros(k + 1, dtype=int)

    def members(c):
        return [2 * c, 2 * c + 1]

    def rule(t: int, Y: CenterSet | None) -> WeightedInstance:
        if t == 0:
            return WeightedInstance.unit(range(2 * (k + 1)), round=0)
        if Y is None:
            raise MetricError("adaptive stream needs the announced centers")
        covered = {cluster_of[c] for c in Y.centers}
        uncovered = [c for c in range(k + 1) if c not in covered]
        forced = uncovered[0]
        fillers = sorted(
            (c for c in range(k + 1) if c != forced),
            key=lambda c: (-counts[c], c),
        )[: k - 1]
        chosen = sorted([forced] + fillers)
        counts[chosen] += 1
        ids = [i for c in chosen for i in members(c)]
        return WeightedInstance.unit(ids, round=t)

    regions = {i: str(c) for i, c in cluster_of.items()}
    return Stream(
        reg,
        k,
        cfg.T,
        adaptive=rule,
        regions=regions,
        meta={"cluster_of": cluster_of, "n_clusters": k + 1},
    )


def gen_lb_randomized(cfg: ExperimentConfig) -> Stream:
    """k star clusters (center + m-1 leaves); random leaf pairs per round,
    all centers plus one leaf in the last round."""
    k, m = cfg.k, cfg.m
    n = k * m
    mat = np.full((n, n), cfg.delta)
    for c in range(k):
        s = slice(c * m, (c + 1) * m)
        mat[s, s] = 2.0  # leaf-leaf inside a cluster
        mat[c * m, s] = 1.0  # center-leaf
        mat[s, c * m] = 1.0
    np.fill_diagonal(mat, 0.0)
    reg = MetricRegistry.from_matrix(mat)
    centers = [c * m for c in range(k)]
    leaves = [c * m + j for c in range(k) for j in range(1, m)]
    rng = np.random.default_rng(cfg.seed)
    rounds = [WeightedInstance.unit(leaves, round=0)]
    for t in range(1, cfg.T):
        ids = []
        for c in range(k):
            picked = rng.choice(m - 1, 2, replace=False)
            ids.extend(int(c * m + 1 + j) for j in picked)
        rounds.append(WeightedInstance.unit(ids, round=t))
    extra_leaf = int(rng.choice(leaves))
    rounds.append(WeightedInstance.unit(centers + [extra_leaf], round=cfg.T))
    regions = {i: str(i // m) for i in range(n)}
    meta = {"centers": centers, "final_extra_leaf": extra_leaf}
    return Stream(reg, k, cfg.T, rounds=rounds, regions=regions, meta=meta)


def gen_lb_additive(cfg: ExperimentConfig) -> Stream:
    """k uniform clusters revealed one per round; T = k-1."""
    k, m = cfg.k, cfg.m
    reg = MetricRegistry.from_matrix(_uniform_cluster_matrix(k, m, cfg.delta))
    rounds = [
        WeightedInstance.unit(range(t * m, (t + 1) * m), round=t) for t in range(k)
    ]
    regions = {i: str(i // m) for i in range(k * m)}
    return Stream(reg, k, k - 1, rounds=rounds, regions=regions)


def lb_ftl_phase_lengths(lam: int, T0: int) -> list[int]:
    return [lam**h * T0 for h in range(1, 2 * lam + 1)]


def gen_lb_ftl(cfg: ExperimentConfig) -> Stream:
    """Two-level star tree with geometrically shrinking arm lengths.

    Root r has 2*lam children v_1..v_{2lam} at edge lengths
    delta_h = Delta / lam^h with Delta = lam^(2lam+1); each v_h has two
    children at edge length 1.  Phase h replays {v_h's two children} for
    T_h = lam^h * T0 rounds, so T_h * delta_h = T0 * Delta identically.
    """
    lam, T0 = cfg.lam, cfg.T0
    big = lam ** (2 * lam + 1)
    n = 1 + 6 * lam
    root = 0

    def mid(h):  # v_h
        return h

    def leaf(h, j):  # v_h^j, j in {1, 2}
        return 2 * lam + 2 * (h - 1) + j

    # distance of every node to the root; all arm lengths are exact ints
    to_root = np.zeros(n)
    branch = np.full(n, -1)
    for h in range(1, 2 * lam + 1):
        dh = big // lam**h
        to_root[mid(h)] = dh
        branch[mid(h)] = h
        for j in (1, 2):
            to_root[leaf(h, j)] = dh + 1
            branch[leaf(h, j)] = h
    mat = to_root[:, None] + to_root[None, :]
    for h in range(1, 2 * lam + 1):
        nodes = [mid(h), leaf(h, 1), leaf(h, 2)]
        sub = np.array([[0.0, 1.0, 1.0], [1.0, 0.0, 2.0], [1.0, 2.0, 0.0]])
        mat[np.ix_(nodes, nodes)] = sub
    np.fill_diagonal(mat, 0.0)
    reg = MetricRegistry.from_matrix(mat)

    lengths = lb_ftl_phase_lengths(lam, T0)
    starts = np.concatenate([[1], 1 + np.cumsum(lengths)])
    T = int(starts[-1]) - 1
    cache: dict[int, WeightedInstance] = {
        0: WeightedInstance.unit(range(n), round=0)
    }

    def rule(t: int, Y=None) -> WeightedInstance:
        if t == 0:
            return cache[0]
        h = int(np.searchsorted(starts, t, side="right"))
        if h not in cache:
            cache[h] = WeightedInstance.unit([leaf(h, 1), leaf(h, 2)], round=t)
        inst = cache[h]
        inst.round = t
        return inst

    meta = {
        "lam": lam,
        "T0": T0,
        "Delta": big,
        "root": root,
        "phase_lengths": lengths,
        "phase_arm_lengths": [big // lam**h for h in range(1, 2 * lam + 1)],
        "phase_starts": [int(s) for s in starts[:-1]],
        "mid": {h: mid(h) for h in range(1, 2 * lam + 1)},
        "leaves": {h: (leaf(h, 1), leaf(h, 2)) for h in range(1, 2 * lam + 1)},
    }
    return Stream(reg, 1, T, adaptive=rule, meta=meta)


_DISPATCH = {
    "uniform_square": gen_uniform_square,
    "uniform_rectangle": gen_uniform_rectangle,
    "multiple_clusters": gen_multiple_clusters,
    "hypersphere": gen_hypersphere,
    "oscillating": gen_oscillating,
    "scale_changing": gen_scale_changing,
    "small_drift": gen_small_drift,
    "file": gen_file,
    "lb_det": gen_lb_deterministic_adversary,
    "lb_rand": gen_lb_randomized,
    "lb_additive": gen_lb_additive,
    "lb_ftl": gen_lb_ftl,
}


def build_stream(cfg: ExperimentConfig) -> Stream:
    cfg.validate()
    return _DISPATCH[cfg.generator](cfg)
