"""Acceptance gate: twelve end-to-end guarantees of the online k-median
pipeline, each encoded as one test.  Run with ``pytest -v`` to get one
pass/fail line per criterion.  Tolerances are stated inline; the desk
preset (100 ground points, 10 clients/round, T=300, k=3) is shared by the
rounding-loss and convergence checks.
"""
import math
import time
from itertools import combinations

import numpy as np
import pytest

from olkm import offline, omd, rounding
from olkm.generators import ExperimentConfig, _batch_index, build_stream
from olkm.harness import run_ftl_baseline, run_online
from olkm.io import write_rounds
from olkm.metric import (
    FractionalSolution,
    MetricRegistry,
    WeightedInstance,
    fractional_costs,
)
from olkm.reduction import reduce_instance

TOL = 1e-9

DESK_SEEDS = (0, 1, 2, 3, 4)


def desk_config(seed, **kw):
    base = dict(
        generator="uniform_square",
        k=3,
        T=300,
        points_per_round=10,
        n_points=100,
        seed=seed,
        rounding="both",
        theta_reps=5,
    )
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def desk_runs():
    """Traced desk runs, one per seed: (stream, records, summary, trace)."""
    out = {}
    for seed in DESK_SEEDS:
        cfg = desk_config(seed)
        stream = build_stream(cfg)
        records, summary, tr = run_online(cfg, stream=stream, trace=True)
        out[seed] = (stream, records, summary, tr)
    return out


def test_criterion_01_rounding_feasibility(tmp_path):
    """>= 10,000 rounding invocations across all generators and 20 seeds
    produce at most k centers before padding; zero violations, < 1 min."""
    file_path = tmp_path / "rounds.jsonl"
    src = build_stream(ExperimentConfig(
        generator="uniform_square", T=10, points_per_round=8, n_points=40
    ))
    with open(file_path, "w") as fh:
        write_rounds(fh, src.reg, [src.instance(t) for t in range(11)])

    cheap = dict(T=10, theta_reps=5, rounding="both")
    plans = []
    for gen in (
        "uniform_square",
        "uniform_rectangle",
        "multiple_clusters",
        "hypersphere",
        "oscillating",
        "scale_changing",
        "small_drift",
        "lb_det",
    ):
        extra = {"n_points": 60} if gen in ("uniform_square", "uniform_rectangle",
                                            "multiple_clusters", "hypersphere") else {}
        plans += [desk_config(s, generator=gen, **cheap, **extra) for s in range(20)]
    plans += [desk_config(s, generator="lb_rand", T=5, theta_reps=5) for s in range(20)]
    plans += [
        desk_config(s, generator="lb_additive", k=3, T=2, theta_reps=5)
        for s in range(20)
    ]
    plans += [
        desk_config(s, generator="lb_ftl", k=1, T=1, lam=2, T0=1, theta_reps=5)
        for s in range(2)
    ]
    plans += [
        desk_config(
            s, generator="file", input_path=str(file_path), T=10, theta_reps=5
        )
        for s in range(2)
    ]

    start = time.perf_counter()
    invocations = violations = 0
    for cfg in plans:
        _, _, tr = run_online(cfg, trace=True, compute_opt=False)
        for Y in tr.prepad_det:
            invocations += 1
            if len(Y) > cfg.k:
                violations += 1
        for reps in tr.prepad_rand:
            for Y in reps:
                invocations += 1
                if len(Y) > cfg.k:
                    violations += 1
    elapsed = time.perf_counter() - start
    print(f"[criterion 1] invocations={invocations} violations={violations} "
          f"time={elapsed:.1f}s")
    assert invocations >= 10_000
    assert violations == 0
    assert elapsed < 60.0


def test_criterion_02_deterministic_rounding_loss(desk_runs):
    """Every desk round: D(Y_t, j) <= (4k+3) D(y_t, j) for all checked j
    and <= (2k+2) D(y_t, j) for previously revealed j; exact, 1e-9."""
    k = 3
    checked = 0
    worst_rev = worst_all = -math.inf
    for seed, (stream, _, _, tr) in desk_runs.items():
        reg = stream.reg
        for y, V, Y in zip(tr.y_snapshots, tr.instances, tr.prepad_det):
            revealed = set(y.ids)
            clients = sorted(revealed | set(int(i) for i in V.ids))
            fr, _ = fractional_costs(reg, y, clients)
            dY = reg.dist_matrix(clients, Y.centers).min(axis=1)
            for j, f, d in zip(clients, fr, dY):
                bound = (2 * k + 2) if j in revealed else (4 * k + 3)
                slack = d - bound * f
                if j in revealed:
                    worst_rev = max(worst_rev, slack)
                else:
                    worst_all = max(worst_all, slack)
                checked += 1
                assert d <= bound * f + TOL, (seed, j, d, bound * f)
    print(f"[criterion 2] points_checked={checked} "
          f"worst_slack_revealed={worst_rev:.3e} worst_slack_new={worst_all:.3e}")


def test_criterion_03_randomized_expected_loss(desk_runs):
    """Exact theta-breakpoint expectation: <= 17x the fractional cost for
    every point, <= 8x for revealed points, <= 4x for phase-1 candidates,
    on >= 500 rounds; Monte Carlo (1e5 draws) agrees within 3 SE on 20."""
    k = 3
    rounds_checked = 0
    for seed in (0, 1):
        stream, _, _, tr = desk_runs[seed]
        reg = stream.reg
        all_ids = list(range(len(reg)))
        for y, V in zip(tr.y_snapshots, tr.instances):
            data = rounding.ScanData(reg, y)
            ybar = {int(data.ids[p]) for p in data.scan(4.0)}
            exp = rounding.expected_rounding_costs(reg, y, k, all_ids, data=data)
            fr, _ = fractional_costs(reg, y, all_ids)
            revealed = set(y.ids)
            for j, e, f in zip(all_ids, exp, fr):
                bound = 4 if j in ybar else (8 if j in revealed else 17)
                assert e <= bound * f + TOL, (seed, j, e, bound * f)
            rounds_checked += 1
    assert rounds_checked >= 500

    # Monte Carlo cross-check on 20 rounds of seed 0
    stream, _, _, tr = desk_runs[0]
    reg = stream.reg
    rng = np.random.default_rng(123)
    n_samples = 100_000
    checked_mc = 0
    for idx in np.linspace(0, len(tr.y_snapshots) - 1, 20, dtype=int):
        y, V = tr.y_snapshots[idx], tr.instances[idx]
        clients = [int(i) for i in V.ids]
        layout, order, edges = rounding.randomized_layout(reg, y)
        exact = rounding.expected_rounding_costs(reg, y, 3, clients)
        dist = reg.dist_matrix(clients, order)
        thetas = rng.random(n_samples)
        sel = np.zeros((n_samples, len(order)), dtype=bool)
        for s in range(len(order)):
            lo, hi = edges[s], edges[s + 1]
            a = np.ceil(lo - thetas)
            sel[:, s] = (a >= 0) & (a + thetas < hi)
        none = ~sel.any(axis=1)
        if none.any():
            fb = order.index(rounding._fallback(order, layout)[0])
            sel[none, fb] = True
        for c, j in enumerate(clients):
            vals = np.where(sel, dist[c][None, :], np.inf).min(axis=1)
            se = vals.std() / math.sqrt(n_samples)
            assert abs(vals.mean() - exact[c]) <= 3 * se + TOL
            checked_mc += 1
    print(f"[criterion 3] rounds_checked={rounds_checked} "
          f"mc_clients_checked={checked_mc}")


def test_criterion_04_subgradient_validity():
    """Linear lower bound holds at every integral vertex on 100 random
    weighted instances (dimension <= 10, k <= 3); runtime < 30 s."""
    start = time.perf_counter()
    rng = np.random.default_rng(42)
    for case in range(100):
        k = int(rng.integers(1, 4))
        d = int(rng.integers(k + 1, 11))
        reg = MetricRegistry()
        ids = reg.add_points(rng.random((d, 2)) * 5)
        R = WeightedInstance(
            [(int(i), float(w)) for i, w in zip(ids, 0.5 + rng.random(d))]
        )
        mass = rng.random(d)
        mass *= k / mass.sum()
        y = FractionalSolution(list(ids), mass, k)
        g = omd.compute_subgradient(reg, omd.OmdState(y=y), R)
        fy, _ = fractional_costs(reg, y, R.ids)
        base = float(fy @ R.weights)
        for combo in combinations(range(d), k):
            z = np.zeros(d)
            z[list(combo)] = 1.0
            fz, _ = fractional_costs(reg, FractionalSolution(list(ids), z, k), R.ids)
            lhs = float(fz @ R.weights)
            assert lhs >= base + float(g.values @ (z - mass)) - TOL, (case, combo)
    elapsed = time.perf_counter() - start
    print(f"[criterion 4] cases=100 time={elapsed:.1f}s")
    assert elapsed < 30.0


def test_criterion_05_projection_correctness():
    """Projection output is feasible (mass within 1e-8, box bounds) and
    no random feasible comparator has smaller divergence (200 per case)."""
    rng = np.random.default_rng(77)
    worst = -math.inf
    for case in range(100):
        k = int(rng.integers(1, 4))
        d = int(rng.integers(k + 1, 14))
        x = rng.random(d) * 4
        proj = omd.bregman_project(x, k, d, simplex_only=False)
        assert abs(proj.sum() - k) <= 1e-8
        assert proj.min() >= -1e-10 and proj.max() <= 1 + 1e-8
        bp = omd.bregman_divergence(proj, x, 1.0 / d)
        for _ in range(200):
            z = rng.random(d)
            z = np.minimum(z * k / z.sum(), 1.0)
            deficit = k - z.sum()
            while deficit > 1e-12:
                room = 1.0 - z
                z = z + np.minimum(room, deficit * room / room.sum())
                deficit = k - z.sum()
            bz = omd.bregman_divergence(z, x, 1.0 / d)
            worst = max(worst, bp - bz)
            assert bp <= bz + TOL, case
    print(f"[criterion 5] cases=100 comparators=200 worst_gap={worst:.3e}")


def test_criterion_06_restricted_gap():
    """Restricting centers to the instance's own points at most doubles
    the optimal cost; 100 exhaustively solved instances."""
    rng = np.random.default_rng(5)
    worst = 0.0
    for case in range(100):
        k = int(rng.integers(1, 4))
        n = int(rng.integers(k + 1, 11))
        reg = MetricRegistry()
        ids = reg.add_points(rng.random((n + 6, 2)) * 3)
        R = WeightedInstance.unit(rng.choice(ids, n, replace=False))
        gap = offline.restricted_vs_unrestricted_gap(reg, R, k)
        worst = max(worst, gap)
        assert gap <= 2.0 + TOL, case
    print(f"[criterion 6] cases=100 worst_gap={worst:.4f}")


def test_criterion_07_reduction_weight_bound():
    """On instances pre-scaled to min pairwise distance >= 1, the summary
    instance has exactly k members with total weight <= k+1."""
    rng = np.random.default_rng(17)
    worst = 0.0
    for case in range(100):
        k = int(rng.integers(1, 4))
        n = int(rng.integers(k + 2, 25))
        pts = rng.random((n, 2)) * 3
        d = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
        pts = pts / d[d > 0].min()
        reg = MetricRegistry()
        ids = reg.add_points(pts)
        red = reduce_instance(reg, WeightedInstance.unit(ids), k)
        total = sum(w for _, w in red.instance.members)
        worst = max(worst, total - (k + 1))
        assert len(red.instance.members) == k
        assert total <= k + 1 + TOL, case
    print(f"[criterion 7] cases=100 worst_excess={worst:.3e}")


def test_criterion_08_uniform_square_convergence(desk_runs):
    """Desk preset, 5 seeds: summed ratio vs the best fixed solution stays
    below 1.5 (randomized, 5 theta repetitions averaged) and 2.5
    (deterministic); each seed finishes in under 2 minutes."""
    for seed, (_, _, summary, _) in desk_runs.items():
        det = summary["ratio_vs_benchmark_det"]
        rand = summary["ratio_vs_benchmark_rand"]
        wall = summary["wall_time_s"]
        print(f"[criterion 8] seed={seed} det={det:.3f} rand={rand:.3f} "
              f"time={wall:.1f}s")
        assert summary["benchmark_exact"]
        assert rand <= 1.5
        assert det <= 2.5
        assert wall < 120.0


def test_criterion_09_oscillating_adaptivity():
    """Two alternating clusters, k=1, T=243: the fractional iterate's
    cumulative ratio stays within 1.2 of the prefix-best fixed solution
    (the dynamic benchmark), and its mass follows the active cluster
    (> 0.5 in each batch's final third)."""
    cfg = ExperimentConfig(
        generator="oscillating", k=1, T=243, rounding="none", seed=0
    )
    stream = build_stream(cfg)
    records, summary, _ = run_online(cfg, stream=stream)
    avg_ratio = summary["ratio_vs_benchmark_frac"]
    assert avg_ratio <= 1.2

    active = stream.meta["active_cluster"]
    boundaries = [3, 9, 27, 81, 243]
    starts = [1, 4, 10, 28, 82]
    min_active_mass = math.inf
    for start, end in zip(starts, boundaries):
        length = end - start + 1
        final_third = range(end - length // 3 + 1, end + 1)
        for t in final_third:
            rec = records[t - 1]
            m = rec.mass_by_region.get(str(active[t]), 0.0)
            min_active_mass = min(min_active_mass, m)
            assert m > 0.5, (t, rec.mass_by_region)
    print(f"[criterion 9] ratio_vs_dynamic_benchmark={avg_ratio:.3f} "
          f"min_active_mass={min_active_mass:.3f}")


def test_criterion_10_deterministic_lower_bound_separation():
    """The covering adversary (k+1 far clusters, k=3) forces the
    deterministic pipeline at least k/2 above the best fixed solution."""
    cfg = ExperimentConfig(
        generator="lb_det", k=3, T=500, delta=100.0, rounding="det", seed=0
    )
    _, summary, _ = run_online(cfg)
    sep = summary["ratio_vs_benchmark_det"]
    print(f"[criterion 10] separation={sep:.3f} (needs >= 1.5)")
    assert summary["benchmark_exact"]
    assert sep >= 1.5


def test_criterion_11_ftl_construction():
    """Two-level star: every phase satisfies T_h * delta_h = T_0 * Delta
    exactly, and worst-case 4-approximate follow-the-leader pays at least
    lam/6 times the fixed-root benchmark at lam=4, T_0=5."""
    lam, T0 = 4, 5
    cfg = ExperimentConfig(generator="lb_ftl", k=1, lam=lam, T0=T0)
    stream = build_stream(cfg)
    big = stream.meta["Delta"]
    for Th, dh in zip(stream.meta["phase_lengths"], stream.meta["phase_arm_lengths"]):
        assert Th * dh == T0 * big
    records, summary = run_ftl_baseline(cfg, stream=stream, adversarial_factor=4.0)
    ratio = summary["ratio_vs_root"]
    print(f"[criterion 11] T={stream.T} ratio_vs_root={ratio:.2f} "
          f"(needs >= {lam / 6:.3f})")
    assert ratio >= lam / 6


def test_criterion_12_regret_trend():
    """Average excess of the fractional iterate over 8x the best fixed
    solution on the summarized instances is non-increasing in T (within
    10% slack) for T in {100, 200, 400}."""
    excess = {}
    for T in (100, 200, 400):
        cfg = desk_config(0, T=T, rounding="none", theta_reps=1)
        _, summary, _ = run_online(cfg, track_reduced_benchmark=True)
        e = (
            summary["reduced_cost_sum_frac"]
            - 8 * summary["reduced_benchmark_cost_sum"]
        ) / T
        excess[T] = e
    print(f"[criterion 12] excess/T: " +
          " ".join(f"T={T}: {e:.3f}" for T, e in excess.items()))
    assert excess[200] <= excess[100] + 0.1 * abs(excess[100])
    assert excess[400] <= excess[200] + 0.1 * abs(excess[200])
