"""End-to-end online runs, ratio accounting, the FTL baseline and the
invariant battery.

The loop per round: announce an integral solution rounded from the current
fractional iterate, then reveal the round's clients, score both against the
round's optimum, summarize the clients into a k-point weighted proxy, and
advance the mirror-descent state on that proxy.
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import offline, omd, rounding
from .generators import ExperimentConfig, Stream, build_stream
from .metric import (
    CenterSet,
    FractionalSolution,
    MetricError,
    MetricRegistry,
    WeightedInstance,
    fractional_costs,
    instance_cost,
)
from .reduction import ReducedRound, reduce_instance

CSV_VERSION = "olkm_v1"

CSV_COLUMNS = [
    "t",
    "cost_fractional",
    "cost_det",
    "cost_rand",
    "opt_t",
    "opt_exact",
    "ratio_frac",
    "ratio_det",
    "ratio_rand",
    "cumulative_ratio_frac",
    "cumulative_ratio_det",
    "cumulative_ratio_rand",
    "cumulative_ratio_benchmark",
    "d_t",
    "G_t",
    "eta_t",
    "mass_by_region",
]


@dataclass
class RoundRecord:
    t: int
    cost_fractional: float = math.nan
    cost_det: float = math.nan
    cost_rand: float = math.nan
    opt_t: float = math.nan
    opt_exact: bool = True
    ratio_frac: float = math.nan
    ratio_det: float = math.nan
    ratio_rand: float = math.nan
    cumulative_ratio_frac: float = math.nan
    cumulative_ratio_det: float = math.nan
    cumulative_ratio_rand: float = math.nan
    cumulative_ratio_benchmark: float = math.nan
    d_t: int = 0
    G_t: float = 0.0
    eta_t: float = 0.0
    mass_by_region: dict[str, float] | None = None


class ExactEnumerator:
    """Per-round optima plus hindsight accumulation over one candidate pool.

    When the size-k subset count fits the budget, every subset's cost is
    evaluated each round, giving exact per-round optima and exact best
    fixed solutions (for both raw instances and their reduced proxies)
    without a second pass.  Beyond budget, optima fall back to local search
    and are flagged inexact.
    """

    def __init__(self, reg: MetricRegistry, pool, k: int, budget: int | None = None):
        self.reg = reg
        self.k = k
        self.pool = offline.dedupe_pool(reg, pool)
        budget = offline.subset_budget() if budget is None else budget
        self.exact = math.comb(len(self.pool), k) <= budget
        if self.exact:
            self.combos = offline._combinations(len(self.pool), k)
            self.ratio_totals = np.zeros(len(self.combos))
            self.reduced_totals = np.zeros(len(self.combos))
        self.rounds_seen = 0

    def _combo_costs(self, R: WeightedInstance) -> np.ndarray:
        d = self.reg.dist_matrix(self.pool, R.ids)
        return d[self.combos].min(axis=1) @ R.weights

    def opt(self, R: WeightedInstance) -> tuple[float, bool]:
        if self.exact:
            return float(self._combo_costs(R).min()), True
        # out of budget: estimate from the round's own points (at most a
        # factor-2 overshoot) and flag the round inexact
        sol = offline.solve(self.reg, R, self.k, R.ids)
        return sol.cost, False

    def account(
        self,
        V: WeightedInstance,
        reduced: WeightedInstance | None = None,
    ) -> tuple[float, bool, float]:
        """Score one round: returns (opt_t, exact, prefix benchmark Σρ).

        The prefix benchmark is the best fixed subset's cumulative ratio
        over rounds accounted so far (NaN when enumeration is out of
        budget — the caller computes a fallback at the end)."""
        self.rounds_seen += 1
        if not self.exact:
            opt, _ = self.opt(V)
            return opt, False, math.nan
        costs = self._combo_costs(V)
        opt = float(costs.min())
        if opt <= 0:
            raise MetricError("per-round optimum is zero")
        self.ratio_totals += costs / opt
        if reduced is not None:
            self.reduced_totals += self._combo_costs(reduced)
        return opt, True, float(self.ratio_totals.min())

    def best_fixed(self) -> tuple[CenterSet, float]:
        """Best fixed solution for the accounted rounds' ratio objective."""
        if not self.exact:
            raise MetricError("enumeration out of budget")
        best = int(np.argmin(self.ratio_totals))
        ids = tuple(self.pool[j] for j in self.combos[best])
        return CenterSet(ids), float(self.ratio_totals[best])

    def best_fixed_reduced(self) -> tuple[CenterSet, float]:
        """Best fixed solution for the summed reduced-instance cost."""
        if not self.exact:
            raise MetricError("enumeration out of budget")
        best = int(np.argmin(self.reduced_totals))
        ids = tuple(self.pool[j] for j in self.combos[best])
        return CenterSet(ids), float(self.reduced_totals[best])


@dataclass
class RunTrace:
    """Optional per-round artifacts for exact invariant checks."""

    y_snapshots: list[FractionalSolution] = field(default_factory=list)
    prepad_det: list[CenterSet | None] = field(default_factory=list)
    prepad_rand: list[list[CenterSet]] = field(default_factory=list)
    reduced: list[ReducedRound] = field(default_factory=list)
    instances: list[WeightedInstance] = field(default_factory=list)
    thresholds_det: list[float] = field(default_factory=list)


def _theta_seed(seed: int, t: int, rep: int) -> int:
    # stable per-(run, round, repetition) stream for replayable θ draws
    return (seed * 1_000_003 + t * 131 + rep) % (2**63)


def _mass_by_region(state: omd.OmdState, regions) -> dict[str, float] | None:
    if regions is None:
        return None
    out: dict[str, float] = {}
    for pid, m in zip(state.y.ids, state.y.mass):
        r = regions.get(int(pid))
        if r is not None:
            out[r] = out.get(r, 0.0) + float(m)
    return {r: round(v, 12) for r, v in sorted(out.items())}


def run_online(
    cfg: ExperimentConfig,
    stream: Stream | None = None,
    trace: bool = False,
    track_reduced_benchmark: bool = False,
    compute_opt: bool = True,
) -> tuple[list[RoundRecord], dict, RunTrace | None]:
    """Full online pipeline over rounds 0..T; round 0 only initializes.

    Deterministic given (cfg, seed): randomized rounding replays from
    per-round θ seeds derived from the config seed.  ``compute_opt=False``
    skips all optimum/benchmark accounting (ratios become NaN) — useful
    when only the iterates and rounded solutions matter.
    """
    t_start = time.perf_counter()
    stream = stream or build_stream(cfg)
    reg, k = stream.reg, cfg.k
    do_det = cfg.rounding in ("det", "both")
    do_rand = cfg.rounding in ("rand", "both")

    V0 = stream.instance(0)
    red0 = reduce_instance(reg, V0, k)
    state = omd.initialize(reg, red0.instance, k, simplex_only=cfg.simplex_only)

    enum = ExactEnumerator(reg, range(len(reg)), k) if compute_opt else None
    records: list[RoundRecord] = []
    tr = RunTrace() if trace else None
    cum_frac = cum_det = cum_rand = 0.0
    frac_reduced_sum = 0.0

    for t in range(1, stream.T + 1):
        y = state.y
        data = rounding.ScanData(reg, y)
        rec = RoundRecord(t=t, d_t=state.d, G_t=state.G, eta_t=state.last_eta)

        Y_det = Y_announce = None
        rand_outs: list[rounding.RoundingOutcome] = []
        if do_det:
            if cfg.heuristic_threshold:
                out = rounding.heuristic_threshold_search(
                    reg, y, k, mode="deterministic", data=data
                )
            else:
                out = rounding.round_deterministic(reg, y, k, data=data)
            if trace:
                tr.prepad_det.append(out.centers)
                tr.thresholds_det.append(out.threshold_used)
            Y_det = rounding.pad_to_k(reg, out.centers, y, k) if cfg.pad else out.centers
            Y_announce = Y_det
        if do_rand:
            for rep in range(cfg.theta_reps):
                seed = _theta_seed(cfg.seed, t, rep)
                if cfg.heuristic_threshold:
                    out = rounding.heuristic_threshold_search(
                        reg, y, k, mode="randomized", rng_seed=seed, data=data
                    )
                else:
                    out = rounding.round_randomized(
                        reg, y, k, rng_seed=seed, data=data
                    )
                rand_outs.append(out)
            if trace:
                tr.prepad_rand.append([o.centers for o in rand_outs])
            if Y_announce is None:
                first = rand_outs[0].centers
                Y_announce = (
                    rounding.pad_to_k(reg, first, y, k) if cfg.pad else first
                )
        if Y_announce is None:
            if stream.adaptive:
                raise MetricError("adaptive streams need an announced solution")

        V = stream.instance(t, Y_announce)
        fr_costs, _ = fractional_costs(reg, y, V.ids)
        rec.cost_fractional = float(fr_costs @ V.weights)
        if Y_det is not None:
            rec.cost_det = instance_cost(reg, Y_det, V)
        if rand_outs:
            costs = []
            for o in rand_outs:
                Yr = rounding.pad_to_k(reg, o.centers, y, k) if cfg.pad else o.centers
                costs.append(instance_cost(reg, Yr, V))
            rec.cost_rand = float(np.mean(costs))

        red = reduce_instance(reg, V, k)
        if track_reduced_benchmark:
            rc, _ = fractional_costs(reg, y, red.instance.ids)
            frac_reduced_sum += float(rc @ red.instance.weights)
        if enum is not None:
            opt, exact, bench = enum.account(
                V, red.instance if track_reduced_benchmark else None
            )
            rec.opt_t, rec.opt_exact = opt, exact
            rec.ratio_frac = rec.cost_fractional / opt
            cum_frac += rec.ratio_frac
            rec.cumulative_ratio_frac = cum_frac
            if Y_det is not None:
                rec.ratio_det = rec.cost_det / opt
                cum_det += rec.ratio_det
                rec.cumulative_ratio_det = cum_det
            if rand_outs:
                rec.ratio_rand = rec.cost_rand / opt
                cum_rand += rec.ratio_rand
                rec.cumulative_ratio_rand = cum_rand
            rec.cumulative_ratio_benchmark = bench
        rec.mass_by_region = _mass_by_region(state, stream.regions)
        records.append(rec)

        if trace:
            tr.y_snapshots.append(y.copy())
            tr.instances.append(V)
            tr.reduced.append(red)
        omd.step(reg, state, red.instance)

    summary: dict = {
        "generator": cfg.generator,
        "k": k,
        "T": stream.T,
        "seed": cfg.seed,
        "rounds_scored": len(records),
        "final_cumulative_ratio_frac": cum_frac,
        "final_cumulative_ratio_det": cum_det if do_det else None,
        "final_cumulative_ratio_rand": cum_rand if do_rand else None,
    }
    if enum is None:
        summary["wall_time_s"] = time.perf_counter() - t_start
        return records, summary, tr
    if enum.exact:
        bench_centers, bench_total = enum.best_fixed()
        summary["benchmark_exact"] = True
    else:
        opt_values = [r.opt_t for r in records]
        rounds = [stream.instance(r.t) for r in records] if not stream.adaptive else None
        if rounds is None:
            raise MetricError("adaptive stream beyond enumeration budget")
        sol = offline.hindsight_optimum(
            reg, rounds, k, objective="sum_ratio", opt_values=opt_values
        )
        bench_centers, bench_total = sol.centers, sol.cost
        summary["benchmark_exact"] = False
    summary["benchmark_centers"] = list(bench_centers.centers)
    summary["benchmark_cumulative_ratio"] = bench_total
    if do_det and bench_total > 0:
        summary["ratio_vs_benchmark_det"] = cum_det / bench_total
    if do_rand and bench_total > 0:
        summary["ratio_vs_benchmark_rand"] = cum_rand / bench_total
    if bench_total > 0:
        summary["ratio_vs_benchmark_frac"] = cum_frac / bench_total
    if track_reduced_benchmark and enum.exact:
        rb_centers, rb_total = enum.best_fixed_reduced()
        summary["reduced_cost_sum_frac"] = frac_reduced_sum
        summary["reduced_benchmark_cost_sum"] = rb_total
        summary["reduced_benchmark_centers"] = list(rb_centers.centers)
    summary["wall_time_s"] = time.perf_counter() - t_start
    return records, summary, tr


def run_ftl_baseline(
    cfg: ExperimentConfig,
    stream: Stream | None = None,
    adversarial_factor: float | None = None,
) -> tuple[list[RoundRecord], dict]:
    """Follow-the-leader: each round output the best fixed solution for the
    aggregated prior instances.

    ``adversarial_factor`` switches to worst-case approximate FTL: among
    centers whose aggregated cost is within the factor of the minimum, the
    most expensive one is chosen (k=1 only — this is the regime the
    two-level star construction defeats).
    """
    t_start = time.perf_counter()
    stream = stream or build_stream(cfg)
    reg, k = stream.reg, cfg.k
    if adversarial_factor is not None and k != 1:
        raise MetricError("adversarial approximate FTL is a k=1 analysis")
    records: list[RoundRecord] = []
    cum = 0.0
    n = len(reg)
    bench_sums: np.ndarray | None = None

    if k == 1:
        # incremental: one aggregated cost per candidate center
        full = reg.dist_matrix(range(n), range(n))
        agg = np.zeros(n)
        bench_sums = np.zeros(n)
        V0 = stream.instance(0)
        agg += full[:, V0.ids] @ V0.weights
        for t in range(1, stream.T + 1):
            if adversarial_factor is not None:
                feas = np.flatnonzero(agg <= adversarial_factor * agg.min())
                center = int(feas[np.argmax(agg[feas])])
            else:
                center = int(np.argmin(agg))
            V = stream.instance(t, CenterSet((center,)))
            round_costs = full[:, V.ids] @ V.weights
            opt = float(round_costs.min())
            if opt <= 0:
                raise MetricError("per-round optimum is zero")
            bench_sums += round_costs / opt
            cost = float(round_costs[center])
            cum += cost / opt
            records.append(
                RoundRecord(
                    t=t,
                    cost_det=cost,
                    opt_t=opt,
                    ratio_det=cost / opt,
                    cumulative_ratio_det=cum,
                    cumulative_ratio_benchmark=float(bench_sums.min()),
                    d_t=n,
                )
            )
            agg += round_costs
        bench_total = float(bench_sums.min())
        bench_centers = CenterSet((int(np.argmin(bench_sums)),))
    else:
        enum = ExactEnumerator(reg, range(n), k)
        agg_members: dict[int, float] = {}
        V0 = stream.instance(0)
        for pid, w in V0.members:
            agg_members[pid] = agg_members.get(pid, 0.0) + w
        for t in range(1, stream.T + 1):
            merged = WeightedInstance(sorted(agg_members.items()))
            sol = offline.solve(reg, merged, k, range(n), method="auto")
            V = stream.instance(t, sol.centers)
            opt, exact, bench = enum.account(V)
            cost = instance_cost(reg, sol.centers, V)
            cum += cost / opt
            records.append(
                RoundRecord(
                    t=t,
                    cost_det=cost,
                    opt_t=opt,
                    opt_exact=exact,
                    ratio_det=cost / opt,
                    cumulative_ratio_det=cum,
                    cumulative_ratio_benchmark=bench,
                    d_t=n,
                )
            )
            for pid, w in V.members:
                agg_members[pid] = agg_members.get(pid, 0.0) + w
        bench_centers, bench_total = enum.best_fixed()

    summary = {
        "generator": cfg.generator,
        "k": k,
        "T": stream.T,
        "seed": cfg.seed,
        "algorithm": "ftl" if adversarial_factor is None else "ftl_adversarial",
        "final_cumulative_ratio": cum,
        "benchmark_centers": list(bench_centers.centers),
        "benchmark_cumulative_ratio": bench_total,
        "ratio_vs_benchmark": cum / bench_total if bench_total > 0 else math.inf,
        "wall_time_s": time.perf_counter() - t_start,
    }
    if stream.meta.get("root") is not None and bench_sums is not None:
        root = stream.meta["root"]
        summary["root_cumulative_ratio"] = float(bench_sums[root])
        summary["ratio_vs_root"] = cum / float(bench_sums[root])
    return records, summary


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return f"{v:.12g}"
    return str(v)


def write_csv(path: str, records: list[RoundRecord]) -> None:
    """Versioned CSV: first line is the format tag, then header + rows;
    floats carry 12 significant digits."""
    with open(path, "w", newline="") as fh:
        fh.write(CSV_VERSION + "\n")
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in records:
            row = []
            for col in CSV_COLUMNS:
                v = getattr(r, col)
                if col == "mass_by_region":
                    row.append(json.dumps(v, sort_keys=True) if v else "")
                else:
                    row.append(_fmt(v))
            writer.writerow(row)


def read_csv(path: str) -> list[dict]:
    with open(path) as fh:
        version = fh.readline().strip()
        if version != CSV_VERSION:
            raise MetricError(f"unknown CSV version {version!r}")
        return list(csv.DictReader(fh))


def write_summary(path: str, summary: dict) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# invariant battery


def _random_weighted_instance(rng, reg_points: int, size: int, dim=2):
    reg = MetricRegistry()
    ids = reg.add_points(rng.random((reg_points, dim)) * 4)
    members = [
        (int(i), float(w))
        for i, w in zip(
            rng.choice(ids, size, replace=False), 1 + rng.random(size)
        )
    ]
    return reg, WeightedInstance(members)


def _suite_subgradient(seed: int, cases: int = 50) -> dict:
    from itertools import combinations

    rng = np.random.default_rng(seed)
    failures = []
    for case in range(cases):
        k = int(rng.integers(1, 4))
        d = int(rng.integers(k + 1, 11))
        reg, R = _random_weighted_instance(rng, d, min(d, 6))
        mass = rng.random(d)
        mass *= k / mass.sum()
        y = FractionalSolution(list(range(d)), mass, k)
        state = omd.OmdState(y=y)
        g = omd.compute_subgradient(reg, state, R)
        f_y, _ = fractional_costs(reg, y, R.ids)
        base = float(f_y @ R.weights)
        for combo in combinations(range(d), k):
            z = np.zeros(d)
            z[list(combo)] = 1.0
            zf = FractionalSolution(list(range(d)), z, k)
            fz, _ = fractional_costs(reg, zf, R.ids)
            lhs = float(fz @ R.weights)
            rhs = base + float(g.values @ (z - mass))
            if lhs < rhs - 1e-9:
                failures.append({"case": case, "combo": combo, "gap": rhs - lhs})
    return {"cases": cases, "passed": not failures, "failures": failures[:5]}


def _suite_projection(seed: int, cases: int = 30, comparators: int = 50) -> dict:
    rng = np.random.default_rng(seed)
    failures = []
    for case in range(cases):
        k = int(rng.integers(1, 4))
        d = int(rng.integers(k + 1, 12))
        x = rng.random(d) * 3
        proj = omd.bregman_project(x, k, d, simplex_only=False)
        if abs(proj.sum() - k) > 1e-8 or proj.min() < -1e-9 or proj.max() > 1 + 1e-8:
            failures.append({"case": case, "reason": "feasibility"})
            continue
        bp = omd.bregman_divergence(proj, x, 1.0 / d)
        for _ in range(comparators):
            z = rng.random(d)
            z = np.minimum(z * k / z.sum(), 1.0)
            deficit = k - z.sum()
            while deficit > 1e-12:
                room = 1.0 - z
                add = np.minimum(room, deficit * room / room.sum())
                z = z + add
                deficit = k - z.sum()
            bz = omd.bregman_divergence(z, x, 1.0 / d)
            if bp > bz + 1e-9:
                failures.append({"case": case, "reason": "optimality", "gap": bp - bz})
                break
    return {"cases": cases, "passed": not failures, "failures": failures[:5]}


def _suite_rounding(seed: int, cases: int = 20) -> dict:
    rng = np.random.default_rng(seed)
    failures = []
    for case in range(cases):
        k = int(rng.integers(1, 4))
        d = int(rng.integers(k + 2, 15))
        reg = MetricRegistry()
        ids = reg.add_points(rng.random((d, 2)) * 5)
        mass = rng.random(d)
        mass *= k / mass.sum()
        y = FractionalSolution(list(ids), mass, k)
        det = rounding.round_deterministic(reg, y, k)
        if len(det.centers) > k:
            failures.append({"case": case, "reason": "det size"})
        dc, _ = fractional_costs(reg, y, ids)
        dY = reg.dist_matrix(ids, det.centers.centers).min(axis=1)
        if np.any(dY > (2 * k + 2) * dc + 1e-9):
            failures.append({"case": case, "reason": "det revealed loss"})
        exp = rounding.expected_rounding_costs(reg, y, k, ids)
        if np.any(exp > 8 * dc + 1e-9):
            failures.append({"case": case, "reason": "rand revealed expectation"})
        for rep in range(3):
            out = rounding.round_randomized(reg, y, k, rng_seed=seed + rep)
            if len(out.centers) > k:
                failures.append({"case": case, "reason": "rand size"})
    return {"cases": cases, "passed": not failures, "failures": failures[:5]}


def _suite_reduction(seed: int, cases: int = 30) -> dict:
    rng = np.random.default_rng(seed)
    failures = []
    for case in range(cases):
        k = int(rng.integers(1, 4))
        n = int(rng.integers(k + 2, 20))
        reg = MetricRegistry()
        pts = rng.random((n, 2))
        d = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
        min_pos = d[d > 0].min()
        ids = reg.add_points(pts / min_pos)  # min pairwise distance 1
        red = reduce_instance(reg, WeightedInstance.unit(ids), k)
        total = sum(w for _, w in red.instance.members)
        if len(red.instance.members) != k:
            failures.append({"case": case, "reason": "size"})
        if total > k + 1 + 1e-9:
            failures.append({"case": case, "reason": "weight", "total": total})
    return {"cases": cases, "passed": not failures, "failures": failures[:5]}


def _suite_restricted_gap(seed: int, cases: int = 30) -> dict:
    rng = np.random.default_rng(seed)
    failures = []
    for case in range(cases):
        k = int(rng.integers(1, 4))
        n = int(rng.integers(k + 1, 11))
        reg = MetricRegistry()
        all_ids = reg.add_points(rng.random((n + 5, 2)) * 3)
        R = WeightedInstance.unit(rng.choice(all_ids, n, replace=False))
        gap = offline.restricted_vs_unrestricted_gap(reg, R, k)
        if gap > 2 + 1e-9:
            failures.append({"case": case, "gap": gap})
    return {"cases": cases, "passed": not failures, "failures": failures[:5]}


SUITES = {
    "subgradient": _suite_subgradient,
    "projection": _suite_projection,
    "rounding": _suite_rounding,
    "reduction": _suite_reduction,
    "restricted_gap": _suite_restricted_gap,
}


def verify_invariants(seed: int = 7, suite: str = "all") -> dict:
    names = list(SUITES) if suite == "all" else [suite]
    report = {}
    for name in names:
        if name not in SUITES:
            raise MetricError(f"unknown suite {name!r}")
        report[name] = SUITES[name](seed)
    report["all_passed"] = all(report[n]["passed"] for n in names)
    return report
