"""Adversarial streams that separate algorithms from benchmarks.

First: k+1 far-apart clusters against a deterministic algorithm.  Some
cluster is always uncovered by the k announced centers, and the adversary
demands it every round — the algorithm pays roughly the inter-cluster
distance while a well-chosen fixed solution stays cheap.

Second: follow-the-leader with an approximate offline solver on a
two-level star metric.  The phase schedule balances phase length against
arm length so that FTL keeps chasing stale history and loses by a factor
that grows with the tree fan-out.
"""
from olkm import ExperimentConfig, build_stream, run_ftl_baseline, run_online

cfg = ExperimentConfig(generator="lb_det", k=3, T=200, delta=100.0, rounding="det")
records, summary, _ = run_online(cfg)
print("covering adversary (k=3, inter-cluster distance 100, T=200):")
print(f"  algorithm sum of ratios:  {summary['final_cumulative_ratio_det']:.1f}")
print(f"  best fixed sum of ratios: {summary['benchmark_cumulative_ratio']:.1f}")
print(f"  separation: {summary['ratio_vs_benchmark_det']:.2f}  (forced >= k/2 = 1.5)")

print()
cfg = ExperimentConfig(generator="lb_ftl", k=1, lam=3, T0=2)
stream = build_stream(cfg)
records, summary = run_ftl_baseline(cfg, stream=stream, adversarial_factor=4.0)
print(f"two-level star vs 4-approximate FTL (fan-out {stream.meta['lam'] * 2}, "
      f"T={stream.T}):")
print(f"  FTL sum of ratios:        {summary['final_cumulative_ratio']:.1f}")
print(f"  root center (fixed):      {summary['root_cumulative_ratio']:.1f}")
print(f"  FTL / root = {summary['ratio_vs_root']:.2f}  — FTL is not competitive")
