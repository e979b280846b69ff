"""Anatomy of one mirror-descent step on the capped simplex.

The iterate lives on {0 <= y_i, sum y_i = k} over the points revealed so
far.  A step moves in the dual of the hyperbolic-entropy regularizer
(arcsinh coordinates — well-behaved at 0, so new points can join with
zero mass), then projects back by bisecting the dual variable of the
mass constraint.
"""
import numpy as np

from olkm import (
    MetricRegistry,
    WeightedInstance,
    bregman_divergence,
    bregman_project,
    initialize,
    step,
)

reg = MetricRegistry()
ids = reg.add_points([[0.0], [1.0], [4.0], [5.0]])
state = initialize(reg, WeightedInstance.unit(ids[:2]), k=1)
print(f"start: ids={state.y.ids} mass={np.round(state.y.mass, 3)}")

# clients keep arriving at the far pair; mass migrates there
for t in range(12):
    step(reg, state, WeightedInstance.unit([ids[2], ids[3]]))
    if t in (0, 1, 3, 7, 11):
        print(f"after step {t + 1:>2}: mass={np.round(state.y.mass, 3)} "
              f"(eta={state.last_eta:.3f})")

print()
x = np.array([2.0, 0.7, 0.1])
proj = bregman_project(x, k=1, d=3, simplex_only=False)
print(f"projection of {x} onto the capped simplex (k=1): {np.round(proj, 4)}")
print(f"  mass: {proj.sum():.6f}, divergence to input: "
      f"{bregman_divergence(proj, x, beta=1 / 3):.4f}")
