"""Online mirror descent over a growing (capped) scaled simplex.

The regularizer is the hyperbolic entropy
``phi_beta(x) = sum_i x_i*arcsinh(x_i/beta) - sqrt(x_i^2 + beta^2)`` with
``beta = 1/d`` where d is the current number of revealed points.  Its
gradient ``arcsinh(x_i/beta)`` is defined at zero, which is what lets new
coordinates enter with mass 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .metric import (
    MASS_TOL,
    FractionalSolution,
    MetricError,
    MetricRegistry,
    WeightedInstance,
    fractional_costs,
)

# |arcsinh argument| above this would overflow sinh; unreachable in practice
ARCSINH_CLAMP = 700.0


def hyperbolic_entropy(x, beta: float) -> float:
    if beta <= 0:
        raise MetricError("beta must be positive")
    x = np.asarray(x, dtype=float)
    return float(np.sum(x * np.arcsinh(x / beta) - np.sqrt(x * x + beta * beta)))


def bregman_divergence(x, y, beta: float) -> float:
    """Divergence induced by the hyperbolic entropy; >= 0, zero iff x == y."""
    if beta <= 0:
        raise MetricError("beta must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(
        np.sum(
            x * (np.arcsinh(x / beta) - np.arcsinh(y / beta))
            - np.sqrt(x * x + beta * beta)
            + np.sqrt(y * y + beta * beta)
        )
    )


@dataclass
class Subgradient:
    values: np.ndarray
    per_client_M: dict[int, float]

    @property
    def inf_norm(self) -> float:
        return float(np.abs(self.values).max()) if self.values.size else 0.0


@dataclass
class OmdState:
    """Mutable state of the mirror-descent loop."""

    y: FractionalSolution
    G: float = 0.0
    t: int = 0
    simplex_only: bool = True
    last_eta: float = 0.0

    @property
    def d(self) -> int:
        return len(self.y.ids)

    def to_json(self) -> dict:
        return {
            "ids": list(map(int, self.y.ids)),
            "mass": [float(v) for v in self.y.mass],
            "k": self.y.k,
            "G": self.G,
            "t": self.t,
            "simplex_only": self.simplex_only,
        }

    @classmethod
    def from_json(cls, obj) -> "OmdState":
        y = FractionalSolution(list(obj["ids"]), np.array(obj["mass"]), obj["k"])
        return cls(
            y=y,
            G=obj["G"],
            t=obj["t"],
            simplex_only=obj.get("simplex_only", True),
        )


def initialize(
    reg: MetricRegistry,
    R0: WeightedInstance,
    k: int,
    simplex_only: bool = True,
) -> OmdState:
    """Indicator of the k lowest-id distinct points of the opening round."""
    from .offline import dedupe_pool

    distinct = dedupe_pool(reg, R0.ids)
    if len(distinct) < k:
        raise MetricError(f"need at least k={k} distinct points to initialize")
    y = FractionalSolution.indicator(distinct[:k], k)
    return OmdState(y=y, simplex_only=simplex_only)


def extend_with_new_points(state: OmdState, ids) -> None:
    """Grow the solution with zero mass for unseen ids, in arrival order."""
    known = set(state.y.ids)
    new = []
    for i in ids:
        i = int(i)
        if i not in known:
            known.add(i)
            new.append(i)
    if new:
        state.y.ids.extend(new)
        state.y.mass = np.concatenate([state.y.mass, np.zeros(len(new))])


def compute_subgradient(
    reg: MetricRegistry, state: OmdState, R: WeightedInstance
) -> Subgradient:
    """Per-coordinate value -sum_x w_x * (M_x - min(M_x, d(x, v_i)))."""
    if abs(state.y.mass.sum() - state.y.k) > MASS_TOL:
        raise MetricError("state mass does not sum to k")
    ids = np.asarray(state.y.ids)
    _, M = fractional_costs(reg, state.y, R.ids)
    d = reg.dist_matrix(R.ids, ids)
    contrib = R.weights[:, None] * (M[:, None] - np.minimum(M[:, None], d))
    values = -contrib.sum(axis=0)
    per_client = {int(x): float(m) for x, m in zip(R.ids, M)}
    return Subgradient(values=values, per_client_M=per_client)


def learning_rate(state: OmdState, grad: Subgradient) -> float:
    """1 / (G * sqrt(t)) with G the running max gradient sup-norm.

    Updates G in place.  When every gradient so far is zero the rate is 0
    and the step is a no-op.
    """
    state.G = max(state.G, grad.inf_norm)
    if state.G == 0:
        return 0.0
    return 1.0 / (state.G * np.sqrt(state.t))


def mirror_update(state: OmdState, grad: Subgradient, eta: float) -> np.ndarray:
    """Unconstrained dual step: sinh(arcsinh(d*y_i) - eta*g_i) / d."""
    d = state.d
    if grad.values.size != d:
        raise MetricError("gradient length mismatch")
    arg = np.arcsinh(d * state.y.mass) - eta * grad.values
    arg = np.clip(arg, -ARCSINH_CLAMP, ARCSINH_CLAMP)
    x = np.sinh(arg) / d
    if not np.all(np.isfinite(x)):
        raise MetricError("non-finite mirror update")
    return x


def bregman_project(
    x: np.ndarray,
    k: int,
    d: int,
    simplex_only: bool = True,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> np.ndarray:
    """Bregman projection of x onto the (capped) scaled simplex.

    The KKT conditions of the separable divergence give
    ``y_i(mu) = clip(beta*sinh(arcsinh(x_i/beta) - mu), 0, cap)`` with
    ``beta = 1/d``; the total mass is continuous and non-increasing in mu,
    so the dual variable is found by bisection.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise MetricError("projection input must be finite and nonnegative")
    if not simplex_only and x.size < k:
        raise MetricError("capped simplex of dimension < k is empty")
    beta = 1.0 / d
    a = np.arcsinh(x / beta)
    cap = np.inf if simplex_only else 1.0

    def total(mu):
        return np.minimum(beta * np.sinh(np.clip(a - mu, -ARCSINH_CLAMP, ARCSINH_CLAMP)), cap).clip(min=0.0).sum()

    hi = float(a.max()) + 1.0
    lo = -hi
    # expand the lower bracket until it over-fills; with the cap the total
    # saturates at x.size >= k, without it the total is unbounded below mu
    while total(lo) < k:
        if not simplex_only and x.size * 1.0 <= k:
            break
        lo = 2 * lo - 1.0
        if lo < -1e6:
            raise MetricError("projection bracketing failed")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if total(mid) >= k:
            lo = mid
        else:
            hi = mid
        y = np.minimum(
            beta * np.sinh(np.clip(a - lo, -ARCSINH_CLAMP, ARCSINH_CLAMP)), cap
        ).clip(min=0.0)
        if abs(y.sum() - k) <= tol:
            break
    y = np.minimum(
        beta * np.sinh(np.clip(a - lo, -ARCSINH_CLAMP, ARCSINH_CLAMP)), cap
    ).clip(min=0.0)
    if abs(y.sum() - k) > 1e-8:
        raise MetricError("projection did not converge")
    return y


def step(reg: MetricRegistry, state: OmdState, R: WeightedInstance) -> OmdState:
    """One full mirror-descent round against the instance R."""
    extend_with_new_points(state, R.ids)
    grad = compute_subgradient(reg, state, R)
    state.t += 1
    eta = learning_rate(state, grad)
    state.last_eta = eta
    if eta > 0:
        x = mirror_update(state, grad, eta)
        state.y.mass = bregman_project(
            x, state.y.k, state.d, simplex_only=state.simplex_only
        )
    state.y.validate(box=not state.simplex_only)
    return state
