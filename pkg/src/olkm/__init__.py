"""Online learning for sequences of k-median instances.

Pipeline: each round's clients are summarized into a k-point weighted
proxy, a fractional solution over the revealed points is advanced by
mirror descent under a hyperbolic-entropy regularizer, and the fractional
iterate is rounded — greedily (loss growing with k) or by two-phase
dependent randomized rounding (constant expected loss).
"""

from .generators import ExperimentConfig, Stream, build_stream
from .harness import (
    ExactEnumerator,
    RoundRecord,
    read_csv,
    run_ftl_baseline,
    run_online,
    verify_invariants,
    write_csv,
    write_summary,
)
from .metric import (
    CenterSet,
    FractionalSolution,
    MetricError,
    MetricRegistry,
    UnknownPointError,
    WeightedInstance,
    assignment_cost,
    fractional_assignment_cost,
    fractional_costs,
    instance_cost,
)
from .offline import (
    BudgetExceededError,
    KMedianSolution,
    hindsight_optimum,
    restricted_vs_unrestricted_gap,
    solve,
    solve_exact,
    solve_local_search,
)
from .omd import (
    OmdState,
    Subgradient,
    bregman_divergence,
    bregman_project,
    compute_subgradient,
    hyperbolic_entropy,
    initialize,
    learning_rate,
    mirror_update,
    step,
)
from .reduction import ReducedRound, reduce_instance
from .rounding import (
    MatchedPairs,
    RoundingOutcome,
    expected_rounding_cost,
    expected_rounding_costs,
    heuristic_threshold_search,
    pad_to_k,
    round_deterministic,
    round_randomized,
)

__version__ = "0.1.0"
