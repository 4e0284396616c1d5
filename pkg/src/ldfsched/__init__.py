"""Deficit-driven user prioritization and QoS feasibility-region analysis.

The package has five layers:

* :mod:`ldfsched.model` -- priority decisions, payoff models and the
  structural property checkers (monotonicity, subset payoff equivalence,
  exchangeability).
* :mod:`ldfsched.policy` -- deficit dynamics and the prioritization policies
  (deficit-based max weight, weighted largest-deficit-first, hierarchical
  largest-deficit-first).
* :mod:`ldfsched.lp` / :mod:`ldfsched.geometry` -- a small dense simplex
  kernel (exact-rational and float paths) and the region computations built
  on it.
* :mod:`ldfsched.sim` -- trajectory simulation and the long-run metrics
  (achieved payoffs, excess balance, inter-failure-interval clustering).
* :mod:`ldfsched.oracle` -- independent brute-force cross-checks used by the
  test suite.

A command-line front end lives in :mod:`ldfsched.cli`.
"""

from ldfsched.errors import (
    CapacityError,
    ConfigError,
    DegenerateError,
    EstimationModeError,
)

__all__ = [
    "CapacityError",
    "ConfigError",
    "DegenerateError",
    "EstimationModeError",
]

__version__ = "0.1.0"
