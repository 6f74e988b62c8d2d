"""Minibatch and accelerated model-based stochastic convex optimization.

The library builds convex lower models of sampled losses (linear,
truncated/Polyak, or exact), solves the regularized model subproblem each
iteration (closed forms, a box-QP dual, or damped Newton), and wraps the
result in base, iterate-averaging, and accelerated three-term loops.  A
benchmark harness sweeps methods over synthetic problems and summarizes
time-to-accuracy with performance profiles and speedup tables.
"""

from . import analysis, geometry, harness, models, optimizers, problems, prox  # noqa: F401

__all__ = [
    "analysis",
    "geometry",
    "harness",
    "models",
    "optimizers",
    "problems",
    "prox",
]

__version__ = "0.1.0"
