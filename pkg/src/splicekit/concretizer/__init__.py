"""Dependency resolution with reuse and splice synthesis."""

from .explain import explain, render_tree
from .model import Objective, SolveOptions, SolveResult, SolveStats, SpliceDecision
from .oracle import oracle_solve
from .solver import concretize, splice_candidates

__all__ = [
    "Objective",
    "SolveOptions",
    "SolveResult",
    "SolveStats",
    "SpliceDecision",
    "concretize",
    "explain",
    "oracle_solve",
    "render_tree",
    "splice_candidates",
]
