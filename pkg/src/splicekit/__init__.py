"""splicekit: a desk-scale, splice-aware package manager."""

from .buildcache import BuildCache, CacheEntry
from .concretizer import SolveOptions, SolveResult, concretize, explain, oracle_solve
from .parser import format_spec, parse_spec
from .repo import PackageDef, Repo, load_repo
from .spec import AbstractSpec, ConcreteNode, ConcreteSpec, NodeConstraints, dag_hash, merge_constraints, satisfies
from .version import Version, VersionConstraint

__version__ = "0.1.0"

__all__ = [
    "AbstractSpec",
    "BuildCache",
    "CacheEntry",
    "ConcreteNode",
    "ConcreteSpec",
    "NodeConstraints",
    "PackageDef",
    "Repo",
    "SolveOptions",
    "SolveResult",
    "Version",
    "VersionConstraint",
    "concretize",
    "dag_hash",
    "explain",
    "format_spec",
    "load_repo",
    "merge_constraints",
    "oracle_solve",
    "parse_spec",
    "satisfies",
]
