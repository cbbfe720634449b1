"""Shared solver vocabulary: options, choices, results and the reusable-spec tables.

Both the search in :mod:`.solver` and the enumerator in :mod:`.oracle`
describe a solution the same way: one :class:`Build` or :class:`Reuse`
choice per package name, the edges between names, and the splice slots a
non-intact reuse filled with a replacement.  :func:`materialize` turns
that description into a hashed :class:`ConcreteSpec`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property, total_ordering
from typing import Optional, Union

from ..buildcache import BuildCache
from ..repo import CanSplice, PackageDef, Repo
from ..spec import BUILD, LINK_RUN, ConcreteNode, ConcreteSpec, SpecBuilder, Variants, node_hash, satisfies
from ..version import Version

UNLIMITED = 0


@dataclass(frozen=True)
class SolveOptions:
    reuse_enabled: bool = True
    splice_enabled: bool = False
    max_candidates_per_node: int = UNLIMITED
    deterministic_seed: int = 0
    default_os: str = "linux"
    default_target: str = "x86_64"

    def __post_init__(self) -> None:
        if self.splice_enabled and not self.reuse_enabled:
            raise ValueError("splicing requires reuse to be enabled")
        if self.max_candidates_per_node < 0:
            raise ValueError("max_candidates_per_node must be positive (0 = unlimited)")


@total_ordering
@dataclass(frozen=True)
class Objective:
    """Solution cost.  Lower is better.

    The four headline counts cover every node.  Ranking puts the version and
    variant penalties of *built* nodes ahead of the build count, so a solver
    never disables a default variant or downgrades a fresh build just to
    skip building a dependency; among equally good builds, fewer builds win,
    then the penalties of reused nodes, then the number of splices.
    """

    builds: int = 0
    version_penalty: int = 0
    default_deviation: int = 0
    splice_count: int = 0
    build_version_penalty: int = 0
    build_default_deviation: int = 0

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.builds, self.version_penalty, self.default_deviation, self.splice_count)

    def rank(self) -> tuple[int, ...]:
        return rank_key(
            self.build_version_penalty,
            self.build_default_deviation,
            self.builds,
            self.version_penalty,
            self.default_deviation,
            self.splice_count,
        )

    def __lt__(self, other: Objective) -> bool:
        return self.rank() < other.rank()

    def to_dict(self) -> dict[str, int]:
        return {
            "builds": self.builds,
            "version_penalty": self.version_penalty,
            "default_deviation": self.default_deviation,
            "splice_count": self.splice_count,
            "build_version_penalty": self.build_version_penalty,
            "build_default_deviation": self.build_default_deviation,
        }


def rank_key(bvp: int, bdev: int, builds: int, vp: int, dev: int, splices: int) -> tuple[int, ...]:
    return (bvp, bdev, builds, vp - bvp, dev - bdev, splices)


@dataclass(frozen=True)
class SpliceDecision:
    parent_hash: str
    parent_name: str
    replaced_name: str
    replaced_hash: str
    replacement_name: str
    replacement_hash: str
    transitive: bool

    def to_dict(self) -> dict[str, object]:
        return {
            "parent": self.parent_name,
            "parent_hash": self.parent_hash,
            "replaced": self.replaced_name,
            "replaced_hash": self.replaced_hash,
            "replacement": self.replacement_name,
            "replacement_hash": self.replacement_hash,
            "transitive": self.transitive,
        }


@dataclass
class SolveStats:
    decisions: int = 0
    backtracks: int = 0
    leaves: int = 0
    wall_time: float = 0.0


@dataclass
class SolveResult:
    spec: ConcreteSpec
    reused: frozenset[str]
    to_build: frozenset[str]
    splices: list[SpliceDecision]
    objective: Objective
    stats: SolveStats = field(default_factory=SolveStats)
    tie_key: tuple = ()

    def to_dict(self, include_timing: bool = False) -> dict[str, object]:
        stats: dict[str, object] = {
            "decisions": self.stats.decisions,
            "backtracks": self.stats.backtracks,
            "leaves": self.stats.leaves,
        }
        if include_timing:
            stats["wall_time"] = self.stats.wall_time
        return {
            "root": self.spec.root,
            "spec": self.spec.to_document(),
            "reused": sorted(self.reused),
            "to_build": sorted(self.to_build),
            "splices": [s.to_dict() for s in self.splices],
            "objective": self.objective.to_dict(),
            "stats": stats,
        }

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), sort_keys=True, indent=2)


@dataclass(frozen=True)
class Build:
    version: Version
    variants: Variants
    os: str
    target: str


@dataclass(frozen=True)
class Reuse:
    hash: str
    intact: bool


Choice = Union[Build, Reuse]


@dataclass(frozen=True)
class CachedNode:
    hash: str
    node: ConcreteNode
    link_run: tuple[tuple[str, str], ...]  # (child name, child hash)
    build: tuple[tuple[str, str], ...]
    closure: Optional[dict[str, str]]  # name -> hash over the whole subgraph; None if a name repeats
    provides: tuple[str, ...]
    version_index: int
    deviation: int


class ProblemFacts:
    """Repo- and cache-derived tables a solve reads but never mutates."""

    def __init__(self, repo: Repo, cache: BuildCache | None):
        self.repo = repo
        self.cache = cache if cache is not None else BuildCache()
        self.cached: dict[str, CachedNode] = {}
        self.by_name: dict[str, list[str]] = {}
        self._splice_candidates: dict[str, list[tuple[str, str, CanSplice]]] = {}
        self.size = len(self.cache)
        self._load()

    def _load(self) -> None:
        usable: dict[str, bool] = {}
        for h in sorted(self.cache.by_hash):
            spec = self.cache.lookup_by_hash(h)
            if spec is None:
                continue
            ok = all(spec.nodes[x].name in self.repo.packages for x in spec.nodes)
            usable[h] = ok
            if not ok:
                continue
            node = spec.root_node
            pkg = self.repo.packages[node.name]
            closure: Optional[dict[str, str]] = {}
            for x in spec.nodes:
                n = spec.nodes[x].name
                if n in closure and closure[n] != x:  # type: ignore[operator]
                    closure = None
                    break
                closure[n] = x  # type: ignore[index]
            lr = tuple((c.name, c.hash) for c in spec.children(h, LINK_RUN))
            bd = tuple((c.name, c.hash) for c in spec.children(h, BUILD))
            self.cached[h] = CachedNode(
                h,
                node,
                lr,
                bd,
                closure,
                tuple(self.repo.provided_by(node)),
                pkg.version_index(node.version),
                pkg.default_deviation(node.variant_map),
            )
            self.by_name.setdefault(node.name, []).append(h)
        for name, hashes in self.by_name.items():
            hashes.sort(key=lambda x: (self.cached[x].version_index, self.cached[x].deviation, x))
        # can_splice directives indexed by the name of the package they replace
        self.splicers_for: dict[str, list[tuple[str, CanSplice]]] = {}
        for name in sorted(self.repo.packages):
            for cs in self.repo.packages[name].can_splice:
                self.splicers_for.setdefault(cs.target.name, []).append((name, cs))

    def splice_candidates(self, replaced: str) -> list[tuple[str, str, CanSplice]]:
        """(package, cached hash, directive) triples able to stand in for cached node ``replaced``."""
        hit = self._splice_candidates.get(replaced)
        if hit is not None:
            return hit
        target = self.cached[replaced].node
        out: list[tuple[str, str, CanSplice]] = []
        seen: set[str] = set()
        for pkg_name, cs in self.splicers_for.get(target.name, ()):
            if not satisfies(target, cs.target):
                continue
            for h in self.by_name.get(pkg_name, ()):
                if h == replaced or h in seen:
                    continue
                if cs.when is None or satisfies(self.cached[h].node, cs.when):
                    out.append((pkg_name, h, cs))
                    seen.add(h)
        out.sort(key=lambda t: (t[0], t[1]))
        self._splice_candidates[replaced] = out
        return out

    @cached_property
    def spliceable(self) -> dict[str, bool]:
        """Whether a reuse of each cached node could differ from it after splicing."""
        memo: dict[str, bool] = {}

        def visit(h: str) -> bool:
            if h in memo:
                return memo[h]
            memo[h] = False
            result = False
            for _, child in self.cached[h].link_run:
                if child not in self.cached:
                    continue
                if self.splice_candidates(child) or visit(child):
                    result = True
            memo[h] = result
            return result

        for h in self.cached:
            visit(h)
        return memo

    def package(self, name: str) -> PackageDef:
        return self.repo.packages[name]


def facts_for(repo: Repo, cache: BuildCache | None) -> ProblemFacts:
    """Memoized on the cache object so repeated solves skip table building."""
    if cache is None:
        return ProblemFacts(repo, None)
    memo = cache.__dict__.setdefault("_problem_facts", {})
    hit = memo.get(id(repo))
    if hit is not None and hit.repo is repo and hit.size == len(cache):
        return hit
    facts = ProblemFacts(repo, cache)
    memo[id(repo)] = facts
    return facts


def choice_node(facts: ProblemFacts, name: str, choice: Choice) -> ConcreteNode:
    """Attributes of a choice as a node; built nodes get an empty hash."""
    if isinstance(choice, Reuse):
        return facts.cached[choice.hash].node
    return ConcreteNode(name, choice.version, choice.variants, choice.os, choice.target, "")


@dataclass
class Materialized:
    spec: ConcreteSpec
    final: dict[str, str]  # package name -> node hash in the result
    decisions: list[SpliceDecision]


def materialize(
    facts: ProblemFacts,
    root: str,
    choices: dict[str, Choice],
    edges: dict[str, list[tuple[str, str]]],
    splices: dict[tuple[str, str], str],
) -> Materialized:
    """Build the concrete DAG for a solution.

    ``edges`` maps a name to its (kind, child name) list for built and
    non-intact nodes; intact nodes bring their cached edges.  ``splices``
    maps (parent name, replaced name) to the replacement's name.
    """
    builder = SpecBuilder()
    final: dict[str, str] = {}
    order = topological_names(root, choices, edges, facts)
    for name in order:
        choice = choices[name]
        if isinstance(choice, Reuse) and choice.intact:
            spec = facts.cache.lookup_by_hash(choice.hash)
            builder.add_spec(spec)  # type: ignore[arg-type]
            final[name] = choice.hash
            continue
        deps = sorted({(kind, final[child]) for kind, child in edges.get(name, ())})
        if isinstance(choice, Build):
            h = builder.add(name, choice.version, choice.variants, choice.os, choice.target, deps)
        else:
            n = facts.cached[choice.hash].node
            bspec = n.build_spec_hash or n.hash
            h = builder.add(n.name, n.version, n.variants, n.os, n.target, deps, bspec)
        final[name] = h
    spec = builder.build(final[root])
    decisions = splice_decisions(facts, choices, splices, final, spec)
    return Materialized(spec, final, decisions)


def topological_names(
    root: str, choices: dict[str, Choice], edges: dict[str, list[tuple[str, str]]], facts: ProblemFacts
) -> list[str]:
    """Names reachable from ``root``, children first.  Raises ValueError on a cycle."""

    def kids(name: str) -> list[str]:
        choice = choices[name]
        if isinstance(choice, Reuse) and choice.intact:
            c = facts.cached[choice.hash]
            return sorted({n for n, _ in c.link_run} | {n for n, _ in c.build})
        return sorted({child for _, child in edges.get(name, ())})

    order: list[str] = []
    state: dict[str, int] = {root: 1}
    stack = [(root, iter(kids(root)))]
    while stack:
        name, it = stack[-1]
        for child in it:
            mark = state.get(child)
            if mark == 1:
                raise ValueError(f"dependency cycle through {child}")
            if mark is None:
                state[child] = 1
                stack.append((child, iter(kids(child))))
                break
        else:
            stack.pop()
            state[name] = 2
            order.append(name)
    return order


def splice_decisions(
    facts: ProblemFacts,
    choices: dict[str, Choice],
    splices: dict[tuple[str, str], str],
    final: dict[str, str],
    spec: ConcreteSpec,
) -> list[SpliceDecision]:
    """Group raw slot replacements into decisions.

    A replacement that already lies inside another replacement's closure for
    the same parent came along with it; the covering decision is transitive.
    """
    by_parent: dict[str, list[tuple[str, str]]] = {}
    for (parent, slot), repl in sorted(splices.items()):
        by_parent.setdefault(parent, []).append((slot, repl))
    decisions = []
    for parent, raws in sorted(by_parent.items()):
        choice = choices[parent]
        assert isinstance(choice, Reuse)
        cached = facts.cached[choice.hash]
        original = dict(cached.link_run)
        closures = {repl: set(spec.link_run_closure(final[repl])) - {final[repl]} for _, repl in raws}
        for slot, repl in raws:
            covered = any(final[repl] in closures[other] for _, other in raws if other != repl)
            if covered:
                continue
            covers = any(final[other] in closures[repl] for _, other in raws if other != repl)
            decisions.append(
                SpliceDecision(choice.hash, parent, slot, original[slot], repl, final[repl], covers)
            )
    return decisions


def tie_key(facts: ProblemFacts, choices: dict[str, Choice], root_hash: str) -> tuple:
    versions = []
    for name, choice in choices.items():
        if isinstance(choice, Build):
            idx = facts.package(name).version_index(choice.version)
        else:
            idx = facts.cached[choice.hash].version_index
        versions.append((name, idx))
    return (tuple(sorted(versions)), root_hash)


def build_node_hash_preview(name: str, b: Build, deps: list[tuple[str, str]]) -> str:
    return node_hash(name, b.version, b.variants, b.os, b.target, deps)
