"""Complete depth-first search with lexicographic branch-and-bound.

Every package name maps to at most one node.  A node is either built
(version and variants chosen from the repo), reused intact (its cached
closure is imposed verbatim) or reused non-intact: the cached node keeps
its own attributes, drops its build edges, and each of its cached link-run
children is either imposed again or swapped for a cached replacement whose
package declares ``can_splice`` on it.
"""

from __future__ import annotations

import itertools
import sys
import time
from dataclasses import dataclass, field, replace
from typing import Optional

from ..buildcache import BuildCache
from ..errors import Conflict, Unsatisfiable, UnknownPackage
from ..parser import format_constraints
from ..repo import CanSplice, DependsOn, Repo, active_directives
from ..spec import LINK_RUN, AbstractSpec, ConcreteNode, NodeConstraints, merge_constraints, satisfies
from .model import (
    Build,
    Choice,
    Objective,
    ProblemFacts,
    Reuse,
    SolveOptions,
    SolveResult,
    SolveStats,
    choice_node,
    facts_for,
    materialize,
    rank_key,
    tie_key,
)


class _Fail(Exception):
    pass


@dataclass
class _State:
    choices: dict[str, Choice] = field(default_factory=dict)
    cons: dict[str, NodeConstraints] = field(default_factory=dict)
    sources: dict[str, tuple[tuple[NodeConstraints, str], ...]] = field(default_factory=dict)
    pins: dict[str, tuple[str, Optional[bool]]] = field(default_factory=dict)
    edges: dict[str, tuple[tuple[str, str], ...]] = field(default_factory=dict)
    splices: dict[tuple[str, str], str] = field(default_factory=dict)
    providers: dict[str, str] = field(default_factory=dict)
    present: tuple[str, ...] = ()
    items: tuple[tuple, ...] = ()
    builds: int = 0
    bvp: int = 0
    bdev: int = 0
    vp: int = 0
    dev: int = 0
    depth: int = 0

    def copy(self) -> _State:
        return replace(
            self,
            choices=dict(self.choices),
            cons=dict(self.cons),
            sources=dict(self.sources),
            pins=dict(self.pins),
            edges=dict(self.edges),
            splices=dict(self.splices),
            providers=dict(self.providers),
        )


@dataclass(frozen=True)
class _Request:
    root: str
    deps: tuple[tuple[NodeConstraints, str], ...]
    virtual_deps: tuple[tuple[NodeConstraints, str], ...]
    # virtual -> requested packages that always provide it
    claimed: dict[str, tuple[str, ...]]
    preferred: tuple[str, ...]


def _describe(nc: NodeConstraints) -> str:
    return format_constraints(nc) or "(any)"


class Solver:
    def __init__(self, request: AbstractSpec, facts: ProblemFacts, opts: SolveOptions):
        self.facts = facts
        self.repo = facts.repo
        self.opts = opts
        self.request = request
        self.stats = SolveStats()
        self.best: Optional[tuple[Objective, tuple, dict]] = None
        self.core_depth = -1
        self.core: list[str] = []

    # -- failure bookkeeping --

    def _fail(self, state: _State, message: str, depth: int | None = None) -> None:
        self.stats.backtracks += 1
        depth = state.depth if depth is None else depth
        if depth > self.core_depth:
            self.core_depth = depth
            self.core = [message]
        elif depth == self.core_depth and message not in self.core and len(self.core) < 8:
            self.core.append(message)

    # -- request setup --

    def _prepare(self, root_name: str) -> tuple[_Request, _State]:
        state = _State()
        claimed: dict[str, list[str]] = {}
        deps, vdeps, preferred = [], [], []
        for dep, kind in self.request.dependencies:
            if dep.name in self.repo.packages:
                deps.append((dep, kind))
                preferred.append(dep.name)
                pkg = self.repo.packages[dep.name]
                for p in pkg.provides:
                    if p.when is None:
                        claimed.setdefault(p.virtual, []).append(dep.name)
            elif self.repo.is_virtual(dep.name):
                vdeps.append((dep, kind))
            else:
                raise UnknownPackage(f"no package or virtual named {dep.name!r}")
        req = _Request(
            root_name,
            tuple(deps),
            tuple(vdeps),
            {v: tuple(sorted(q)) for v, q in claimed.items()},
            tuple(preferred),
        )
        # a virtual root passes its non-name fields on to the provider
        self._constrain(state, root_name, replace(self.request.root, name=root_name), "request root")
        for dep, _ in req.deps:
            self._constrain(state, dep.name, dep, "request")
        self._add(state, root_name)
        return req, state

    # -- primitive updates (raise _Fail) --

    def _constrain(self, state: _State, name: str, nc: NodeConstraints, origin: str) -> None:
        nc = replace(nc, name=name)
        old = state.cons.get(name)
        try:
            merged = nc if old is None else merge_constraints(old, nc)
        except Conflict:
            culprit = None
            for prior, src in state.sources.get(name, ()):
                try:
                    merge_constraints(prior, nc)
                except Conflict:
                    culprit = (_describe(prior), src)
                    break
            text, src = culprit or (_describe(old), "earlier constraints")  # type: ignore[arg-type]
            raise _Fail(f"{name}: '{text}' (from {src}) conflicts with '{_describe(nc)}' (from {origin})")
        state.cons[name] = merged
        state.sources[name] = state.sources.get(name, ()) + ((nc, origin),)
        choice = state.choices.get(name)
        if choice is not None:
            node = choice_node(self.facts, name, choice)
            if not satisfies(node, merged):
                raise _Fail(f"{name}: chosen {node.short()} does not satisfy '{_describe(nc)}' (from {origin})")
        pin = state.pins.get(name)
        if pin is not None and not satisfies(self.facts.cached[pin[0]].node, merged):
            raise _Fail(f"{name}: cached /{pin[0][:8]} does not satisfy '{_describe(nc)}' (from {origin})")

    def _add(self, state: _State, name: str) -> None:
        if name not in state.present:
            state.present = state.present + (name,)
            state.items = state.items + (("node", name),)

    def _claim(self, state: _State, name: str, node: ConcreteNode, req: _Request) -> None:
        """Register ``name`` as provider of every virtual its node provides."""
        provided = self.repo.provided_by(node)
        for v in provided:
            have = state.providers.get(v)
            if have is not None and have != name:
                raise _Fail(f"virtual {v}: both {have} and {name} would provide it")
            for q in req.claimed.get(v, ()):
                if q != name:
                    raise _Fail(f"virtual {v}: requested {q} cannot coexist with provider {name}")
            state.providers[v] = name
        for v, p in state.providers.items():
            if p == name and v not in provided:
                raise _Fail(f"virtual {v}: {node.short()} does not provide it")

    def _doomed(self, state: _State, name: str, h: str, req: _Request) -> str | None:
        """Cheap pre-check that rejects a candidate reuse without copying the state."""
        pin = state.pins.get(name)
        choice = state.choices.get(name)
        if (pin is not None and pin[0] != h) or (choice is not None and getattr(choice, "hash", None) != h):
            return f"{name}: /{h[:8]} conflicts with the node already imposed"
        for v in self.facts.cached[h].provides:
            have = state.providers.get(v)
            if have is not None and have != name:
                return f"virtual {v}: both {have} and {name} would provide it"
            for q in req.claimed.get(v, ()):
                if q != name:
                    return f"virtual {v}: requested {q} cannot coexist with provider {name}"
        return None

    def _pin(self, state: _State, name: str, h: str, intact: Optional[bool], origin: str, req: _Request) -> None:
        cached = self.facts.cached[h]
        old = state.pins.get(name)
        if old is not None:
            if old[0] != h:
                raise _Fail(f"{name}: {origin} imposes /{h[:8]} but /{old[0][:8]} is already imposed")
            if old[1] is not None and intact is not None and old[1] != intact:
                raise _Fail(f"{name}: /{h[:8]} imposed both intact and spliced")
            if intact is None:
                intact = old[1]
        choice = state.choices.get(name)
        if choice is not None:
            if not isinstance(choice, Reuse) or choice.hash != h or (intact is not None and choice.intact != intact):
                raise _Fail(f"{name}: {origin} imposes /{h[:8]}, conflicting with the choice already made")
        cons = state.cons.get(name)
        if cons is not None and not satisfies(cached.node, cons):
            raise _Fail(f"{name}: cached /{h[:8]} ({cached.node.short()}) violates '{_describe(cons)}'")
        self._claim(state, name, cached.node, req)
        state.pins[name] = (h, intact)
        self._add(state, name)

    # -- option generation --

    def _node_options(self, state: _State, name: str) -> list[Choice]:
        pin = state.pins.get(name)
        splice = self.opts.splice_enabled
        facts = self.facts
        if pin is not None:
            h, intact = pin
            opts: list[Choice] = []
            if intact in (True, None) and facts.cached[h].closure is not None:
                opts.append(Reuse(h, True))
            if intact in (False, None) and splice and facts.spliceable.get(h):
                opts.append(Reuse(h, False))
            return opts
        cons = state.cons.get(name, NodeConstraints(name))
        opts = []
        if self.opts.reuse_enabled:
            hashes = [h for h in facts.by_name.get(name, ()) if satisfies(facts.cached[h].node, cons)]
            if self.opts.max_candidates_per_node:
                hashes = hashes[: self.opts.max_candidates_per_node]
            for h in hashes:
                if facts.cached[h].closure is not None:
                    opts.append(Reuse(h, True))
                if splice and facts.spliceable.get(h):
                    opts.append(Reuse(h, False))
        opts.extend(build_options(self.repo.packages[name], cons, self.opts))
        return opts

    # -- search --

    def _bound(self, state: _State) -> tuple[int, ...]:
        must = 0
        for name in state.present:
            if name in state.choices or name in state.pins:
                continue
            if not self.opts.reuse_enabled or not self.facts.by_name.get(name):
                must += 1
        return rank_key(state.bvp, state.bdev, state.builds + must, state.vp, state.dev, 0)[:5]

    def search(self, state: _State, req: _Request) -> None:
        if self.best is not None and self._bound(state) > self.best[0].rank()[:5]:
            self.stats.backtracks += 1
            return
        if not state.items:
            self._leaf(state, req)
            return
        items = state.items
        pick = None
        for rank in ("dep", "slot"):
            pick = next((i for i, it in enumerate(items) if it[0] == rank), None)
            if pick is not None:
                break
        if pick is None:
            pick = next((i for i, it in enumerate(items) if it[1] in state.pins), 0)
        item = items[pick]
        rest = items[:pick] + items[pick + 1 :]
        for child in self._expand(state, item, rest, req):
            self.search(child, req)

    def _branch(self, state: _State, rest: tuple, apply) -> Optional[_State]:
        child = state.copy()
        child.items = rest
        child.depth = state.depth + 1
        self.stats.decisions += 1
        try:
            apply(child)
        except _Fail as exc:
            self._fail(child, str(exc))
            return None
        return child

    def _expand(self, state: _State, item: tuple, rest: tuple, req: _Request):
        kind = item[0]
        if kind == "node":
            name = item[1]
            options = self._node_options(state, name)
            if not options:
                self._fail(state, f"{name}: no version, variant or cached spec satisfies '{_describe(state.cons.get(name, NodeConstraints(name)))}'")
                return
            for option in options:
                child = self._branch(state, rest, lambda s, o=option: self._choose(s, name, o, req))
                if child is not None:
                    yield child
        elif kind == "slot":
            _, parent, slot, slot_hash = item
            origin = f"{parent} /{state.choices[parent].hash[:8]}"  # type: ignore[union-attr]

            def impose(s: _State) -> None:
                self._pin(s, slot, slot_hash, None, origin, req)
                s.edges[parent] = s.edges.get(parent, ()) + ((LINK_RUN, slot),)

            child = self._branch(state, rest, impose)
            if child is not None:
                yield child
            for repl_name, repl_hash, _ in self.facts.splice_candidates(slot_hash):
                doomed = self._doomed(state, repl_name, repl_hash, req)
                if doomed is not None:
                    self.stats.decisions += 1
                    self._fail(state, doomed, state.depth + 1)
                    continue

                def splice(s: _State, rn: str = repl_name, rh: str = repl_hash) -> None:
                    self._pin(s, rn, rh, None, f"splice into {origin}", req)
                    s.edges[parent] = s.edges.get(parent, ()) + ((LINK_RUN, rn),)
                    s.splices[(parent, slot)] = rn

                child = self._branch(state, rest, splice)
                if child is not None:
                    yield child
        else:
            _, parent, dep_kind, target, origin = item
            tname = target.name
            if tname in self.repo.packages:
                child = self._branch(state, rest, lambda s: self._link(s, parent, dep_kind, tname, target, origin))
                if child is not None:
                    yield child
                return
            if not self.repo.is_virtual(tname):
                self._fail(state, f"{parent}: depends on {tname}, which no package defines or provides")
                return
            chosen = state.providers.get(tname)
            candidates = [chosen] if chosen is not None else provider_order(self.repo, tname, req.preferred)
            for p in candidates:

                def use(s: _State, p: str = p) -> None:
                    if tname not in s.providers:
                        for q in req.claimed.get(tname, ()):
                            if q != p:
                                raise _Fail(f"virtual {tname}: requested {q} cannot coexist with provider {p}")
                        s.providers[tname] = p
                        pn = s.choices.get(p)
                        if pn is not None:
                            self._claim(s, p, choice_node(self.facts, p, pn), req)
                        elif p in s.pins:
                            self._claim(s, p, self.facts.cached[s.pins[p][0]].node, req)
                    self._link(s, parent, dep_kind, p, target, origin)

                child = self._branch(state, rest, use)
                if child is not None:
                    yield child

    def _link(self, s: _State, parent: str, kind: str, name: str, target: NodeConstraints, origin: str) -> None:
        self._constrain(s, name, target, origin)
        self._add(s, name)
        s.edges[parent] = s.edges.get(parent, ()) + ((kind, name),)

    def _choose(self, s: _State, name: str, choice: Choice, req: _Request) -> None:
        facts = self.facts
        node = choice_node(facts, name, choice)
        cons = s.cons.get(name)
        if cons is not None and not satisfies(node, cons):
            raise _Fail(f"{name}: {node.short()} violates '{_describe(cons)}'")
        self._claim(s, name, node, req)
        s.choices[name] = choice
        if isinstance(choice, Reuse):
            cached = facts.cached[choice.hash]
            s.vp += cached.version_index
            s.dev += cached.deviation
            if choice.intact:
                for m, hm in sorted(cached.closure.items()):  # type: ignore[union-attr]
                    if m != name:
                        self._pin(s, m, hm, True, f"{name} /{choice.hash[:8]}", req)
            else:
                s.edges[name] = ()
                s.items = s.items + tuple(("slot", name, c, hc) for c, hc in cached.link_run)
            return
        pkg = self.repo.packages[name]
        s.builds += 1
        vi = pkg.version_index(choice.version)
        dv = pkg.default_deviation(dict(choice.variants))
        s.vp += vi
        s.dev += dv
        s.bvp += vi
        s.bdev += dv
        s.edges[name] = ()
        origin = f"{name}@{choice.version}"
        new = []
        for d in active_directives(pkg, node):
            if isinstance(d, DependsOn):
                new.append(("dep", name, d.kind, d.target, origin + f" depends_on({_describe(d.target)})"))
        s.items = s.items + tuple(new)

    def _leaf(self, state: _State, req: _Request) -> None:
        self.stats.leaves += 1
        facts = self.facts
        for name, choice in state.choices.items():
            if isinstance(choice, Reuse) and not choice.intact:
                changed = any(p == name for p, _ in state.splices) or any(
                    isinstance(state.choices[c], Reuse) and not state.choices[c].intact  # type: ignore[union-attr]
                    for _, c in state.edges.get(name, ())
                )
                if not changed:
                    self._fail(state, f"{name}: spliced reuse of /{choice.hash[:8]} changes nothing")
                    return
        try:
            mat = materialize(facts, req.root, state.choices, dict(state.edges), state.splices)
        except ValueError as exc:
            self._fail(state, str(exc))
            return
        if len(mat.final) != len(state.choices):
            self._fail(state, "solution contains unreachable nodes")
            return
        link_run = {mat.spec.nodes[h].name for h in mat.spec.link_run_closure()}
        for dep, kind in req.deps:
            if dep.name not in state.choices or (kind == LINK_RUN and dep.name not in link_run):
                self._fail(state, f"requested dependency {dep.name} is not part of the solution")
                return
        for dep, kind in req.virtual_deps:
            p = state.providers.get(dep.name)
            if p is None or (kind == LINK_RUN and p not in link_run):
                self._fail(state, f"requested virtual {dep.name} has no provider in the solution")
                return
            if not satisfies(choice_node(facts, p, state.choices[p]), replace(dep, name=p)):
                self._fail(state, f"provider {p} does not satisfy requested '{_describe(dep)}'")
                return
        objective = Objective(state.builds, state.vp, state.dev, len(mat.decisions), state.bvp, state.bdev)
        key = tie_key(facts, state.choices, mat.spec.root)
        if self.best is None or (objective.rank(), key) < (self.best[0].rank(), self.best[1]):
            self.best = (objective, key, {"state": state, "mat": mat})


def provider_order(repo: Repo, virtual: str, preferred: tuple[str, ...]) -> list[str]:
    names = repo.providers.get(virtual, [])
    first = [p for p in preferred if p in names]
    return first + sorted(p for p in names if p not in first)


def build_options(pkg, cons: NodeConstraints, opts: SolveOptions) -> list[Build]:
    """Buildable configurations satisfying ``cons``, best objective first."""
    if cons.os is not None and cons.os != opts.default_os:
        return []
    if cons.target is not None and cons.target != opts.default_target:
        return []
    fixed = dict(cons.variants)
    for key, value in fixed.items():
        var = pkg.variant(key)
        if var is None or value not in var.allowed():
            return []
    versions = [v for v in pkg.versions if cons.version is None or v in cons.version]
    free = [v for v in pkg.variants if v.name not in fixed]
    combos = []
    for values in itertools.product(*(_ordered_values(v) for v in free)):
        assignment = dict(fixed)
        assignment.update(zip((v.name for v in free), values))
        combos.append((pkg.default_deviation(assignment), tuple(sorted(assignment.items()))))
    out = []
    for v in versions:
        for _, variants in combos:
            out.append(Build(v, variants, opts.default_os, opts.default_target))
    return out


def _ordered_values(var) -> list:
    rest = [x for x in var.allowed() if x != var.default]
    return [var.default] + rest


def _resolve_root(request: AbstractSpec, repo: Repo) -> list[str]:
    name = request.root.name
    if name in repo.packages:
        return [name]
    if repo.is_virtual(name):
        return sorted(repo.providers[name])
    raise UnknownPackage(f"no package or virtual named {name!r}")


def concretize(
    request: AbstractSpec,
    repo: Repo,
    cache: BuildCache | None = None,
    opts: SolveOptions | None = None,
) -> SolveResult:
    """Optimal concrete spec for ``request``; raises Unsatisfiable with a conflict core."""
    opts = opts or SolveOptions()
    started = time.perf_counter()
    facts = facts_for(repo, cache if opts.reuse_enabled else None)
    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 10000))
    try:
        winners = []
        core: list[str] = []
        stats = SolveStats()
        for root_name in _resolve_root(request, repo):
            solver = Solver(request, facts, opts)
            try:
                req, state = solver._prepare(root_name)
            except _Fail as exc:
                core.append(str(exc))
                continue
            solver.search(state, req)
            stats.decisions += solver.stats.decisions
            stats.backtracks += solver.stats.backtracks
            stats.leaves += solver.stats.leaves
            if solver.best is None:
                core.extend(solver.core)
            else:
                winners.append(solver.best)
    finally:
        sys.setrecursionlimit(limit)
    if not winners:
        raise Unsatisfiable(f"no solution for {request}", core or ["no candidate configuration"])
    objective, key, payload = min(winners, key=lambda w: (w[0].rank(), w[1]))
    stats.wall_time = time.perf_counter() - started
    return result_from(facts, payload["state"].choices, payload["mat"], objective, key, stats)


def result_from(facts: ProblemFacts, choices: dict[str, Choice], mat, objective, key, stats) -> SolveResult:
    reused = frozenset(mat.final[n] for n, c in choices.items() if isinstance(c, Reuse))
    to_build = frozenset(n for n, c in choices.items() if isinstance(c, Build))
    return SolveResult(mat.spec, reused, to_build, mat.decisions, objective, stats, key)


def splice_candidates(node: ConcreteNode, repo: Repo, cache: BuildCache) -> list[tuple[str, CanSplice]]:
    """Cached specs whose package declares it can stand in for ``node``."""
    facts = facts_for(repo, cache)
    if node.hash in facts.cached:
        return [(h, cs) for _, h, cs in facts.splice_candidates(node.hash)]
    out = []
    for pkg_name, cs in facts.splicers_for.get(node.name, ()):
        if not satisfies(node, cs.target):
            continue
        for h in facts.by_name.get(pkg_name, ()):
            if h != node.hash and (cs.when is None or satisfies(facts.cached[h].node, cs.when)):
                out.append((h, cs))
    return out
