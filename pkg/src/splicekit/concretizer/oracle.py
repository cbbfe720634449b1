"""Brute-force reference solver for small instances.

Enumerates one option per repository package (absent, every buildable
configuration, every cached spec reused intact or spliced), then every
impose-or-splice assignment for the cached children of spliced reuses,
and validates each combination from scratch.  It shares only the hashing
and decision-grouping code with the search solver.
"""

from __future__ import annotations

import itertools
from dataclasses import replace
from typing import Optional

from ..buildcache import BuildCache
from ..errors import Conflict, InstanceTooLarge, Unsatisfiable, UnknownPackage
from ..repo import DependsOn, Repo, active_directives
from ..spec import LINK_RUN, AbstractSpec, ConcreteNode, NodeConstraints, merge_constraints, satisfies
from .model import (
    Build,
    Choice,
    Objective,
    Reuse,
    SolveOptions,
    SolveResult,
    SolveStats,
    facts_for,
    materialize,
    tie_key,
)

MAX_PACKAGES = 8
MAX_VERSIONS = 4
MAX_BOOL_VARIANTS = 3
MAX_CACHE_ENTRIES = 32
MAX_ASSIGNMENTS = 200_000


def _check_bounds(repo: Repo, cache: BuildCache | None) -> None:
    if len(repo.packages) > MAX_PACKAGES:
        raise InstanceTooLarge(f"{len(repo.packages)} packages (oracle bound {MAX_PACKAGES})")
    for pkg in repo.packages.values():
        if len(pkg.versions) > MAX_VERSIONS:
            raise InstanceTooLarge(f"{pkg.name}: {len(pkg.versions)} versions (bound {MAX_VERSIONS})")
        if sum(1 for v in pkg.variants if v.is_bool) > MAX_BOOL_VARIANTS:
            raise InstanceTooLarge(f"{pkg.name}: too many boolean variants (bound {MAX_BOOL_VARIANTS})")
    if cache is not None and len(cache) > MAX_CACHE_ENTRIES:
        raise InstanceTooLarge(f"{len(cache)} cache entries (bound {MAX_CACHE_ENTRIES})")


def oracle_solve(
    request: AbstractSpec,
    repo: Repo,
    cache: BuildCache | None = None,
    opts: SolveOptions | None = None,
) -> SolveResult:
    opts = opts or SolveOptions()
    _check_bounds(repo, cache)
    root_name = request.root.name
    if root_name in repo.packages:
        roots = [root_name]
    elif repo.is_virtual(root_name):
        roots = sorted(repo.providers[root_name])
    else:
        raise UnknownPackage(f"no package or virtual named {root_name!r}")
    for dep, _ in request.dependencies:
        if dep.name not in repo.packages and not repo.is_virtual(dep.name):
            raise UnknownPackage(f"no package or virtual named {dep.name!r}")
    facts = facts_for(repo, cache if opts.reuse_enabled else None)
    best = None
    stats = SolveStats()
    for root in roots:
        found = _Enumerator(request, root, facts, opts, stats).run()
        if found is not None and (best is None or (found[0].rank(), found[1]) < (best[0].rank(), best[1])):
            best = found
    if best is None:
        raise Unsatisfiable(f"no solution for {request}", ["exhaustive enumeration found no valid assignment"])
    objective, key, choices, mat = best
    reused = frozenset(mat.final[n] for n, c in choices.items() if isinstance(c, Reuse))
    to_build = frozenset(n for n, c in choices.items() if isinstance(c, Build))
    return SolveResult(mat.spec, reused, to_build, mat.decisions, objective, stats, key)


class _Enumerator:
    def __init__(self, request: AbstractSpec, root: str, facts, opts: SolveOptions, stats: SolveStats):
        self.facts = facts
        self.repo = facts.repo
        self.opts = opts
        self.root = root
        self.stats = stats
        self.deps = [(d, k) for d, k in request.dependencies if d.name in self.repo.packages]
        self.vdeps = [(d, k) for d, k in request.dependencies if d.name not in self.repo.packages]
        # constraints every node of a given name must meet whenever it is present
        self.static: dict[str, Optional[NodeConstraints]] = {}
        self.static_ok = True
        try:
            self._static(root, replace(request.root, name=root))
            for d, _ in self.deps:
                self._static(d.name, d)
        except Conflict:
            self.static_ok = False
        self.candidates = self._splice_table()

    def _static(self, name: str, nc: NodeConstraints) -> None:
        old = self.static.get(name)
        self.static[name] = nc if old is None else merge_constraints(old, nc)

    def _splice_table(self) -> dict[str, list[tuple[str, str]]]:
        """cached hash -> [(package, cached hash)] it may be replaced by."""
        table: dict[str, list[tuple[str, str]]] = {}
        cached = self.facts.cached
        for h, entry in cached.items():
            out = []
            for pname, pkg in self.repo.packages.items():
                for cs in pkg.can_splice:
                    if cs.target.name != entry.node.name or not satisfies(entry.node, cs.target):
                        continue
                    for h2, e2 in cached.items():
                        if h2 != h and e2.node.name == pname and (cs.when is None or satisfies(e2.node, cs.when)):
                            out.append((pname, h2))
            table[h] = sorted(set(out))
        return table

    def _options(self, name: str) -> list[Optional[Choice]]:
        pkg = self.repo.packages[name]
        static = self.static.get(name)
        out: list[Optional[Choice]] = [] if name == self.root else [None]
        for version in pkg.versions:
            for values in itertools.product(*(v.allowed() for v in pkg.variants)):
                variants = tuple(sorted(zip((v.name for v in pkg.variants), values)))
                b = Build(version, variants, self.opts.default_os, self.opts.default_target)
                node = ConcreteNode(name, version, variants, b.os, b.target, "")
                if static is None or satisfies(node, static):
                    out.append(b)
        for h, entry in sorted(self.facts.cached.items()):
            if entry.node.name != name or (static is not None and not satisfies(entry.node, static)):
                continue
            spec = self.facts.cache.lookup_by_hash(h)
            names = [spec.nodes[x].name for x in spec.nodes]
            if len(names) == len(set(names)):
                out.append(Reuse(h, True))
            if self.opts.splice_enabled and any(self.candidates.get(x) for x in spec.link_run_closure(h) if x != h):
                out.append(Reuse(h, False))
        return out

    def run(self):
        if not self.static_ok:
            return None
        names = sorted(self.repo.packages)
        options = [self._options(n) for n in names]
        size = 1
        for o in options:
            size *= len(o)
        if size > MAX_ASSIGNMENTS:
            raise InstanceTooLarge(f"{size} assignments exceed the oracle budget of {MAX_ASSIGNMENTS}")
        best = None
        for combo in itertools.product(*options):
            choices = {n: c for n, c in zip(names, combo) if c is not None}
            for found in self._evaluate(choices):
                if best is None or (found[0].rank(), found[1]) < (best[0].rank(), best[1]):
                    best = found
        return best

    # -- validation of one assignment --

    def _node(self, name: str, c: Choice) -> ConcreteNode:
        if isinstance(c, Reuse):
            return self.facts.cached[c.hash].node
        return ConcreteNode(name, c.version, c.variants, c.os, c.target, "")

    def _evaluate(self, choices: dict[str, Choice]):
        self.stats.leaves += 1
        nodes = {n: self._node(n, c) for n, c in choices.items()}
        providers: dict[str, list[str]] = {}
        for n, node in nodes.items():
            for v in self.repo.provided_by(node):
                providers.setdefault(v, []).append(n)
        if any(len(p) > 1 for p in providers.values()):
            return
        base_edges: dict[str, set[tuple[str, str]]] = {}
        incoming: dict[str, list[NodeConstraints]] = {}
        slot_lists = []
        for n, c in choices.items():
            if isinstance(c, Build):
                edges = set()
                for d in active_directives(self.repo.packages[n], nodes[n]):
                    if not isinstance(d, DependsOn):
                        continue
                    t = d.target.name
                    if t not in self.repo.packages:
                        if t not in self.repo.providers or not providers.get(t):
                            return
                        t = providers[t][0]
                    if t not in choices:
                        return
                    incoming.setdefault(t, []).append(replace(d.target, name=t))
                    edges.add((d.kind, t))
                base_edges[n] = edges
            elif c.intact:
                closure = self.facts.cache.lookup_by_hash(c.hash)
                for x in closure.nodes:
                    m = closure.nodes[x].name
                    if choices.get(m) != Reuse(x, True):
                        return
            else:
                base_edges[n] = set()
                cached = self.facts.cached[c.hash]
                slots = []
                for child, hc in cached.link_run:
                    opts = [(child, hc, False)] + [(s, h2, True) for s, h2 in self.candidates.get(hc, [])]
                    slots.append([(n, child, o) for o in opts])
                slot_lists.extend(slots)
        for n, cons_list in incoming.items():
            for nc in cons_list:
                if not satisfies(nodes[n], nc):
                    return
        for combo in itertools.product(*slot_lists):
            edges = {n: set(e) for n, e in base_edges.items()}
            splices: dict[tuple[str, str], str] = {}
            ok = True
            for parent, slot, (target, h, spliced) in combo:
                c = choices.get(target)
                if not isinstance(c, Reuse) or c.hash != h:
                    ok = False
                    break
                edges[parent].add((LINK_RUN, target))
                if spliced:
                    splices[(parent, slot)] = target
            if ok:
                found = self._finish(choices, nodes, edges, splices, providers)
                if found is not None:
                    yield found

    def _finish(self, choices, nodes, edges, splices, providers):
        for n, c in choices.items():
            if isinstance(c, Reuse) and not c.intact:
                if not any(p == n for p, _ in splices) and not any(
                    isinstance(choices[t], Reuse) and not choices[t].intact for _, t in edges[n]
                ):
                    return None
        # reachability and acyclicity
        def kids(n):
            c = choices[n]
            if isinstance(c, Reuse) and c.intact:
                spec = self.facts.cache.lookup_by_hash(c.hash)
                return {spec.nodes[x].name for _, x in spec.edges_from(c.hash)}
            return {t for _, t in edges[n]}

        seen, stack = set(), [self.root]
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            stack.extend(kids(n))
        if seen != set(choices):
            return None
        try:
            mat = materialize(self.facts, self.root, choices, {n: sorted(e) for n, e in edges.items()}, splices)
        except ValueError:
            return None
        link_run = {mat.spec.nodes[h].name for h in mat.spec.link_run_closure()}
        for d, kind in self.deps:
            if d.name not in choices or (kind == LINK_RUN and d.name not in link_run):
                return None
        for d, kind in self.vdeps:
            p = providers.get(d.name)
            if not p or (kind == LINK_RUN and p[0] not in link_run):
                return None
            if not satisfies(nodes[p[0]], replace(d, name=p[0])):
                return None
        builds = vp = dev = bvp = bdev = 0
        for n, c in choices.items():
            pkg = self.repo.packages[n]
            node = nodes[n]
            vi = pkg.version_index(node.version)
            dv = pkg.default_deviation(dict(node.variants))
            vp += vi
            dev += dv
            if isinstance(c, Build):
                builds += 1
                bvp += vi
                bdev += dv
        objective = Objective(builds, vp, dev, len(mat.decisions), bvp, bdev)
        return (objective, tie_key(self.facts, choices, mat.spec.root), choices, mat)
