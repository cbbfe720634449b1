"""Splicing concrete specs and recovering how a spliced spec was produced.

A splice swaps one link-run node of a concrete spec (the *target*) for the
root of another concrete spec.  Every node whose link-run children change
is re-hashed, loses its build edges and records the hash it was originally
built as (its build spec).  Nodes that do not change keep their hashes.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass
from typing import Protocol, Union

from .errors import AmbiguousTarget, MissingProvenance, NoTarget, WouldCycle
from .spec import BUILD, LINK_RUN, ConcreteSpec, SpecBuilder


class SpecStore(Protocol):
    def lookup_by_hash(self, h: str) -> ConcreteSpec | None: ...


Store = Union[SpecStore, Mapping[str, ConcreteSpec]]


@dataclass(frozen=True)
class ProvenancePair:
    spliced_hash: str
    build_spec_hash: str


def _lookup(store: Store, h: str) -> ConcreteSpec | None:
    if isinstance(store, Mapping):
        return store.get(h)
    return store.lookup_by_hash(h)


def _rebuild(spec: ConcreteSpec, start: str, subst: Mapping[str, str], builder: SpecBuilder, memo: dict[str, str]) -> str:
    """Copy ``spec`` below ``start``, redirecting link-run edges by child name.

    ``subst`` maps a package name to the hash that must stand in for any
    link-run child of that name.
    """
    if start in memo:
        return memo[start]
    node = spec.nodes[start]
    kids = []
    changed = False
    for kind, child in spec.edges_from(start):
        if kind != LINK_RUN:
            continue
        name = spec.nodes[child].name
        new = subst[name] if name in subst else _rebuild(spec, child, subst, builder, memo)
        changed |= new != child
        kids.append((LINK_RUN, new))
    if not changed:
        memo[start] = start
        return start
    build_spec = node.build_spec_hash or node.hash
    h = builder.add(node.name, node.version, node.variants, node.os, node.target, kids, build_spec)
    memo[start] = h
    return h


def _names(spec: ConcreteSpec, hashes) -> dict[str, str]:
    return {spec.nodes[h].name: h for h in hashes}


def _remainder(root: ConcreteSpec, target: str) -> list[str]:
    """Link-run nodes reachable from the root without passing through ``target``."""
    seen = {root.root}
    stack = [root.root]
    while stack:
        h = stack.pop()
        for kind, child in root.edges_from(h):
            if kind == LINK_RUN and child != target and child not in seen:
                seen.add(child)
                stack.append(child)
    return sorted(seen)


def _ancestors(root: ConcreteSpec, target: str) -> set[str]:
    parents: dict[str, list[str]] = {}
    for p, c in root.link_run_edges:
        parents.setdefault(c, []).append(p)
    out: set[str] = set()
    stack = [target]
    while stack:
        for p in parents.get(stack.pop(), ()):
            if p not in out:
                out.add(p)
                stack.append(p)
    return out


def splice(root: ConcreteSpec, replacement: ConcreteSpec, transitive: bool, target: str | None = None) -> ConcreteSpec:
    """Replace the link-run node named ``target`` (default: the replacement's name) in ``root``.

    Transitive: for package names the replacement shares with the rest of
    ``root``, the replacement's nodes win.  Intransitive: ``root``'s nodes
    win and the replacement is re-pointed at them.
    """
    tname = target or replacement.root_node.name
    hits = sorted(h for h in root.link_run_closure() if root.nodes[h].name == tname)
    if not hits:
        raise NoTarget(f"{tname} is not a link-run dependency of {root.root_node.short()}")
    if len(hits) > 1:
        raise AmbiguousTarget(f"{tname} matches {len(hits)} nodes")
    th = hits[0]
    if th == root.root:
        return replacement
    repl_names = _names(replacement, replacement.link_run_closure())
    blocked = {root.nodes[a].name for a in _ancestors(root, th)}
    clash = sorted(blocked & set(repl_names))
    if clash:
        raise WouldCycle(f"replacement closure contains {', '.join(clash)}, which depends on {tname}")
    builder = SpecBuilder()
    builder.add_spec(root)
    builder.add_spec(replacement)
    remainder = _names(root, _remainder(root, th))
    if transitive:
        subst = {name: h for name, h in repl_names.items() if name in remainder}
        subst[tname] = replacement.root
    else:
        keep = {name: remainder[name] for name in repl_names if name in remainder}
        keep.pop(replacement.root_node.name, None)
        new_repl = _rebuild(replacement, replacement.root, keep, builder, {})
        subst = {tname: new_repl}
    new_root = _rebuild(root, root.root, subst, builder, {})
    if new_root == root.root:
        return root
    result = builder.build(new_root)
    result.validate()
    return result


def provenance(spec: ConcreteSpec) -> list[ProvenancePair]:
    return [ProvenancePair(h, n.build_spec_hash) for h, n in sorted(spec.nodes.items()) if n.build_spec_hash]


def _pair_children(old: ConcreteSpec, old_h: str, new: ConcreteSpec, new_h: str) -> list[tuple[str, str]]:
    """Pair the link-run children of a build spec with those of its spliced node.

    Children are matched by package name; children whose name changed (a
    cross-package splice) are paired in sorted order.
    """
    before = {n.name: n.hash for n in old.children(old_h, LINK_RUN)}
    after = {n.name: n.hash for n in new.children(new_h, LINK_RUN)}
    pairs = [(before[name], after[name]) for name in sorted(before) if name in after]
    lost = [before[n] for n in sorted(before) if n not in after]
    gained = [after[n] for n in sorted(after) if n not in before]
    pairs.extend(zip(lost, gained))
    return pairs


def rewiring_map(spliced: ConcreteSpec, store: Store) -> dict[str, dict[str, str]]:
    """Per spliced node: build-spec child hash -> child hash in the spliced DAG."""
    out: dict[str, dict[str, str]] = {}
    for h in spliced.postorder():
        node = spliced.nodes[h]
        if node.build_spec_hash is None:
            continue
        original = _lookup(store, node.build_spec_hash)
        if original is None:
            raise MissingProvenance(f"build spec /{node.build_spec_hash[:8]} of {node.short()} is not in the store")
        mapping = {a: b for a, b in _pair_children(original, original.root, spliced, h) if a != b}
        if mapping:
            out[h] = mapping
    return out


def replay(spliced: ConcreteSpec, store: Store, node: str | None = None) -> ConcreteSpec:
    """Rebuild a spliced spec from its build specs by re-applying transitive splices.

    The result should equal ``spliced.subspec(node)`` hash for hash.
    """
    h = node or spliced.root
    n = spliced.nodes[h]
    if n.build_spec_hash is None:
        if not _has_provenance(spliced, h):
            return spliced.subspec(h)
        builder = SpecBuilder()
        deps = []
        for kind, child in spliced.edges_from(h):
            sub = replay(spliced, store, child)
            builder.add_spec(sub)
            deps.append((kind, sub.root))
        new = builder.add(n.name, n.version, n.variants, n.os, n.target, deps)
        return builder.build(new)
    current = _lookup(store, n.build_spec_hash)
    if current is None:
        raise MissingProvenance(f"build spec /{n.build_spec_hash[:8]} of {n.short()} is not in the store")
    original = current
    for old_child, new_child in _pair_children(original, original.root, spliced, h):
        if old_child == new_child:
            continue
        name = original.nodes[old_child].name
        present = {x.name: x.hash for x in current.children(current.root, LINK_RUN)}
        if name not in present or present[name] == new_child:
            continue  # already handled by an earlier transitive splice
        current = splice(current, replay(spliced, store, new_child), True, target=name)
    return current


def _has_provenance(spec: ConcreteSpec, start: str) -> bool:
    return any(spec.nodes[x].build_spec_hash is not None for x in spec.reachable(start))


__all__ = ["ProvenancePair", "provenance", "replay", "rewiring_map", "splice", "BUILD"]
