"""Spec data model: abstract constraints, concrete DAGs and the DAG hash."""

from __future__ import annotations

import hashlib
import json
import re
from collections.abc import Collection, Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from typing import Union

from .errors import Conflict, CycleDetected, SpecValidationError
from .version import Version, VersionConstraint

VariantValue = Union[bool, str]
Variants = tuple[tuple[str, VariantValue], ...]

LINK_RUN = "link-run"
BUILD = "build"
ANY = "any"
EDGE_KINDS = (LINK_RUN, BUILD, ANY)

NAME_RE = re.compile(r"^[a-z0-9][a-z0-9-]*$")
VARIANT_NAME_RE = re.compile(r"^[a-z][a-z0-9_]*$")
TOKEN_RE = re.compile(r"^[A-Za-z0-9_.-]+$")


def freeze_variants(variants: Mapping[str, VariantValue] | Iterable[tuple[str, VariantValue]] | None) -> Variants:
    if not variants:
        return ()
    items = variants.items() if isinstance(variants, Mapping) else variants
    frozen = tuple(sorted(items))
    names = [k for k, _ in frozen]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate variant in {names}")
    for key, value in frozen:
        if not VARIANT_NAME_RE.match(key):
            raise ValueError(f"invalid variant name {key!r}")
        if not isinstance(value, bool) and not (isinstance(value, str) and TOKEN_RE.match(value)):
            raise ValueError(f"invalid value {value!r} for variant {key!r}")
    return frozen


@dataclass(frozen=True)
class NodeConstraints:
    """Constraints on one node.  An empty name means "this package"."""

    name: str = ""
    version: VersionConstraint | None = None
    variants: Variants = ()
    os: str | None = None
    target: str | None = None

    def __post_init__(self) -> None:
        if self.name and not NAME_RE.match(self.name):
            raise ValueError(f"invalid package name {self.name!r}")
        object.__setattr__(self, "variants", freeze_variants(self.variants))
        for label in (self.os, self.target):
            if label is not None and not TOKEN_RE.match(label):
                raise ValueError(f"invalid label {label!r}")

    @property
    def variant_map(self) -> dict[str, VariantValue]:
        return dict(self.variants)

    @property
    def is_anonymous(self) -> bool:
        return not self.name

    def with_name(self, name: str) -> NodeConstraints:
        return NodeConstraints(name, self.version, self.variants, self.os, self.target)

    def is_empty(self) -> bool:
        return self.version is None and not self.variants and self.os is None and self.target is None

    def __str__(self) -> str:
        from .parser import format_constraints

        return format_constraints(self)


@dataclass(frozen=True)
class AbstractSpec:
    root: NodeConstraints
    dependencies: tuple[tuple[NodeConstraints, str], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "dependencies", tuple(self.dependencies))
        names = [dep.name for dep, _ in self.dependencies]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate dependency names in {names}")
        for dep, kind in self.dependencies:
            if kind not in EDGE_KINDS:
                raise ValueError(f"unknown edge kind {kind!r}")
            if not dep.name:
                raise ValueError("dependency constraints need a name")

    def __str__(self) -> str:
        from .parser import format_spec

        return format_spec(self)


@dataclass(frozen=True)
class ConcreteNode:
    name: str
    version: Version
    variants: Variants
    os: str
    target: str
    hash: str
    build_spec_hash: str | None = None

    @property
    def variant_map(self) -> dict[str, VariantValue]:
        return dict(self.variants)

    def as_constraints(self) -> NodeConstraints:
        return NodeConstraints(self.name, VersionConstraint.exact(self.version), self.variants, self.os, self.target)

    def short(self) -> str:
        return f"{self.name}@{self.version}/{self.hash[:8]}"


# -- satisfaction and merging -------------------------------------------------


def _version_subset(inner: VersionConstraint, outer: VersionConstraint) -> bool:
    if outer.lo is not None and (inner.lo is None or inner.lo < outer.lo):
        return False
    if outer.hi is not None:
        if inner.hi is None:
            return False
        if inner.hi.components + (float("inf"),) > outer.hi.components + (float("inf"),):
            return False
    return True


def satisfies(
    candidate: ConcreteNode | NodeConstraints,
    constraint: NodeConstraints,
    provides: Collection[str] = (),
) -> bool:
    """True iff every field ``constraint`` sets is matched by ``candidate``.

    ``provides`` lists virtual names the candidate's package provides, so a
    constraint naming a virtual can match a concrete provider.
    """
    if constraint.name and constraint.name != candidate.name and constraint.name not in provides:
        return False
    if isinstance(candidate, ConcreteNode):
        if constraint.version is not None and candidate.version not in constraint.version:
            return False
    elif constraint.version is not None:
        if candidate.version is None or not _version_subset(candidate.version, constraint.version):
            return False
    have = dict(candidate.variants)
    for key, value in constraint.variants:
        if key not in have or have[key] != value:
            return False
    if constraint.os is not None and candidate.os != constraint.os:
        return False
    if constraint.target is not None and candidate.target != constraint.target:
        return False
    return True


def merge_constraints(a: NodeConstraints, b: NodeConstraints) -> NodeConstraints:
    if a.name and b.name and a.name != b.name:
        raise Conflict(f"cannot merge constraints on different packages {a.name} and {b.name}")
    if a.version is None:
        version = b.version
    elif b.version is None:
        version = a.version
    else:
        version = a.version.intersect(b.version)
    variants = dict(a.variants)
    for key, value in b.variants:
        if key in variants and variants[key] != value:
            raise Conflict(f"variant {key!r} cannot be both {variants[key]!r} and {value!r}")
        variants[key] = value
    labels = []
    for field_name in ("os", "target"):
        x, y = getattr(a, field_name), getattr(b, field_name)
        if x is not None and y is not None and x != y:
            raise Conflict(f"{field_name} cannot be both {x!r} and {y!r}")
        labels.append(x if x is not None else y)
    return NodeConstraints(a.name or b.name, version, freeze_variants(variants), labels[0], labels[1])


# -- hashing ------------------------------------------------------------------


def canonical_json(obj: object) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def _digest(document: Mapping[str, object]) -> str:
    # The only place the digest function is chosen.
    return hashlib.sha256(canonical_json(document).encode("ascii")).hexdigest()


def node_document(
    name: str,
    version: Version,
    variants: Variants,
    os: str,
    target: str,
    dependencies: Iterable[tuple[str, str]],
    build_spec_hash: str | None = None,
) -> dict[str, object]:
    doc: dict[str, object] = {
        "name": name,
        "version": str(version),
        "variants": {k: v for k, v in variants},
        "os": os,
        "target": target,
        "dependencies": sorted([kind, child] for kind, child in dependencies),
    }
    if build_spec_hash is not None:
        doc["build_spec"] = build_spec_hash
    return doc


def node_hash(
    name: str,
    version: Version,
    variants: Variants,
    os: str,
    target: str,
    dependencies: Iterable[tuple[str, str]],
    build_spec_hash: str | None = None,
) -> str:
    return _digest(node_document(name, version, variants, os, target, dependencies, build_spec_hash))


# -- concrete specs -----------------------------------------------------------


@dataclass(frozen=True)
class ConcreteSpec:
    nodes: Mapping[str, ConcreteNode]
    root: str
    link_run_edges: frozenset[tuple[str, str]] = frozenset()
    build_edges: frozenset[tuple[str, str]] = frozenset()
    _children: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", dict(self.nodes))
        object.__setattr__(self, "link_run_edges", frozenset(self.link_run_edges))
        object.__setattr__(self, "build_edges", frozenset(self.build_edges))
        children: dict[str, list[tuple[str, str]]] = {h: [] for h in self.nodes}
        for kind, edges in ((LINK_RUN, self.link_run_edges), (BUILD, self.build_edges)):
            for parent, child in edges:
                if parent not in self.nodes or child not in self.nodes:
                    raise SpecValidationError(f"dangling edge {parent[:8]} -> {child[:8]}")
                children[parent].append((kind, child))
        for lst in children.values():
            lst.sort(key=lambda kc: (self.nodes[kc[1]].name, kc[0], kc[1]))
        object.__setattr__(self, "_children", children)
        if self.root not in self.nodes:
            raise SpecValidationError(f"root {self.root[:8]} is not a node")

    def __hash__(self) -> int:
        return hash(self.root)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ConcreteSpec):
            return NotImplemented
        return (
            self.root == other.root
            and self.nodes == other.nodes
            and self.link_run_edges == other.link_run_edges
            and self.build_edges == other.build_edges
        )

    @property
    def root_node(self) -> ConcreteNode:
        return self.nodes[self.root]

    def edges_from(self, h: str) -> list[tuple[str, str]]:
        """(kind, child hash) pairs, ordered by child name."""
        return list(self._children[h])

    def children(self, h: str, kind: str | None = None) -> list[ConcreteNode]:
        return [self.nodes[c] for k, c in self._children[h] if kind is None or k == kind]

    def link_run_children(self, h: str) -> dict[str, ConcreteNode]:
        return {n.name: n for n in self.children(h, LINK_RUN)}

    def reachable(self, start: str | None = None, kinds: Collection[str] = (LINK_RUN, BUILD)) -> list[str]:
        """Hashes reachable from ``start`` (inclusive) in DFS preorder."""
        start = self.root if start is None else start
        seen: dict[str, None] = {}
        stack = [start]
        while stack:
            h = stack.pop()
            if h in seen:
                continue
            seen[h] = None
            stack.extend(c for k, c in reversed(self._children[h]) if k in kinds)
        return list(seen)

    def link_run_closure(self, start: str | None = None) -> list[str]:
        return self.reachable(start, (LINK_RUN,))

    def find(self, name: str, link_run_only: bool = True) -> list[ConcreteNode]:
        kinds = (LINK_RUN,) if link_run_only else (LINK_RUN, BUILD)
        return [self.nodes[h] for h in self.reachable(kinds=kinds) if self.nodes[h].name == name]

    def postorder(self, start: str | None = None) -> list[str]:
        """Children before parents; raises CycleDetected on cycles."""
        start = self.root if start is None else start
        order: list[str] = []
        state: dict[str, int] = {}
        stack: list[tuple[str, Iterator[tuple[str, str]]]] = [(start, iter(self._children[start]))]
        state[start] = 1
        while stack:
            h, it = stack[-1]
            for _, child in it:
                mark = state.get(child)
                if mark == 1:
                    raise CycleDetected(f"cycle through {self.nodes[child].name}")
                if mark is None:
                    state[child] = 1
                    stack.append((child, iter(self._children[child])))
                    break
            else:
                stack.pop()
                state[h] = 2
                order.append(h)
        return order

    def subspec(self, h: str) -> ConcreteSpec:
        keep = set(self.reachable(h))
        return ConcreteSpec(
            {k: self.nodes[k] for k in keep},
            h,
            frozenset(e for e in self.link_run_edges if e[0] in keep),
            frozenset(e for e in self.build_edges if e[0] in keep),
        )

    def validate(self) -> None:
        for h in self.postorder():
            node = self.nodes[h]
            if dag_hash(self, h) != h or node.hash != h:
                raise SpecValidationError(f"hash of {node.name} does not match its contents")
            if node.build_spec_hash is not None and self.children(h, BUILD):
                raise SpecValidationError(f"spliced node {node.name} has build dependencies")
        if set(self.reachable()) != set(self.nodes):
            raise SpecValidationError("spec contains nodes unreachable from its root")
        seen: dict[str, str] = {}
        for h in self.link_run_closure():
            name = self.nodes[h].name
            if name in seen and seen[name] != h:
                raise SpecValidationError(f"multiple configurations of {name} in the link-run graph")
            seen[name] = h

    # -- serialization --

    def to_document(self) -> dict[str, object]:
        nodes = []
        for h in sorted(self.nodes):
            node = self.nodes[h]
            doc = node_document(
                node.name, node.version, node.variants, node.os, node.target, self.edges_from(h), node.build_spec_hash
            )
            doc["hash"] = h
            nodes.append(doc)
        return {"root": self.root, "nodes": nodes}

    def to_json(self) -> str:
        return canonical_json(self.to_document())

    @classmethod
    def from_document(cls, doc: Mapping[str, object]) -> ConcreteSpec:
        try:
            builder = SpecBuilder()
            raw = {n["hash"]: n for n in doc["nodes"]}  # type: ignore[index,union-attr]
            done: dict[str, str] = {}

            def visit(h: str, trail: tuple[str, ...]) -> str:
                if h in done:
                    return done[h]
                if h in trail:
                    raise CycleDetected("cycle in spec document")
                n = raw[h]
                deps = [(kind, visit(child, trail + (h,))) for kind, child in n["dependencies"]]
                new = builder.add(
                    n["name"],
                    Version.parse(n["version"]),
                    n["variants"],
                    n["os"],
                    n["target"],
                    deps,
                    n.get("build_spec"),
                )
                if new != h:
                    raise SpecValidationError(f"stored hash {h[:8]} does not match contents of {n['name']}")
                done[h] = new
                return new

            root = visit(doc["root"], ())  # type: ignore[arg-type]
        except (KeyError, TypeError, ValueError) as exc:
            raise SpecValidationError(f"malformed spec document: {exc}") from exc
        return builder.build(root)

    @classmethod
    def from_json(cls, text: str) -> ConcreteSpec:
        return cls.from_document(json.loads(text))

    def __str__(self) -> str:
        from .parser import format_spec

        return format_spec(self)


def dag_hash(spec: ConcreteSpec, node: str | None = None) -> str:
    """Recompute the hash of ``node`` from the attributes and edges in ``spec``."""
    node = spec.root if node is None else node
    memo: dict[str, str] = {}
    for h in spec.postorder(node):
        n = spec.nodes[h]
        deps = [(kind, memo[child]) for kind, child in spec.edges_from(h)]
        memo[h] = node_hash(n.name, n.version, n.variants, n.os, n.target, deps, n.build_spec_hash)
    return memo[node]


class SpecBuilder:
    """Bottom-up construction of concrete specs; hashes are computed on insert."""

    def __init__(self) -> None:
        self.nodes: dict[str, ConcreteNode] = {}
        self.link_run: set[tuple[str, str]] = set()
        self.build_deps: set[tuple[str, str]] = set()

    def add(
        self,
        name: str,
        version: Version | str,
        variants: Mapping[str, VariantValue] | Variants | None = None,
        os: str = "linux",
        target: str = "x86_64",
        dependencies: Iterable[tuple[str, str]] = (),
        build_spec_hash: str | None = None,
    ) -> str:
        if isinstance(version, str):
            version = Version.parse(version)
        frozen = freeze_variants(variants)
        deps = [(k, c) for k, c in dependencies]
        for kind, child in deps:
            if child not in self.nodes:
                raise SpecValidationError(f"dependency {child[:8]} added before its node")
            if kind not in (LINK_RUN, BUILD):
                raise SpecValidationError(f"concrete edges are link-run or build, not {kind!r}")
        h = node_hash(name, version, frozen, os, target, deps, build_spec_hash)
        self.nodes[h] = ConcreteNode(name, version, frozen, os, target, h, build_spec_hash)
        for kind, child in deps:
            (self.link_run if kind == LINK_RUN else self.build_deps).add((h, child))
        return h

    def add_spec(self, spec: ConcreteSpec) -> None:
        self.nodes.update(spec.nodes)
        self.link_run |= spec.link_run_edges
        self.build_deps |= spec.build_edges

    def build(self, root: str) -> ConcreteSpec:
        full = ConcreteSpec(self.nodes, root, frozenset(self.link_run), frozenset(self.build_deps))
        return full.subspec(root)
