"""Mock binaries, install trees, relocation and rewiring.

Artifact layout (all fields fixed width, padded with NUL)::

    magic     5  b"SPLC1"
    name     64  package name
    version  32  version string
    ndeps     4  ASCII decimal, zero padded
    prefix  256  own install prefix
    ndeps x (name 64, hash 64, prefix 256)

Relocation and rewiring overwrite fields in place, so an artifact never
changes length.
"""

from __future__ import annotations

import json
import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .buildcache import BuildCache, CacheEntry
from .errors import MissingDependency, MissingProvenance, PrefixTooLong, SplicekitError
from .spec import LINK_RUN, ConcreteNode, ConcreteSpec
from .splicer import rewiring_map

MAGIC = b"SPLC1"
PAD = b"\x00"
NAME_W = 64
VERSION_W = 32
NDEPS_W = 4
HASH_W = 64
W = 256
HEADER = len(MAGIC) + NAME_W + VERSION_W + NDEPS_W
DEP_W = NAME_W + HASH_W + W
STAGE_ROOT = "/splicekit-stage"
TREE_INDEX = ".splicekit-tree.json"


class ArtifactFormatError(SplicekitError):
    pass


def artifact_length(ndeps: int) -> int:
    return HEADER + W + ndeps * DEP_W


def _field(value: str, width: int, what: str) -> bytes:
    raw = value.encode("utf-8")
    if len(raw) > width:
        if width == W:
            raise PrefixTooLong(f"{what} {value!r} is {len(raw)} bytes; the field holds {W}")
        raise ArtifactFormatError(f"{what} {value!r} does not fit in {width} bytes")
    return raw + PAD * (width - len(raw))


def _text(raw: bytes) -> str:
    return raw.rstrip(PAD).decode("utf-8")


@dataclass
class DepField:
    name: str
    hash: str
    prefix: str


@dataclass
class MockBinary:
    name: str
    version: str
    self_prefix: str
    deps: list[DepField] = field(default_factory=list)

    def to_bytes(self) -> bytes:
        if len(self.deps) > 9999:
            raise ArtifactFormatError("too many dependencies")
        out = [
            MAGIC,
            _field(self.name, NAME_W, "name"),
            _field(self.version, VERSION_W, "version"),
            f"{len(self.deps):04d}".encode(),
            _field(self.self_prefix, W, "prefix"),
        ]
        for d in self.deps:
            out += [_field(d.name, NAME_W, "name"), _field(d.hash, HASH_W, "hash"), _field(d.prefix, W, "prefix")]
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> MockBinary:
        if data[: len(MAGIC)] != MAGIC:
            raise ArtifactFormatError("bad magic")
        pos = len(MAGIC)
        name = _text(data[pos : pos + NAME_W])
        pos += NAME_W
        version = _text(data[pos : pos + VERSION_W])
        pos += VERSION_W
        count = data[pos : pos + NDEPS_W]
        if not count.isdigit():
            raise ArtifactFormatError("bad dependency count")
        n = int(count)
        pos += NDEPS_W
        if len(data) != artifact_length(n):
            raise ArtifactFormatError(f"length {len(data)} does not match {n} dependencies")
        prefix = _text(data[pos : pos + W])
        pos += W
        deps = []
        for _ in range(n):
            dn = _text(data[pos : pos + NAME_W])
            dh = _text(data[pos + NAME_W : pos + NAME_W + HASH_W])
            dp = _text(data[pos + NAME_W + HASH_W : pos + DEP_W])
            deps.append(DepField(dn, dh, dp))
            pos += DEP_W
        return cls(name, version, prefix, deps)


def self_prefix_span() -> tuple[int, int]:
    return HEADER, HEADER + W


def dep_span(i: int) -> tuple[int, int]:
    """Byte range of dependency field ``i`` (name, hash and prefix)."""
    start = HEADER + W + i * DEP_W
    return start, start + DEP_W


def dep_prefix_span(i: int) -> tuple[int, int]:
    start = HEADER + W + i * DEP_W + NAME_W + HASH_W
    return start, start + W


def ordered_children(spec: ConcreteSpec, h: str) -> list[ConcreteNode]:
    """Direct link-run children, dependents before their dependencies, ties by name."""
    kids = {c.hash: c for c in spec.children(h, LINK_RUN)}
    below = {k: set(spec.link_run_closure(k)) - {k} for k in kids}
    order: list[ConcreteNode] = []
    remaining = set(kids)
    while remaining:
        # ready: no other remaining child depends on it
        ready = [k for k in remaining if not any(k in below[o] for o in remaining if o != k)]
        pick = min(ready, key=lambda k: (kids[k].name, k))
        order.append(kids[pick])
        remaining.remove(pick)
    return order


class InstallTree:
    """Prefixes under one root directory.  ``persist=False`` keeps it in memory only."""

    def __init__(self, root: str | Path, persist: bool = True):
        self.root = Path(root)
        self.persist = persist
        self.installed: dict[str, str] = {}
        index = self.root / TREE_INDEX
        if persist and index.exists():
            self.installed = json.loads(index.read_text(encoding="utf-8"))

    def prefix_for(self, node: ConcreteNode) -> str:
        prefix = f"{self.root}/{node.name}-{node.version}-{node.hash[:8]}"
        if len(prefix.encode("utf-8")) > W:
            raise PrefixTooLong(f"prefix {prefix!r} exceeds {W} bytes")
        return prefix

    def artifact_path(self, prefix: str, name: str) -> Path:
        return Path(prefix) / "lib" / f"{name}.splc"

    def read(self, h: str, name: str) -> bytes:
        return self.artifact_path(self.installed[h], name).read_bytes()

    def record(self, node: ConcreteNode, data: bytes) -> str:
        prefix = self.prefix_for(node)
        if self.persist:
            target = self.artifact_path(prefix, node.name)
            target.parent.mkdir(parents=True, exist_ok=True)
            tmp = target.with_suffix(".tmp")
            tmp.write_bytes(data)
            os.replace(tmp, target)
        self.installed[node.hash] = prefix
        if self.persist:
            self._save()
        return prefix

    def _save(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        tmp = self.root / (TREE_INDEX + ".tmp")
        tmp.write_text(json.dumps(self.installed, sort_keys=True, indent=1), encoding="utf-8")
        os.replace(tmp, self.root / TREE_INDEX)

    def remove(self) -> None:
        if self.persist and self.root.exists():
            shutil.rmtree(self.root)
        self.installed = {}


def build_mock(spec: ConcreteSpec, tree: InstallTree, node: str | None = None) -> bytes:
    """Artifact for ``node`` (default root) embedding the tree prefixes of its link-run deps."""
    h = node or spec.root
    n = spec.nodes[h]
    deps = []
    for child in ordered_children(spec, h):
        prefix = tree.installed.get(child.hash)
        if prefix is None:
            raise MissingDependency(f"{n.short()}: dependency {child.short()} is not installed")
        deps.append(DepField(child.name, child.hash, prefix))
    return MockBinary(n.name, str(n.version), tree.prefix_for(n), deps).to_bytes()


def stage_artifacts(spec: ConcreteSpec, only: Optional[set[str]] = None) -> dict[str, bytes]:
    """Mock-build every node of ``spec`` against an in-memory staging tree.

    These are the bytes a build farm would push: prefixes point into the
    staging root and are relocated on install.
    """
    stage = InstallTree(STAGE_ROOT, persist=False)
    out = {}
    for h in spec.postorder():
        data = build_mock(spec, stage, h)
        stage.record(spec.nodes[h], data)
        if only is None or h in only:
            out[h] = data
    return out


def _patch(data: bytes, start: int, value: bytes) -> bytes:
    return data[:start] + value + data[start + len(value) :]


def relocate(data: bytes, self_prefix: str, prefix_of: Callable[[str], str]) -> bytes:
    """Point the self prefix and every dep prefix (looked up by dep hash) at new locations."""
    binary = MockBinary.from_bytes(data)
    out = _patch(data, HEADER, _field(self_prefix, W, "prefix"))
    for i, dep in enumerate(binary.deps):
        start, _ = dep_prefix_span(i)
        out = _patch(out, start, _field(prefix_of(dep.hash), W, "prefix"))
    assert len(out) == len(data)
    return out


def install(entry: CacheEntry | ConcreteSpec, tree: InstallTree, cache: BuildCache) -> str:
    """Install a cache entry and its closure, relocating every artifact into ``tree``."""
    spec = entry.spec if isinstance(entry, CacheEntry) else entry
    for h in spec.postorder():
        if h in tree.installed:
            continue
        node = spec.nodes[h]
        cached = cache.get(h)
        if cached is None or cached.artifact is None:
            raise MissingDependency(f"{node.short()} has no installable artifact in the cache")
        data = relocate(cached.artifact, tree.prefix_for(node), lambda d: tree.installed[d])
        tree.record(node, data)
    return tree.installed[spec.root]


def rewire_node(spliced: ConcreteSpec, h: str, tree: InstallTree, cache: BuildCache, mapping: dict[str, str]) -> bytes:
    node = spliced.nodes[h]
    assert node.build_spec_hash is not None
    source = cache.get(node.build_spec_hash)
    if source is None or source.artifact is None:
        raise MissingProvenance(f"no artifact for build spec /{node.build_spec_hash[:8]} of {node.short()}")
    data = source.artifact
    binary = MockBinary.from_bytes(data)
    out = _patch(data, HEADER, _field(tree.prefix_for(node), W, "prefix"))
    for i, dep in enumerate(binary.deps):
        start, _ = dep_span(i)
        new_hash = mapping.get(dep.hash, dep.hash)
        if new_hash not in spliced.nodes:
            raise MissingDependency(f"{node.short()}: dependency /{new_hash[:8]} is not part of the spliced spec")
        if new_hash not in tree.installed:
            raise MissingDependency(f"{node.short()}: dependency /{new_hash[:8]} is not installed")
        if new_hash != dep.hash:
            out = _patch(out, start, _field(spliced.nodes[new_hash].name, NAME_W, "name"))
            out = _patch(out, start + NAME_W, _field(new_hash, HASH_W, "hash"))
        out = _patch(out, start + NAME_W + HASH_W, _field(tree.installed[new_hash], W, "prefix"))
    assert len(out) == len(data)
    return out


def rewire(spliced: ConcreteSpec, tree: InstallTree, cache: BuildCache) -> str:
    """Install a spliced spec: spliced nodes are patched copies of their build specs' artifacts."""
    maps = rewiring_map(spliced, cache)
    for h in spliced.postorder():
        if h in tree.installed:
            continue
        node = spliced.nodes[h]
        if node.build_spec_hash is not None:
            tree.record(node, rewire_node(spliced, h, tree, cache, maps.get(h, {})))
            continue
        cached = cache.get(h)
        if cached is not None and cached.artifact is not None:
            tree.record(node, relocate(cached.artifact, tree.prefix_for(node), lambda d: tree.installed[d]))
        else:
            tree.record(node, build_mock(spliced, tree, h))
    return tree.installed[spliced.root]


def install_result(spec: ConcreteSpec, tree: InstallTree, cache: BuildCache) -> dict[str, str]:
    """Install a solved spec, picking an action per node: reused, rewired or built."""
    actions: dict[str, str] = {}
    maps = None
    for h in spec.postorder():
        node = spec.nodes[h]
        if h in tree.installed:
            actions[h] = "present"
            continue
        cached = cache.get(h)
        if cached is not None and cached.artifact is not None:
            tree.record(node, relocate(cached.artifact, tree.prefix_for(node), lambda d: tree.installed[d]))
            actions[h] = "reused"
        elif node.build_spec_hash is not None:
            if maps is None:
                maps = rewiring_map(spec, cache)
            tree.record(node, rewire_node(spec, h, tree, cache, maps.get(h, {})))
            actions[h] = "rewired"
        else:
            tree.record(node, build_mock(spec, tree, h))
            actions[h] = "built"
    return actions


def verify(prefix: str, tree: InstallTree, expected: ConcreteSpec) -> dict[str, object]:
    """Check every installed artifact in ``expected``'s closure against the spec and the tree."""
    failures: list[dict[str, str]] = []
    by_prefix = {p: h for h, p in tree.installed.items()}
    root = by_prefix.get(prefix)
    if root is None or root not in expected.nodes:
        return {"prefix": prefix, "checked": 0, "failures": [{"node": "?", "problem": "prefix is not an installed node of the expected spec"}]}
    checked = 0
    for h in expected.postorder(root):
        node = expected.nodes[h]
        label = node.short()
        if h not in tree.installed:
            failures.append({"node": label, "problem": "not installed"})
            continue
        checked += 1
        try:
            binary = MockBinary.from_bytes(tree.read(h, node.name))
        except (OSError, ArtifactFormatError) as exc:
            failures.append({"node": label, "problem": f"unreadable artifact: {exc}"})
            continue
        if binary.name != node.name or binary.version != str(node.version):
            failures.append({"node": label, "problem": f"header names {binary.name}@{binary.version}"})
        if binary.self_prefix != tree.installed[h]:
            failures.append({"node": label, "problem": f"self prefix is {binary.self_prefix}"})
        want = {c.name: c for c in expected.children(h, LINK_RUN)}
        seen = set()
        for dep in binary.deps:
            child = want.get(dep.name)
            if child is None:
                failures.append({"node": label, "dep": dep.name, "problem": "unexpected dependency"})
                continue
            seen.add(dep.name)
            if dep.hash != child.hash:
                failures.append({"node": label, "dep": dep.name, "problem": f"hash {dep.hash[:8]} != {child.hash[:8]}"})
            elif dep.prefix != tree.installed.get(child.hash):
                failures.append({"node": label, "dep": dep.name, "problem": f"prefix {dep.prefix} is stale"})
        for name in sorted(set(want) - seen):
            failures.append({"node": label, "dep": name, "problem": "dependency missing from artifact"})
    return {"prefix": prefix, "checked": checked, "failures": failures}
