"""Content-addressed build cache.

Layout on disk::

    <store>/index.json            # {"entries": {hash: {...}}}
    <store>/artifacts/<hash>.bin  # mock binaries

A cache opened with ``path=None`` lives in memory only.
"""

from __future__ import annotations

import json
import os
import tempfile
import time
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from pathlib import Path

from .errors import CacheIOError, CycleDetected, HashMismatch, SpecValidationError
from .spec import LINK_RUN, ConcreteNode, ConcreteSpec, canonical_json


@dataclass(frozen=True)
class CacheEntry:
    spec_document: str
    root_hash: str
    artifact: bytes | None = None
    created_at: float = 0.0
    source: str = "built"  # or "rewired"

    @property
    def spec(self) -> ConcreteSpec:
        return ConcreteSpec.from_json(self.spec_document)

    @property
    def installable(self) -> bool:
        return self.artifact is not None


@dataclass
class BuildCache:
    path: Path | None = None
    by_hash: dict[str, CacheEntry] = field(default_factory=dict)
    by_name: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self._specs: dict[str, ConcreteSpec] = {}
        self._facts: list[tuple] | None = None

    @classmethod
    def open(cls, path: str | Path) -> BuildCache:
        cache = cls(Path(path))
        index = cache.path / "index.json"
        if not index.exists():
            return cache
        try:
            doc = json.loads(index.read_text(encoding="utf-8"))
            for h, meta in doc["entries"].items():
                artifact = None
                if meta.get("artifact"):
                    artifact = (cache.path / "artifacts" / f"{h}.bin").read_bytes()
                entry = CacheEntry(meta["spec"], h, artifact, meta.get("created_at", 0.0), meta.get("source", "built"))
                cache._insert(entry)
        except (OSError, KeyError, TypeError, ValueError, SpecValidationError, CycleDetected) as exc:
            raise CacheIOError(f"cannot read cache at {cache.path}: {exc}") from exc
        return cache

    # -- queries --

    def __len__(self) -> int:
        return len(self.by_hash)

    def __contains__(self, h: object) -> bool:
        return h in self.by_hash

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self.by_hash))

    def get(self, h: str) -> CacheEntry | None:
        return self.by_hash.get(h)

    def lookup_by_hash(self, h: str) -> ConcreteSpec | None:
        if h not in self.by_hash:
            return None
        spec = self._specs.get(h)
        if spec is None:
            spec = self._specs[h] = self.by_hash[h].spec
        return spec

    get_spec = lookup_by_hash

    def node(self, h: str) -> ConcreteNode:
        return self.lookup_by_hash(h).root_node  # type: ignore[union-attr]

    def hashes_for(self, name: str) -> list[str]:
        return list(self.by_name.get(name, ()))

    # -- mutation --

    def _insert(self, entry: CacheEntry) -> None:
        self.by_hash[entry.root_hash] = entry
        spec = self._specs[entry.root_hash] = entry.spec
        names = self.by_name.setdefault(spec.root_node.name, [])
        if entry.root_hash not in names:
            names.append(entry.root_hash)
            names.sort()
        self._facts = None

    def absorb(self, other: BuildCache) -> None:
        """Add ``other``'s entries to this (in-memory) view; earlier entries win."""
        for h in sorted(other.by_hash):
            if h not in self.by_hash:
                self._insert(other.by_hash[h])

    def push(
        self,
        spec: ConcreteSpec,
        artifact: bytes | None = None,
        expected_hash: str | None = None,
        source: str | None = None,
        dependency_artifacts: Mapping[str, bytes] | None = None,
    ) -> str:
        """Store ``spec`` (and every node of its closure) and return its root hash.

        Pushing identical content twice is a no-op; an artifact supplied for an
        entry that had none is attached.
        """
        spec.validate()
        if expected_hash is not None and expected_hash != spec.root:
            raise HashMismatch(f"expected {expected_hash[:8]}, spec hashes to {spec.root[:8]}")
        artifacts = dict(dependency_artifacts or {})
        if artifact is not None:
            artifacts[spec.root] = artifact
        changed = False
        for h in spec.postorder():
            old = self.by_hash.get(h)
            blob = artifacts.get(h)
            if old is not None and (blob is None or old.artifact is not None):
                continue
            node = spec.nodes[h]
            kind = source or ("rewired" if node.build_spec_hash else "built")
            self._insert(CacheEntry(spec.subspec(h).to_json(), h, blob, time.time(), kind))
            changed = True
        if changed and self.path is not None:
            self._write()
        return spec.root

    def _write(self) -> None:
        assert self.path is not None
        try:
            art_dir = self.path / "artifacts"
            art_dir.mkdir(parents=True, exist_ok=True)
            entries = {}
            for h, e in sorted(self.by_hash.items()):
                if e.artifact is not None:
                    target = art_dir / f"{h}.bin"
                    if not target.exists():
                        target.write_bytes(e.artifact)
                entries[h] = {
                    "spec": e.spec_document,
                    "artifact": e.artifact is not None,
                    "created_at": e.created_at,
                    "source": e.source,
                }
            fd, tmp = tempfile.mkstemp(dir=self.path, prefix=".index-", suffix=".json")
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump({"entries": entries}, fh, sort_keys=True, indent=1)
            os.replace(tmp, self.path / "index.json")
        except OSError as exc:
            raise CacheIOError(f"cannot write cache at {self.path}: {exc}") from exc

    def index_snapshot(self) -> dict[str, object]:
        return {
            "by_hash": {h: (e.spec_document, e.artifact, e.source) for h, e in self.by_hash.items()},
            "by_name": {k: list(v) for k, v in self.by_name.items()},
        }


def solver_facts(cache: BuildCache) -> list[tuple]:
    """Flatten every entry into per-node attribute rows.

    Rows are ``(hash, attribute, package, *args)``; a link-run dependency
    contributes a ``depends_on`` row and a separate ``hash`` row so that a
    solver can impose the two independently.
    """
    if cache._facts is not None:
        return cache._facts
    rows: list[tuple] = []
    for h in sorted(cache.by_hash):
        spec = cache.lookup_by_hash(h)
        node = spec.root_node
        rows.append((h, "version", node.name, str(node.version)))
        for key, value in node.variants:
            rows.append((h, "variant", node.name, key, value))
        rows.append((h, "node_os", node.name, node.os))
        rows.append((h, "node_target", node.name, node.target))
        if node.build_spec_hash is not None:
            rows.append((h, "build_spec", node.name, node.build_spec_hash))
        for kind, child in spec.edges_from(h):
            child_name = spec.nodes[child].name
            rows.append((h, "depends_on", node.name, child_name, kind))
            rows.append((h, "hash", child_name, child))
    cache._facts = rows
    return rows


def spec_from_facts(rows: list[tuple], root: str) -> ConcreteSpec:
    """Rebuild the spec rooted at ``root`` from :func:`solver_facts` rows."""
    from .spec import SpecBuilder
    from .version import Version

    by_hash: dict[str, list[tuple]] = {}
    for row in rows:
        by_hash.setdefault(row[0], []).append(row)
    builder = SpecBuilder()
    done: dict[str, str] = {}

    def visit(h: str) -> str:
        if h in done:
            return done[h]
        attrs = by_hash[h]
        name = next(r[2] for r in attrs if r[1] == "version")
        version = next(r[3] for r in attrs if r[1] == "version")
        variants = {r[3]: r[4] for r in attrs if r[1] == "variant"}
        os_ = next(r[3] for r in attrs if r[1] == "node_os")
        target = next(r[3] for r in attrs if r[1] == "node_target")
        bspec = next((r[3] for r in attrs if r[1] == "build_spec"), None)
        kinds = [(r[3], r[4]) for r in attrs if r[1] == "depends_on"]
        hashes = [(r[2], r[3]) for r in attrs if r[1] == "hash"]
        deps = [(kind, visit(child)) for (cname, kind), (_, child) in zip(kinds, hashes)]
        done[h] = builder.add(name, Version.parse(version), variants, os_, target, deps, bspec)
        return done[h]

    return builder.build(visit(root))


def canonical_index(cache: BuildCache) -> str:
    return canonical_json({h: e.spec_document for h, e in sorted(cache.by_hash.items())})


__all__ = ["BuildCache", "CacheEntry", "solver_facts", "spec_from_facts", "LINK_RUN"]
