"""Package definitions and the on-disk package repository.

Each package lives in ``<repo>/packages/<name>.json``; the schema is in
docs/package-schema.md.  Directive arguments use the spec syntax.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .errors import ParseError, RepoFormatError, ValidationError
from .parser import format_constraints, parse_constraint
from .spec import (
    BUILD,
    LINK_RUN,
    NAME_RE,
    ConcreteNode,
    NodeConstraints,
    VariantValue,
    _version_subset,
    satisfies,
)
from .version import Version

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class VariantDef:
    name: str
    default: VariantValue
    values: Optional[tuple[str, ...]] = None  # None for boolean variants

    @property
    def is_bool(self) -> bool:
        return self.values is None

    def allowed(self) -> tuple[VariantValue, ...]:
        return (True, False) if self.values is None else self.values


@dataclass(frozen=True)
class DependsOn:
    target: NodeConstraints
    when: Optional[NodeConstraints] = None
    kind: str = LINK_RUN


@dataclass(frozen=True)
class Provides:
    virtual: str
    when: Optional[NodeConstraints] = None


@dataclass(frozen=True)
class CanSplice:
    target: NodeConstraints
    when: Optional[NodeConstraints] = None


Directive = Union[DependsOn, Provides, CanSplice]


@dataclass(frozen=True)
class PackageDef:
    name: str
    versions: tuple[Version, ...]
    variants: tuple[VariantDef, ...] = ()
    depends_on: tuple[DependsOn, ...] = ()
    provides: tuple[Provides, ...] = ()
    can_splice: tuple[CanSplice, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "versions", tuple(sorted(self.versions, reverse=True)))
        for attr in ("variants", "depends_on", "provides", "can_splice"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))

    @property
    def directives(self) -> tuple[Directive, ...]:
        return self.depends_on + self.provides + self.can_splice

    def variant(self, name: str) -> VariantDef | None:
        for v in self.variants:
            if v.name == name:
                return v
        return None

    def version_index(self, version: Version) -> int:
        """Position in the newest-first list; undeclared versions rank last."""
        try:
            return self.versions.index(version)
        except ValueError:
            return len(self.versions)

    def default_deviation(self, variants: Mapping[str, VariantValue]) -> int:
        return sum(1 for v in self.variants if variants.get(v.name) != v.default)

    def defaults(self) -> dict[str, VariantValue]:
        return {v.name: v.default for v in self.variants}


@dataclass
class Repo:
    packages: dict[str, PackageDef] = field(default_factory=dict)
    providers: dict[str, list[str]] = field(default_factory=dict)

    @classmethod
    def from_packages(cls, defs: Iterable[PackageDef]) -> Repo:
        packages: dict[str, PackageDef] = {}
        for d in defs:
            if d.name in packages:
                raise ValidationError(f"package {d.name} defined twice")
            packages[d.name] = d
        providers: dict[str, list[str]] = {}
        for name in sorted(packages):
            for p in packages[name].provides:
                lst = providers.setdefault(p.virtual, [])
                if name not in lst:
                    lst.append(name)
        repo = cls(packages, providers)
        for d in packages.values():
            validate_package(d, repo)
        return repo

    def __contains__(self, name: str) -> bool:
        return name in self.packages

    def get(self, name: str) -> PackageDef:
        return self.packages[name]

    def is_virtual(self, name: str) -> bool:
        return name not in self.packages and name in self.providers

    def provided_by(self, node: ConcreteNode | NodeConstraints) -> list[str]:
        """Virtuals that ``node``'s package provides in this configuration."""
        pkg = self.packages.get(node.name)
        if pkg is None:
            return []
        return [p.virtual for p in pkg.provides if p.when is None or satisfies(node, p.when)]

    def stripped(self) -> Repo:
        """A copy without can_splice directives."""
        return Repo.from_packages(
            PackageDef(d.name, d.versions, d.variants, d.depends_on, d.provides, ()) for d in self.packages.values()
        )


# -- conditional directives ---------------------------------------------------


def when_status(when: NodeConstraints | None, assignment: ConcreteNode | NodeConstraints) -> bool | None:
    """Three-valued evaluation of a when-clause against a partial assignment.

    Returns None when the assignment does not yet bind a field the clause
    mentions and no other field already decides it false.
    """
    if when is None:
        return True
    if isinstance(assignment, ConcreteNode):
        return satisfies(assignment, when)
    undetermined = False
    if when.version is not None:
        have = assignment.version
        if have is None:
            undetermined = True
        elif _version_subset(have, when.version):
            pass
        else:
            try:
                have.intersect(when.version)
            except Exception:
                return False
            undetermined = True
    bound = dict(assignment.variants)
    for key, value in when.variants:
        if key not in bound:
            undetermined = True
        elif bound[key] != value:
            return False
    for attr in ("os", "target"):
        want = getattr(when, attr)
        if want is None:
            continue
        have_label = getattr(assignment, attr)
        if have_label is None:
            undetermined = True
        elif have_label != want:
            return False
    return None if undetermined else True


def directive_status(pkg: PackageDef, assignment: ConcreteNode | NodeConstraints) -> list[tuple[Directive, bool | None]]:
    return [(d, when_status(d.when, assignment)) for d in pkg.directives]


def active_directives(pkg: PackageDef, assignment: ConcreteNode | NodeConstraints) -> list[Directive]:
    return [d for d, status in directive_status(pkg, assignment) if status is True]


# -- loading and validation ---------------------------------------------------


def _check_when(pkg: PackageDef, when: NodeConstraints | None, what: str) -> None:
    if when is None:
        return
    if when.name and when.name != pkg.name:
        raise ValidationError(f"{pkg.name}: when-clause of {what} names another package ({when.name})")
    for key, value in when.variants:
        var = pkg.variant(key)
        if var is None:
            raise ValidationError(f"{pkg.name}: when-clause of {what} references undeclared variant {key!r}")
        if value not in var.allowed():
            raise ValidationError(f"{pkg.name}: when-clause of {what} uses invalid value {value!r} for {key!r}")


def validate_package(pkg: PackageDef, repo: Repo | None = None) -> None:
    if not NAME_RE.match(pkg.name):
        raise ValidationError(f"invalid package name {pkg.name!r}")
    if not pkg.versions:
        raise ValidationError(f"{pkg.name}: no versions declared")
    if len(set(pkg.versions)) != len(pkg.versions):
        raise ValidationError(f"{pkg.name}: duplicate versions")
    names = [v.name for v in pkg.variants]
    if len(set(names)) != len(names):
        raise ValidationError(f"{pkg.name}: duplicate variant names")
    for var in pkg.variants:
        if var.default not in var.allowed():
            raise ValidationError(f"{pkg.name}: default of {var.name!r} is not an allowed value")
    for dep in pkg.depends_on:
        _check_when(pkg, dep.when, f"depends_on({format_constraints(dep.target)})")
        if dep.kind not in (LINK_RUN, BUILD):
            raise ValidationError(f"{pkg.name}: unknown dependency type {dep.kind!r}")
        if not dep.target.name:
            raise ValidationError(f"{pkg.name}: depends_on needs a package name")
        if repo is not None and dep.target.name not in repo.packages and dep.target.name not in repo.providers:
            log.warning("%s: dependency on %s, which no package defines or provides", pkg.name, dep.target.name)
    for p in pkg.provides:
        _check_when(pkg, p.when, f"provides({p.virtual})")
    for cs in pkg.can_splice:
        _check_when(pkg, cs.when, f"can_splice({format_constraints(cs.target)})")
        if not cs.target.name:
            raise ValidationError(f"{pkg.name}: can_splice target needs a package name")


def _constraint(text: object, where: str) -> NodeConstraints:
    if not isinstance(text, str):
        raise RepoFormatError(f"{where}: expected a spec string, got {text!r}")
    try:
        return parse_constraint(text)
    except (ParseError, ValueError) as exc:
        raise RepoFormatError(f"{where}: {exc}") from exc


def _when(obj: Mapping[str, object], where: str) -> NodeConstraints | None:
    when = obj.get("when")
    return None if when in (None, "") else _constraint(when, where)


def package_from_document(doc: Mapping[str, object]) -> PackageDef:
    try:
        name = doc["name"]
        where = f"package {name}"
        versions = tuple(Version.parse(v) for v in doc["versions"])  # type: ignore[union-attr]
        variants = []
        for v in doc.get("variants", []):  # type: ignore[union-attr]
            values = v.get("values")
            variants.append(VariantDef(v["name"], v["default"], tuple(values) if values is not None else None))
        depends = []
        for d in doc.get("depends_on", []):  # type: ignore[union-attr]
            target = _constraint(d["spec"], where)
            depends.append(DependsOn(target, _when(d, where), d.get("type", LINK_RUN)))
        provides = [Provides(p["virtual"], _when(p, where)) for p in doc.get("provides", [])]  # type: ignore[union-attr]
        splices = [CanSplice(_constraint(c["target"], where), _when(c, where)) for c in doc.get("can_splice", [])]  # type: ignore[union-attr]
    except (KeyError, TypeError, AttributeError, ValueError) as exc:
        raise RepoFormatError(f"malformed package document: {exc!r}") from exc
    pkg = PackageDef(name, versions, tuple(variants), tuple(depends), tuple(provides), tuple(splices))  # type: ignore[arg-type]
    validate_package(pkg)
    return pkg


def package_to_document(pkg: PackageDef) -> dict[str, object]:
    def when(w: NodeConstraints | None) -> dict[str, str]:
        return {} if w is None else {"when": format_constraints(w)}

    doc: dict[str, object] = {"name": pkg.name, "versions": [str(v) for v in pkg.versions]}
    if pkg.variants:
        doc["variants"] = [
            {"name": v.name, "default": v.default, **({} if v.values is None else {"values": list(v.values)})}
            for v in pkg.variants
        ]
    if pkg.depends_on:
        doc["depends_on"] = [
            {"spec": format_constraints(d.target), "type": d.kind, **when(d.when)} for d in pkg.depends_on
        ]
    if pkg.provides:
        doc["provides"] = [{"virtual": p.virtual, **when(p.when)} for p in pkg.provides]
    if pkg.can_splice:
        doc["can_splice"] = [{"target": format_constraints(c.target), **when(c.when)} for c in pkg.can_splice]
    return doc


def load_repo(path: str | Path) -> Repo:
    root = Path(path)
    if not root.is_dir():
        raise RepoFormatError(f"repository {root} is not a directory")
    pkg_dir = root / "packages"
    defs = []
    if pkg_dir.is_dir():
        for file in sorted(pkg_dir.glob("*.json")):
            try:
                doc = json.loads(file.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise RepoFormatError(f"{file}: {exc}") from exc
            if not isinstance(doc, dict):
                raise RepoFormatError(f"{file}: expected a JSON object")
            pkg = package_from_document(doc)
            if pkg.name != file.stem:
                raise RepoFormatError(f"{file}: defines {pkg.name}, expected {file.stem}")
            defs.append(pkg)
    return Repo.from_packages(defs)


def write_repo(repo: Repo, path: str | Path) -> None:
    pkg_dir = Path(path) / "packages"
    pkg_dir.mkdir(parents=True, exist_ok=True)
    for name, pkg in sorted(repo.packages.items()):
        text = json.dumps(package_to_document(pkg), indent=2, sort_keys=True)
        (pkg_dir / f"{name}.json").write_text(text + "\n", encoding="utf-8")
