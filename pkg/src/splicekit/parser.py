"""Command-line spec syntax.

Grammar (see docs/spec-grammar.md)::

    spec   := node (("^" | "%") node)*
    node   := name? clause*
    clause := "@" version | "+" variant | "~" variant | key "=" value
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ParseError
from .spec import (
    BUILD,
    LINK_RUN,
    NAME_RE,
    TOKEN_RE,
    VARIANT_NAME_RE,
    AbstractSpec,
    ConcreteSpec,
    NodeConstraints,
    VariantValue,
)
from .version import VersionConstraint

_WORD_CHARS = frozenset("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_.-")
_VERSION_CHARS = frozenset("0123456789.:")
ARCH_LESS = "arch-less"
_VARIANT_CHARS = frozenset("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_")


@dataclass(frozen=True)
class SpecToken:
    kind: str  # name, version, enable, disable, keyvalue, dep, build_dep
    text: str
    position: int


def tokenize(text: str) -> list[SpecToken]:
    tokens: list[SpecToken] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "^%":
            tokens.append(SpecToken("dep" if ch == "^" else "build_dep", ch, i))
            i += 1
        elif ch == "@":
            j = i + 1
            while j < n and text[j] in _VERSION_CHARS:
                j += 1
            tokens.append(SpecToken("version", text[i + 1 : j], i))
            i = j
        elif ch in "+~":
            j = i + 1
            while j < n and text[j] in _VARIANT_CHARS:
                j += 1
            if j == i + 1:
                raise ParseError("dangling variant sigil", text, i, ("variant name",))
            tokens.append(SpecToken("enable" if ch == "+" else "disable", text[i + 1 : j], i))
            i = j
        elif ch in _WORD_CHARS:
            j = i
            while j < n and text[j] in _WORD_CHARS:
                j += 1
            if j < n and text[j] == "=":
                k = j + 1
                while k < n and text[k] in _WORD_CHARS:
                    k += 1
                if k == j + 1:
                    raise ParseError("missing value after '='", text, j + 1, ("value",))
                tokens.append(SpecToken("keyvalue", text[i:k], i))
                i = k
            else:
                tokens.append(SpecToken("name", text[i:j], i))
                i = j
        else:
            raise ParseError(f"unexpected character {ch!r}", text, i, ("name", "@", "+", "~", "^", "%", "key=value"))
    return tokens


class _NodeState:
    def __init__(self, position: int) -> None:
        self.position = position
        self.name = ""
        self.version: VersionConstraint | None = None
        self.variants: dict[str, VariantValue] = {}
        self.os: str | None = None
        self.target: str | None = None
        self.clauses = 0

    def freeze(self) -> NodeConstraints:
        return NodeConstraints(self.name, self.version, tuple(self.variants.items()), self.os, self.target)


def _set_variant(node: _NodeState, key: str, value: VariantValue, text: str, pos: int) -> None:
    if not VARIANT_NAME_RE.match(key):
        raise ParseError(f"invalid variant name {key!r}", text, pos, ("lowercase variant name",))
    if key in node.variants:
        raise ParseError(f"variant {key!r} set twice", text, pos)
    node.variants[key] = value


def _set_label(node: _NodeState, attr: str, value: str, text: str, pos: int) -> None:
    if getattr(node, attr) is not None:
        raise ParseError(f"{attr} set twice", text, pos)
    setattr(node, attr, value)


def _apply(node: _NodeState, tok: SpecToken, text: str) -> None:
    node.clauses += 1
    if tok.kind == "version":
        if node.version is not None:
            raise ParseError("duplicate version clause", text, tok.position)
        try:
            node.version = VersionConstraint.parse(tok.text)
        except ValueError:
            raise ParseError(f"malformed version {tok.text!r}", text, tok.position, ("version",)) from None
    elif tok.kind in ("enable", "disable"):
        _set_variant(node, tok.text, tok.kind == "enable", text, tok.position)
    else:
        key, _, value = tok.text.partition("=")
        if key == "arch":
            parts = value.split("-")
            if len(parts) == 3:
                parts = parts[1:]
            if len(parts) != 2 or not all(parts):
                raise ParseError(f"malformed arch {value!r}", text, tok.position, ("platform-os-target",))
            _set_label(node, "os", parts[0], text, tok.position)
            _set_label(node, "target", parts[1], text, tok.position)
        elif key in ("os", "target"):
            _set_label(node, key, value, text, tok.position)
        else:
            lowered = value.lower()
            _set_variant(node, key, {"true": True, "false": False}.get(lowered, value), text, tok.position)


def _parse_nodes(text: str, anonymous_root: bool) -> list[tuple[_NodeState, str]]:
    tokens = tokenize(text)
    nodes: list[tuple[_NodeState, str]] = []
    current: _NodeState | None = None
    need_name = False
    for tok in tokens:
        if tok.kind in ("dep", "build_dep"):
            if current is None and not anonymous_root:
                raise ParseError("expected package name", text, tok.position, ("name",))
            if need_name:
                raise ParseError("dangling dependency sigil", text, nodes[-1][0].position, ("name",))
            current = _NodeState(tok.position)
            nodes.append((current, LINK_RUN if tok.kind == "dep" else BUILD))
            need_name = True
            continue
        if current is None:
            current = _NodeState(tok.position)
            nodes.append((current, ""))
            need_name = not anonymous_root
        if tok.kind == "name" and tok.text == ARCH_LESS and current.name:
            current.clauses += 1  # listing shorthand for "arch omitted"; binds nothing
            continue
        if tok.kind == "name":
            if current.name or current.clauses:
                raise ParseError(f"unexpected name {tok.text!r}", text, tok.position, ("@", "+", "~", "^", "%", "key=value"))
            if not NAME_RE.match(tok.text):
                raise ParseError(f"invalid package name {tok.text!r}", text, tok.position, ("name",))
            current.name = tok.text
            need_name = False
            continue
        if need_name:
            raise ParseError("package name required", text, current.position, ("name",))
        _apply(current, tok, text)
    if need_name:
        pos = nodes[-1][0].position if nodes else 0
        raise ParseError("package name required", text, pos, ("name",))
    return nodes


def parse_spec(text: str) -> AbstractSpec:
    nodes = _parse_nodes(text, anonymous_root=False)
    if not nodes:
        raise ParseError("empty spec", text, 0, ("name",))
    root = nodes[0][0].freeze()
    deps = []
    seen: set[str] = set()
    for state, kind in nodes[1:]:
        if state.name in seen:
            raise ParseError(f"dependency {state.name!r} given twice", text, state.position)
        seen.add(state.name)
        deps.append((state.freeze(), kind))
    return AbstractSpec(root, tuple(deps))


def parse_constraint(text: str) -> NodeConstraints:
    """Parse a single node clause list, e.g. a ``when=`` argument like ``@1.1.0+bzip``."""
    nodes = _parse_nodes(text, anonymous_root=True)
    if not nodes:
        return NodeConstraints()
    if len(nodes) > 1:
        raise ParseError("dependencies are not allowed here", text, nodes[1][0].position)
    return nodes[0][0].freeze()


# -- formatting ---------------------------------------------------------------


def _format_value(value: VariantValue) -> str:
    return str(value)


def format_constraints(nc: NodeConstraints) -> str:
    out = nc.name
    if nc.version is not None:
        out += f"@{nc.version}"
    for key, value in nc.variants:
        if isinstance(value, bool):
            out += ("+" if value else "~") + key
    words = [out] if out else []
    for key, value in nc.variants:
        if not isinstance(value, bool):
            words.append(f"{key}={_format_value(value)}")
    if nc.os is not None:
        words.append(f"os={nc.os}")
    if nc.target is not None:
        words.append(f"target={nc.target}")
    return " ".join(words)


def format_spec(spec: AbstractSpec | ConcreteSpec) -> str:
    if isinstance(spec, ConcreteSpec):
        return format_tree(spec)
    parts = [format_constraints(spec.root)]
    for dep, kind in spec.dependencies:
        sigil = "%" if kind == BUILD else "^"
        parts.append(sigil + format_constraints(dep))
    return " ".join(parts)


def format_node(node) -> str:
    text = f"{node.name}@{node.version}"
    flags = "".join(("+" if v else "~") + k for k, v in node.variants if isinstance(v, bool))
    if flags:
        text += " " + flags
    for key, value in node.variants:
        if not isinstance(value, bool):
            text += f" {key}={value}"
    return text + f" arch={node.os}-{node.target}"


def format_tree(spec: ConcreteSpec, markers: dict[str, str] | None = None, hashes: bool = False) -> str:
    """Indented tree, one line per node, first occurrence only."""
    lines: list[str] = []
    seen: set[str] = set()

    def walk(h: str, depth: int, sigil: str) -> None:
        node = spec.nodes[h]
        mark = (markers or {}).get(h, "")
        prefix = f"{mark:<4}" if markers is not None else ""
        line = prefix + "    " * depth + sigil + format_node(node)
        if hashes:
            line += f" /{h[:8]}"
        if node.build_spec_hash is not None:
            line += f" (build_spec /{node.build_spec_hash[:8]})"
        lines.append(line)
        if h in seen:
            return
        seen.add(h)
        for kind, child in spec.edges_from(h):
            if child not in seen:
                walk(child, depth + 1, "%" if kind == BUILD else "^")

    walk(spec.root, 0, "")
    return "\n".join(lines)
