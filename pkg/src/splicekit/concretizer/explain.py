"""Human- and machine-readable account of a solve."""

from __future__ import annotations

import json

from ..parser import format_tree
from .model import SolveResult


def explain(result: SolveResult, fmt: str = "text") -> str:
    spec = result.spec
    if fmt == "json":
        doc = {
            "root": spec.root,
            "reused": sorted(result.reused),
            "to_build": sorted(result.to_build),
            "splices": [s.to_dict() for s in result.splices],
            "objective": list(result.objective.as_tuple()),
            "provenance": {
                h: n.build_spec_hash for h, n in sorted(spec.nodes.items()) if n.build_spec_hash is not None
            },
        }
        return json.dumps(doc, sort_keys=True, indent=2)
    lines = []
    reused = sorted(result.reused)
    lines.append(f"reused: {len(reused)}")
    for h in reused:
        lines.append(f"  {spec.nodes[h].short()}")
    if result.splices:
        lines.append("splices:")
        for s in result.splices:
            mode = "transitive" if s.transitive else "intransitive"
            lines.append(
                f"  in {s.parent_name} /{s.parent_hash[:8]}: {s.replaced_name} /{s.replaced_hash[:8]}"
                f" -> {s.replacement_name} /{s.replacement_hash[:8]} ({mode})"
            )
    else:
        lines.append("splices: []")
    lines.append(f"to build: {len(result.to_build)}")
    for name in sorted(result.to_build):
        lines.append(f"  {name}")
    for h, n in sorted(spec.nodes.items()):
        if n.build_spec_hash is not None:
            lines.append(f"provenance: {n.name} /{h[:8]} built as /{n.build_spec_hash[:8]}")
    b, vp, dev, sc = result.objective.as_tuple()
    lines.append(f"objective: builds={b} version_penalty={vp} default_deviation={dev} splice_count={sc}")
    return "\n".join(lines)


def render_tree(result: SolveResult) -> str:
    """The concrete tree with a marker per node: [+] build, [^] reused, [s] spliced."""
    markers = {}
    for h, n in result.spec.nodes.items():
        if n.build_spec_hash is not None and h in result.reused:
            markers[h] = "[s]"
        elif h in result.reused:
            markers[h] = "[^]"
        else:
            markers[h] = "[+]"
    return format_tree(result.spec, markers=markers, hashes=True)
