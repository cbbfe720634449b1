"""``splicekit`` command-line tool.

Exit codes: 0 success, 1 solver or I/O failure (including unsatisfiable
requests and failed verification), 2 parse or usage error.

Settings resolve as flags > environment (SPLICEKIT_REPO, SPLICEKIT_CACHE,
SPLICEKIT_TREE) > JSON config file (``--config``) > defaults.  ``--repo``
also accepts ``builtin:example`` and ``builtin:two-stack``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import bench
from .buildcache import BuildCache
from .concretizer import SolveOptions, concretize, explain, render_tree
from .errors import ParseError, SplicekitError, Unsatisfiable
from .fixtures import example_repo, two_stack_repo
from .installer import InstallTree, install_result, stage_artifacts, verify
from .parser import format_spec, parse_spec
from .repo import Repo, load_repo
from .spec import AbstractSpec, NodeConstraints

BUILTIN_REPOS = {"builtin:example": example_repo, "builtin:two-stack": two_stack_repo}


class UsageError(SplicekitError):
    pass


@dataclass
class CliConfig:
    repo: Optional[str] = None
    caches: list[str] = field(default_factory=list)
    tree: Optional[str] = None
    reuse: bool = True
    splice: bool = False
    format: str = "text"

    @classmethod
    def resolve(cls, args: argparse.Namespace, env: dict[str, str]) -> CliConfig:
        cfg = cls()
        if args.config:
            try:
                doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise UsageError(f"cannot read config {args.config}: {exc}") from exc
            if not isinstance(doc, dict):
                raise UsageError("config file must hold a JSON object")
            unknown = set(doc) - {"repo", "cache", "tree", "reuse", "splice", "format"}
            if unknown:
                raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
            cfg.repo = doc.get("repo", cfg.repo)
            cache = doc.get("cache", [])
            cfg.caches = [cache] if isinstance(cache, str) else list(cache)
            cfg.tree = doc.get("tree", cfg.tree)
            cfg.reuse = bool(doc.get("reuse", cfg.reuse))
            cfg.splice = bool(doc.get("splice", cfg.splice))
            cfg.format = doc.get("format", cfg.format)
        if env.get("SPLICEKIT_REPO"):
            cfg.repo = env["SPLICEKIT_REPO"]
        if env.get("SPLICEKIT_CACHE"):
            cfg.caches = [p for p in env["SPLICEKIT_CACHE"].split(os.pathsep) if p]
        if env.get("SPLICEKIT_TREE"):
            cfg.tree = env["SPLICEKIT_TREE"]
        if args.repo is not None:
            cfg.repo = args.repo
        if args.cache:
            cfg.caches = list(args.cache)
        if args.tree is not None:
            cfg.tree = args.tree
        if getattr(args, "reuse", None) is not None:
            cfg.reuse = args.reuse
        if getattr(args, "splice", None) is not None:
            cfg.splice = args.splice
        if getattr(args, "format", None) is not None:
            cfg.format = args.format
        if cfg.format not in ("text", "json"):
            raise UsageError(f"unknown format {cfg.format!r}")
        return cfg

    def load_repo(self) -> Repo:
        if not self.repo:
            raise UsageError("no package repository given (--repo or SPLICEKIT_REPO)")
        if self.repo in BUILTIN_REPOS:
            return BUILTIN_REPOS[self.repo]()
        return load_repo(self.repo)

    def open_caches(self) -> tuple[BuildCache, Optional[BuildCache]]:
        """A merged view for solving, plus the first cache (the push target)."""
        opened = [BuildCache.open(p) for p in self.caches]
        if not opened:
            return BuildCache(), None
        if len(opened) == 1:
            return opened[0], opened[0]
        view = BuildCache()
        for c in opened:
            view.absorb(c)
        return view, opened[0]

    def options(self) -> SolveOptions:
        if self.splice and not self.reuse:
            raise UsageError("--splice requires reuse")
        return SolveOptions(reuse_enabled=self.reuse, splice_enabled=self.splice)


def _constraints_doc(nc: NodeConstraints) -> dict[str, object]:
    return {
        "name": nc.name,
        "version": None if nc.version is None else str(nc.version),
        "variants": {k: v for k, v in nc.variants},
        "os": nc.os,
        "target": nc.target,
    }


def spec_ast(spec: AbstractSpec) -> dict[str, object]:
    return {
        "root": _constraints_doc(spec.root),
        "dependencies": [{"kind": kind, **_constraints_doc(d)} for d, kind in spec.dependencies],
    }


def _parse(text: str) -> AbstractSpec:
    return parse_spec(text)


# -- subcommands --


def cmd_spec(args, cfg: CliConfig, out) -> int:
    spec = _parse(args.spec)
    if cfg.format == "json":
        print(json.dumps(spec_ast(spec), sort_keys=True, indent=2), file=out)
    else:
        print(format_spec(spec), file=out)
    return 0


def _solve(args, cfg: CliConfig):
    request = _parse(args.spec)
    repo = cfg.load_repo()
    view, target = cfg.open_caches()
    result = concretize(request, repo, view if cfg.reuse else None, cfg.options())
    return result, repo, view, target


def cmd_concretize(args, cfg: CliConfig, out) -> int:
    result, *_ = _solve(args, cfg)
    if cfg.format == "json":
        print(result.to_json(), file=out)
    else:
        print(render_tree(result), file=out)
        print(explain(result), file=out)
    return 0


def cmd_install(args, cfg: CliConfig, out) -> int:
    if not cfg.tree:
        raise UsageError("no install tree given (--tree or SPLICEKIT_TREE)")
    result, _, view, _ = _solve(args, cfg)
    tree = InstallTree(Path(cfg.tree).resolve())
    actions = install_result(result.spec, tree, view)
    report = verify(tree.installed[result.spec.root], tree, result.spec)
    if cfg.format == "json":
        doc = {
            "root": result.spec.root,
            "prefix": report["prefix"],
            "actions": {h: a for h, a in sorted(actions.items())},
            "verify": report,
        }
        print(json.dumps(doc, sort_keys=True, indent=2), file=out)
    else:
        for h, action in actions.items():
            print(f"{action:<8} {result.spec.nodes[h].short()}", file=out)
        print(f"prefix: {report['prefix']}", file=out)
        for f in report["failures"]:
            print(f"verify failure: {f}", file=out)
        print(f"verified {report['checked']} artifacts, {len(report['failures'])} failures", file=out)
    return 1 if report["failures"] else 0


def cmd_cache(args, cfg: CliConfig, out) -> int:
    if args.cache_cmd == "list":
        view, _ = cfg.open_caches()
        rows = sorted((view.node(h).name, str(view.node(h).version), h) for h in view)
        if cfg.format == "json":
            print(json.dumps([{"name": n, "version": v, "hash": h} for n, v, h in rows], indent=2), file=out)
        else:
            for n, v, h in rows:
                print(f"{n}@{v} /{h[:8]}", file=out)
        return 0
    result, _, view, target = _solve(args, cfg)
    if target is None:
        raise UsageError("cache push needs a cache path (--cache or SPLICEKIT_CACHE)")
    spec = result.spec
    entry = target.get(spec.root)
    if entry is not None and entry.artifact is not None:
        print(f"{spec.root_node.short()} already present", file=out)
        return 0
    missing = {h for h in spec.nodes if target.get(h) is None or target.get(h).artifact is None}
    artifacts = {}
    for h in missing:
        have = view.get(h)
        if have is not None and have.artifact is not None:
            artifacts[h] = have.artifact
    artifacts.update(stage_artifacts(spec, missing - set(artifacts)))
    target.push(spec, dependency_artifacts=artifacts)
    print(f"pushed {spec.root_node.short()} ({len(missing)} new entries)", file=out)
    return 0


def cmd_bench(args, cfg: CliConfig, out) -> int:
    scenario = bench.BenchScenario.from_file(args.scenario) if args.scenario else bench.BenchScenario()
    if args.repetitions is not None:
        scenario.repetitions = args.repetitions
    rows = bench.run_scenario(scenario)
    if args.summary:
        text = bench.to_csv(bench.summarize(rows), bench.SUMMARY_COLUMNS)
    else:
        text = bench.to_csv(rows)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        out.write(text)
    return 0


def _common(suppress: bool) -> argparse.ArgumentParser:
    # global options may sit before or after the subcommand; the copy on each
    # subparser suppresses its defaults so it never clobbers an earlier value
    default = argparse.SUPPRESS if suppress else None
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--repo", default=default, help="package repository directory or builtin:example / builtin:two-stack")
    common.add_argument("--cache", action="append", default=default, help="build cache directory (repeatable, first is the push target)")
    common.add_argument("--tree", default=default, help="install tree root")
    common.add_argument("--config", default=default, help="JSON config file")
    common.add_argument("--format", choices=["text", "json"], default=default)
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common(True)
    p = argparse.ArgumentParser(prog="splicekit", parents=[_common(False)], description="Concretize, splice and install mock packages.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("spec", parents=[common], help="parse a spec and print its canonical form")
    s.add_argument("spec")
    s.set_defaults(func=cmd_spec)

    def solver_flags(q):
        q.add_argument("spec")
        q.add_argument("--reuse", action=argparse.BooleanOptionalAction, default=None)
        q.add_argument("--splice", action=argparse.BooleanOptionalAction, default=None)

    c = sub.add_parser("concretize", parents=[common], help="solve a request")
    solver_flags(c)
    c.set_defaults(func=cmd_concretize)

    i = sub.add_parser("install", parents=[common], help="solve, install or rewire, then verify")
    solver_flags(i)
    i.set_defaults(func=cmd_install)

    k = sub.add_parser("cache", parents=[common], help="list or push build cache entries")
    ksub = k.add_subparsers(dest="cache_cmd", required=True)
    kl = ksub.add_parser("list", parents=[common])
    kl.set_defaults(func=cmd_cache)
    kp = ksub.add_parser("push", parents=[common])
    solver_flags(kp)
    kp.set_defaults(func=cmd_cache)

    b = sub.add_parser("bench", parents=[common], help="run a benchmark scenario and print CSV")
    b.add_argument("--scenario", help="scenario JSON file")
    b.add_argument("--repetitions", type=int)
    b.add_argument("--summary", action="store_true", help="mean and stddev per group instead of raw rows")
    b.add_argument("--output", help="write CSV here instead of stdout")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv: Sequence[str] | None = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = CliConfig.resolve(args, dict(os.environ))
        return args.func(args, cfg, out)
    except ParseError as exc:
        print(f"error: {exc}", file=err)
        print(exc.caret(), file=err)
        return 2
    except UsageError as exc:
        print(f"error: {exc}", file=err)
        return 2
    except Unsatisfiable as exc:
        print(f"error: {exc}", file=err)
        return 1
    except (SplicekitError, ValueError) as exc:
        print(f"error: {exc}", file=err)
        return 1


if __name__ == "__main__":
    sys.exit(main())
