"""Small reference repositories, also reachable from the CLI as ``builtin:example`` and ``builtin:two-stack``.

``example_repo`` is the conditional package from the motivating example
(two versions, an optional bzip2 dependency, version-dependent zlib
requirements, a virtual mpi dependency and two can_splice declarations).
``two_stack_repo`` / ``two_stack_cache`` set up the two pre-built stacks T^H^Z@1.0
and H'^S^Z@1.1 used to demonstrate transitive and intransitive splices.
"""

from __future__ import annotations

from .buildcache import BuildCache
from .parser import parse_constraint, parse_spec
from .repo import CanSplice, DependsOn, PackageDef, Provides, Repo, VariantDef
from .spec import BUILD, LINK_RUN
from .version import Version


def _v(*texts: str) -> tuple[Version, ...]:
    return tuple(Version.parse(t) for t in texts)


def _dep(spec: str, when: str | None = None, kind: str = LINK_RUN) -> DependsOn:
    return DependsOn(parse_constraint(spec), parse_constraint(when) if when else None, kind)


def _splice(target: str, when: str | None = None) -> CanSplice:
    return CanSplice(parse_constraint(target), parse_constraint(when) if when else None)


def example_packages() -> list[PackageDef]:
    return [
        PackageDef(
            "example",
            _v("1.1.0", "1.0.0"),
            (VariantDef("bzip", True),),
            (
                _dep("bzip2", "+bzip"),
                _dep("zlib@1.2", "@1.0.0"),
                _dep("zlib@1.3", "@1.1.0"),
                _dep("mpi"),
            ),
            (),
            (_splice("example@1.0.0", "@1.1.0"), _splice("example-ng@2.3.2+compat", "@1.1.0+bzip")),
        ),
        PackageDef(
            "example-ng",
            _v("2.3.2"),
            (VariantDef("compat", True),),
            (_dep("zlib"), _dep("mpi")),
        ),
        PackageDef(
            "bzip2",
            _v("1.0.8"),
            (VariantDef("debug", False), VariantDef("pic", True), VariantDef("shared", True)),
        ),
        PackageDef(
            "zlib",
            _v("1.3.1", "1.2.11"),
            (VariantDef("optimize", True), VariantDef("pic", True), VariantDef("shared", True)),
        ),
        PackageDef(
            "mpich",
            _v("3.1"),
            (VariantDef("pmi", "pmix", ("pmix", "slurm", "simple")),),
            (),
            (Provides("mpi"),),
        ),
    ]


def example_repo() -> Repo:
    return Repo.from_packages(example_packages())


def two_stack_packages() -> list[PackageDef]:
    return [
        PackageDef("t", _v("1.0"), (), (_dep("h"), _dep("z"))),
        PackageDef("h", _v("1.0"), (), (_dep("z"),)),
        PackageDef("hprime", _v("1.0"), (), (_dep("s"), _dep("z")), (), (_splice("h"),)),
        PackageDef("s", _v("1.0")),
        PackageDef(
            "z",
            _v("1.1", "1.0"),
            (),
            (),
            (),
            (_splice("z@1.0", "@1.1"), _splice("z@1.1", "@1.0")),
        ),
    ]


def two_stack_repo() -> Repo:
    return Repo.from_packages(two_stack_packages())


def two_stack_cache(path=None) -> tuple[BuildCache, dict[str, str]]:
    """Cache holding T^H^Z@1.0 and H'^S^Z@1.1, plus the hashes by label."""
    from .concretizer import SolveOptions, concretize
    from .installer import stage_artifacts

    repo = two_stack_repo()
    cold = SolveOptions(reuse_enabled=False)
    cache = BuildCache.open(path) if path is not None else BuildCache()
    t = concretize(parse_spec("t ^z@1.0"), repo, None, cold).spec
    hp = concretize(parse_spec("hprime ^z@1.1"), repo, None, cold).spec
    cache.push(t, dependency_artifacts=stage_artifacts(t))
    cache.push(hp, dependency_artifacts=stage_artifacts(hp))
    labels = {
        "T": t.root,
        "H": t.find("h")[0].hash,
        "Z10": t.find("z")[0].hash,
        "H'": hp.root,
        "S": hp.find("s")[0].hash,
        "Z11": hp.find("z")[0].hash,
    }
    return cache, labels


def build_tool_package() -> PackageDef:
    """A build-only dependency, handy for exercising build-edge pruning."""
    return PackageDef("cmake", _v("3.27", "3.20"))


__all__ = [
    "BUILD",
    "build_tool_package",
    "example_packages",
    "example_repo",
    "two_stack_cache",
    "two_stack_packages",
    "two_stack_repo",
]
