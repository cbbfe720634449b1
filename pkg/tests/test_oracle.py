import random
import time

import pytest

from _instances import compare, random_instance
from splicekit.buildcache import BuildCache
from splicekit.concretizer import SolveOptions, concretize, oracle_solve
from splicekit.concretizer.oracle import MAX_CACHE_ENTRIES, MAX_PACKAGES
from splicekit.errors import InstanceTooLarge, Unsatisfiable
from splicekit.fixtures import example_repo, two_stack_cache, two_stack_repo
from splicekit.parser import parse_spec
from splicekit.repo import PackageDef, Repo, VariantDef
from splicekit.version import Version

RANDOM_INSTANCES = 250

FIXTURE_CASES = [
    ("example@1.0.0", False),
    ("example", False),
    ("example~bzip", False),
    ("example ^mpich pmi=slurm", False),
    ("mpi", False),
    ("example-ng", False),
]
TWO_STACK_CASES = [("t", False), ("t", True), ("t ^hprime", True), ("t ^hprime ^z@1.0", True), ("t ^z@1.1", True), ("t ^z@1.1", False), ("hprime ^z@1.0", True), ("h", True)]


@pytest.mark.parametrize("request_text,splice", FIXTURE_CASES)
def test_example_fixture(request_text, splice):
    kind, agree, detail = compare(request_text, example_repo(), None, SolveOptions(splice_enabled=splice))
    assert agree, detail


@pytest.mark.parametrize("request_text,splice", TWO_STACK_CASES)
def test_two_stack_fixture(request_text, splice):
    cache, _ = two_stack_cache()
    kind, agree, detail = compare(request_text, two_stack_repo(), cache, SolveOptions(splice_enabled=splice))
    assert agree, detail


def test_both_report_unsatisfiable():
    for fn in (oracle_solve, concretize):
        with pytest.raises(Unsatisfiable):
            fn(parse_spec("example@1.0.0 ^zlib@1.3"), example_repo())


def test_single_package_one_build():
    repo = Repo.from_packages([PackageDef("solo", (Version.parse("1.0"),))])
    assert oracle_solve(parse_spec("solo"), repo).objective.builds == 1


def test_rejects_large_instances():
    many = Repo.from_packages([PackageDef(f"p{i}", (Version.parse("1.0"),)) for i in range(MAX_PACKAGES + 1)])
    with pytest.raises(InstanceTooLarge):
        oracle_solve(parse_spec("p0"), many)
    wide = Repo.from_packages([PackageDef("w", tuple(Version.parse(f"1.{i}") for i in range(5)))])
    with pytest.raises(InstanceTooLarge):
        oracle_solve(parse_spec("w"), wide)
    flags = Repo.from_packages([PackageDef("f", (Version.parse("1.0"),), tuple(VariantDef(c, True) for c in "abcd"))])
    with pytest.raises(InstanceTooLarge):
        oracle_solve(parse_spec("f"), flags)


def test_rejects_large_cache():
    repo = Repo.from_packages([PackageDef("x", tuple(Version.parse(f"1.{i}") for i in range(4)), (VariantDef("a", True), VariantDef("b", True), VariantDef("c", True)))])
    cache = BuildCache()
    cold = SolveOptions(reuse_enabled=False)
    for i in range(4):
        for a in "+~":
            for b in "+~":
                for c in "+~":
                    cache.push(concretize(parse_spec(f"x@1.{i}{a}a{b}b{c}c"), repo, None, cold).spec)
    assert len(cache) == MAX_CACHE_ENTRIES
    oracle_solve(parse_spec("x"), repo, cache)
    cache.push(concretize(parse_spec("x@1.0"), Repo.from_packages([PackageDef("x", (Version.parse("1.0"),))]), None, cold).spec)
    with pytest.raises(InstanceTooLarge):
        oracle_solve(parse_spec("x"), repo, cache)


def test_random_instances_agree():
    start = time.perf_counter()
    kinds = {}
    failures = []
    for seed in range(RANDOM_INSTANCES):
        inst = random_instance(random.Random(seed), seed)
        kind, agree, detail = compare(inst.request, inst.repo, inst.cache, SolveOptions(splice_enabled=inst.splice))
        kinds[kind] = kinds.get(kind, 0) + 1
        if not agree:
            failures.append((seed, inst.request, detail))
    assert failures == []
    assert sum(kinds.values()) == RANDOM_INSTANCES
    # the corpus has to exercise every outcome, splicing included
    assert kinds.get("splice", 0) >= 10 and kinds.get("reuse", 0) >= 50 and kinds.get("unsat", 0) >= 10
    assert time.perf_counter() - start < 60
