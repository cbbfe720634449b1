import pytest

from _two_stack import expected
from splicekit.bench import generate_mpi_stack
from splicekit.buildcache import BuildCache
from splicekit.concretizer import Objective, SolveOptions, concretize, explain, render_tree, splice_candidates
from splicekit.errors import Unsatisfiable, UnknownPackage
from splicekit.fixtures import example_repo, two_stack_cache, two_stack_repo
from splicekit.parser import parse_spec
from splicekit.repo import PackageDef, Repo
from splicekit.spec import LINK_RUN, satisfies
from splicekit.parser import parse_constraint
from splicekit.version import Version

COLD = SolveOptions(reuse_enabled=False)
SPLICE = SolveOptions(splice_enabled=True)


def solve(text, repo, cache=None, opts=None):
    return concretize(parse_spec(text), repo, cache, opts or SolveOptions())


@pytest.fixture(scope="module")
def two_stack():
    cache, labels = two_stack_cache()
    return two_stack_repo(), cache, labels


def names(spec):
    return sorted(spec.nodes[h].name for h in spec.nodes)


def test_listing_request():
    r = solve("example@1.0.0", example_repo())
    root = r.spec.root_node
    assert str(root.version) == "1.0.0" and root.variant_map == {"bzip": True}
    kids = {n.name: n for n in r.spec.children(r.spec.root, LINK_RUN)}
    assert sorted(kids) == ["bzip2", "mpich", "zlib"]
    assert satisfies(kids["zlib"], parse_constraint("zlib@1.2"))
    assert str(kids["zlib"].version) == "1.2.11"
    assert kids["mpich"].variant_map == {"pmi": "pmix"}
    assert r.to_build == frozenset(names(r.spec)) and r.reused == frozenset()
    assert r.objective == Objective(4, 2, 0, 0, 2, 0)


def test_newest_version_by_default():
    r = solve("example", example_repo())
    assert str(r.spec.root_node.version) == "1.1.0"
    assert str(r.spec.find("zlib")[0].version) == "1.3.1"


def test_unsatisfiable_core_names_both_sides():
    with pytest.raises(Unsatisfiable) as info:
        solve("example@1.0.0 ^zlib@1.3", example_repo())
    text = "\n".join(info.value.core)
    assert "zlib@1.3" in text and "zlib@1.2" in text


def test_unknown_package():
    with pytest.raises(UnknownPackage):
        solve("nothere", example_repo())
    with pytest.raises(UnknownPackage):
        solve("example ^nothere", example_repo())


def test_single_package():
    repo = Repo.from_packages([PackageDef("solo", (Version.parse("1.0"),))])
    r = solve("solo", repo)
    assert len(r.spec.nodes) == 1 and r.objective.builds == 1


def test_virtual_root_resolves_to_provider():
    r = solve("mpi", example_repo())
    assert r.spec.root_node.name == "mpich"


def test_virtual_dependency_constraints_reach_provider():
    r = solve("example ^mpi pmi=slurm", example_repo())
    assert r.spec.find("mpich")[0].variant_map == {"pmi": "slurm"}
    assert r.objective.default_deviation == 1


def test_variant_domain_is_enforced():
    with pytest.raises(Unsatisfiable):
        solve("example ^mpich pmi=bogus", example_repo())


def test_reuses_exact_cache_hit(two_stack):
    repo, cache, labels = two_stack
    r = solve("t", repo, cache)
    assert r.spec.root == labels["T"]
    assert r.objective.builds == 0 and r.splices == []
    assert r.reused == frozenset(r.spec.nodes)


def test_no_reuse_builds_everything(two_stack):
    repo, cache, _ = two_stack
    r = solve("t", repo, cache, COLD)
    assert r.reused == frozenset() and r.objective.builds == 3


def test_splice_needs_splicing_enabled(two_stack):
    # t never depends on hprime, so without a splice the request cannot be met
    repo, cache, _ = two_stack
    with pytest.raises(Unsatisfiable):
        solve("t ^hprime", repo, cache)


def test_transitive_splice(two_stack):
    repo, cache, labels = two_stack
    want = expected()
    r = solve("t ^hprime", repo, cache, SPLICE)
    assert r.objective.builds == 0
    assert r.spec == want["blue"]
    (d,) = r.splices
    assert (d.parent_name, d.parent_hash) == ("t", labels["T"])
    assert (d.replaced_name, d.replaced_hash) == ("h", labels["H"])
    assert (d.replacement_name, d.replacement_hash) == ("hprime", labels["H'"])
    assert d.transitive


def test_two_level_splice(two_stack):
    repo, cache, labels = two_stack
    r = solve("t ^hprime ^z@1.0", repo, cache, SPLICE)
    assert r.objective.builds == 0
    assert r.spec == expected()["red"]
    assert len(r.splices) == 2
    assert not any(d.transitive for d in r.splices)
    by_parent = {d.parent_name: d for d in r.splices}
    assert by_parent["t"].replacement_name == "hprime"
    assert (by_parent["hprime"].replaced_hash, by_parent["hprime"].replacement_hash) == (labels["Z11"], labels["Z10"])


def test_reused_and_to_build_partition(two_stack):
    repo, cache, _ = two_stack
    for text, opts in [("t", SolveOptions()), ("t ^hprime", SPLICE), ("t ^z@1.1", SolveOptions()), ("t", COLD)]:
        r = solve(text, repo, cache, opts)
        built = {h for h in r.spec.nodes if r.spec.nodes[h].name in r.to_build}
        assert built | set(r.reused) == set(r.spec.nodes)
        assert not built & set(r.reused)


def test_exclusive_or_on_spliced_parents(two_stack):
    repo, cache, _ = two_stack
    r = solve("t ^hprime ^z@1.0", repo, cache, SPLICE)
    for h, node in r.spec.nodes.items():
        if node.build_spec_hash is None:
            continue
        original = cache.lookup_by_hash(node.build_spec_hash)
        before = {n.name for n in original.children(original.root, LINK_RUN)}
        after = {n.name for n in r.spec.children(h, LINK_RUN)}
        replaced = {d.replaced_name for d in r.splices if d.parent_hash == node.build_spec_hash}
        kept = before - replaced
        assert kept <= after
        for d in r.splices:
            if d.parent_hash == node.build_spec_hash:
                assert d.replaced_hash not in {n.hash for n in r.spec.children(h, LINK_RUN)}


def test_partial_cache_two_builds():
    repo = example_repo()
    cache = BuildCache()
    for text in ("zlib@1.2.11", "mpich"):
        cache.push(solve(text, repo, None, COLD).spec)
    r = solve("example@1.0.0", repo, cache)
    assert r.objective.builds == 2
    text = explain(r)
    assert "to build: 2" in text
    assert "  bzip2" in text and "  example" in text


def test_explain_zero_splices():
    assert "splices: []" in explain(solve("example", example_repo()))


def test_explain_transitive(two_stack):
    repo, cache, _ = two_stack
    text = explain(solve("t ^hprime", repo, cache, SPLICE))
    line = next(l for l in text.splitlines() if "->" in l)
    assert "in t " in line and "h /" in line and "hprime /" in line and "(transitive)" in line
    assert "provenance: t" in text


def test_explain_json_is_stable(two_stack):
    repo, cache, _ = two_stack
    a = explain(solve("t ^hprime", repo, cache, SPLICE), "json")
    b = explain(solve("t ^hprime", repo, cache, SPLICE), "json")
    assert a == b and '"transitive": true' in a


def test_tree_markers(two_stack):
    repo, cache, _ = two_stack
    tree = render_tree(solve("t ^hprime", repo, cache, SPLICE))
    assert tree.splitlines()[0].startswith("[s]")
    assert all(line[:3] in ("[s]", "[^]") for line in tree.splitlines())
    cold = render_tree(solve("t", repo, cache, COLD))
    assert all(line.startswith("[+]") for line in cold.splitlines())


def test_result_json_deterministic(two_stack):
    repo, cache, _ = two_stack
    a = solve("t ^hprime ^z@1.0", repo, cache, SPLICE).to_json()
    b = solve("t ^hprime ^z@1.0", repo, cache, SPLICE).to_json()
    assert a == b
    assert "wall_time" not in a


def test_options_invariant():
    with pytest.raises(ValueError):
        SolveOptions(reuse_enabled=False, splice_enabled=True)
    with pytest.raises(ValueError):
        SolveOptions(max_candidates_per_node=-1)


def test_max_candidates_limits_reuse(two_stack):
    repo, cache, _ = two_stack
    limited = solve("z", repo, cache, SolveOptions(max_candidates_per_node=1))
    assert limited.objective.builds == 0


def test_objective_order():
    assert Objective(0, 5, 5, 5) < Objective(1, 0, 0, 0)
    assert Objective(1, 0, 0, 0, 0, 0) < Objective(1, 0, 0, 1, 0, 0)
    # penalties on nodes that must be built outrank the build count
    assert Objective(2, 0, 1, 0, 0, 1) < Objective(2, 2, 0, 0, 2, 0)
    assert Objective(4, 2, 0, 0, 2, 0) < Objective(3, 2, 1, 0, 2, 1)
    # reused nodes' penalties only matter after the build count
    assert Objective(1, 3, 0, 0, 0, 0) < Objective(2, 0, 0, 0, 0, 0)


def test_solver_does_not_mutate_inputs(two_stack):
    repo, cache, _ = two_stack
    before = (dict(repo.packages), cache.index_snapshot())
    solve("t ^hprime ^z@1.0", repo, cache, SPLICE)
    assert before == (dict(repo.packages), cache.index_snapshot())


# -- splice candidates --


def test_one_replica_candidate():
    repo, cache = generate_mpi_stack(apps=1, replicas=1)
    (mpich,) = [cache.node(h) for h in cache.by_name["mpich"]]
    found = splice_candidates(mpich, repo, cache)
    assert len(found) == 1
    h, directive = found[0]
    assert cache.node(h).name == "mpiabi-000"
    assert str(directive.target) == "mpich@3.4.3"


def test_hundred_replica_candidates():
    repo, cache = generate_mpi_stack(apps=1, replicas=100)
    (mpich,) = [cache.node(h) for h in cache.by_name["mpich"]]
    assert len(splice_candidates(mpich, repo, cache)) == 100


def test_no_directive_no_candidates(two_stack):
    repo, cache, labels = two_stack
    assert splice_candidates(cache.node(labels["S"]), repo, cache) == []


def test_two_stack_candidates(two_stack):
    repo, cache, labels = two_stack
    assert [h for h, _ in splice_candidates(cache.node(labels["H"]), repo, cache)] == [labels["H'"]]
    assert [h for h, _ in splice_candidates(cache.node(labels["Z11"]), repo, cache)] == [labels["Z10"]]


def test_replica_splice_in_mpi_stack():
    repo, cache = generate_mpi_stack(apps=2, replicas=3)
    r = solve("app-01 ^mpiabi-002", repo, cache, SPLICE)
    assert r.objective.builds == 0
    assert r.splices and all(d.replaced_name == "mpich" and d.replacement_name == "mpiabi-002" for d in r.splices)
    assert r.objective.splice_count == len(r.splices)
