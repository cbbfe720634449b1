import pytest

from _two_stack import expected
from splicekit.errors import MissingDependency, PrefixTooLong
from splicekit.fixtures import two_stack_cache
from splicekit.installer import (
    HEADER,
    MAGIC,
    W,
    ArtifactFormatError,
    DepField,
    InstallTree,
    MockBinary,
    artifact_length,
    dep_prefix_span,
    dep_span,
    install,
    install_result,
    ordered_children,
    rewire,
    self_prefix_span,
    stage_artifacts,
    verify,
)
from splicekit.spec import LINK_RUN, SpecBuilder


@pytest.fixture
def two_stack():
    cache, labels = two_stack_cache()
    return cache, labels, expected()


def outside(data, spans):
    """Bytes of ``data`` with every span blanked, for comparing the untouched remainder."""
    out = bytearray(data)
    for start, end in spans:
        out[start:end] = b"?" * (end - start)
    return bytes(out)


def test_artifact_length():
    assert HEADER == 105
    assert artifact_length(0) == 105 + 256
    assert artifact_length(2) == 105 + 256 + 2 * 384


def test_round_trip_leaf_and_parent():
    leaf = MockBinary("z", "1.0", "/p/z")
    assert MockBinary.from_bytes(leaf.to_bytes()) == leaf
    assert leaf.to_bytes().startswith(MAGIC)
    parent = MockBinary("t", "1.0", "/p/t", [DepField("h", "a" * 64, "/p/h"), DepField("z", "b" * 64, "/p/z")])
    data = parent.to_bytes()
    assert len(data) == artifact_length(2)
    assert [d.name for d in MockBinary.from_bytes(data).deps] == ["h", "z"]


def test_format_errors():
    good = MockBinary("z", "1.0", "/p").to_bytes()
    with pytest.raises(ArtifactFormatError):
        MockBinary.from_bytes(b"XXXXX" + good[5:])
    with pytest.raises(ArtifactFormatError):
        MockBinary.from_bytes(good[:-1])
    with pytest.raises(PrefixTooLong):
        MockBinary("z", "1.0", "/" + "p" * W).to_bytes()


def test_dependents_come_first(two_stack):
    _, _, want = two_stack
    t = want["T"]
    # h depends on z, so h is listed before z
    assert [c.name for c in ordered_children(t, t.root)] == ["h", "z"]


def test_install_and_verify(two_stack, tmp_path):
    cache, labels, _ = two_stack
    tree = InstallTree(tmp_path / "tree")
    prefix = install(cache.get(labels["T"]), tree, cache)
    assert prefix == tree.installed[labels["T"]]
    report = verify(prefix, tree, cache.lookup_by_hash(labels["T"]))
    assert report["failures"] == [] and report["checked"] == 3
    binary = MockBinary.from_bytes(tree.read(labels["T"], "t"))
    assert [(d.name, d.hash) for d in binary.deps] == [("h", labels["H"]), ("z", labels["Z10"])]
    assert all(d.prefix.startswith(str(tmp_path)) for d in binary.deps)


def test_install_is_idempotent(two_stack, tmp_path):
    cache, labels, _ = two_stack
    tree = InstallTree(tmp_path)
    install(cache.get(labels["T"]), tree, cache)
    before = tree.read(labels["T"], "t")
    install(cache.get(labels["T"]), tree, cache)
    assert tree.read(labels["T"], "t") == before
    assert InstallTree(tmp_path).installed == tree.installed


def test_two_trees_differ_only_in_paths(two_stack, tmp_path):
    cache, labels, _ = two_stack
    a, b = InstallTree(tmp_path / "a"), InstallTree(tmp_path / "b")
    install(cache.get(labels["T"]), a, cache)
    install(cache.get(labels["T"]), b, cache)
    x, y = a.read(labels["T"], "t"), b.read(labels["T"], "t")
    spans = [self_prefix_span(), dep_prefix_span(0), dep_prefix_span(1)]
    assert x != y and outside(x, spans) == outside(y, spans)


def test_missing_artifact(tmp_path):
    from splicekit.buildcache import BuildCache

    b = SpecBuilder()
    spec = b.build(b.add("solo", "1.0"))
    cache = BuildCache()
    cache.push(spec)
    with pytest.raises(MissingDependency):
        install(spec, InstallTree(tmp_path), cache)


@pytest.mark.parametrize("key", ["blue", "red"])
def test_rewire_verifies(two_stack, tmp_path, key):
    cache, labels, want = two_stack
    spliced = want[key]
    tree = InstallTree(tmp_path)
    prefix = rewire(spliced, tree, cache)
    report = verify(prefix, tree, spliced)
    assert report["failures"] == [] and report["checked"] == len(spliced.nodes)


@pytest.mark.parametrize("key", ["blue", "red"])
def test_rewire_byte_invariants(two_stack, tmp_path, key):
    cache, labels, want = two_stack
    spliced = want[key]
    tree = InstallTree(tmp_path)
    rewire(spliced, tree, cache)
    for h, node in spliced.nodes.items():
        if node.build_spec_hash is None:
            continue
        original = cache.get(node.build_spec_hash).artifact
        data = tree.read(h, node.name)
        assert len(data) == len(original)
        assert data[:HEADER] == original[:HEADER]
        before = MockBinary.from_bytes(original)
        after = MockBinary.from_bytes(data)
        spans = [self_prefix_span()]
        for i, (old, new) in enumerate(zip(before.deps, after.deps)):
            spans.append(dep_span(i) if old.hash != new.hash else dep_prefix_span(i))
        assert outside(data, spans) == outside(original, spans)


def test_noop_rewire_changes_only_self_prefix(two_stack, tmp_path):
    cache, labels, want = two_stack
    b = SpecBuilder()
    z10 = b.add("z", "1.0")
    h = b.add("h", "1.0", dependencies=[(LINK_RUN, z10)])
    t = b.add("t", "1.0", dependencies=[(LINK_RUN, h), (LINK_RUN, z10)])
    copy = b.add("t", "1.0", dependencies=[(LINK_RUN, h), (LINK_RUN, z10)], build_spec_hash=t)
    spliced = b.build(copy)
    assert copy != t
    tree = InstallTree(tmp_path / "x")
    rewire(spliced, tree, cache)
    stage = InstallTree(tmp_path / "y")
    install(cache.get(t), stage, cache)
    # same dependencies, same tree root: only the node's own prefix moves
    tree_data = tree.read(copy, "t")
    assert outside(tree_data, [self_prefix_span()]) == outside(
        stage.read(t, "t").replace(str(tmp_path / "y").encode(), str(tmp_path / "x").encode()), [self_prefix_span()]
    )
    assert verify(tree.installed[copy], tree, spliced)["failures"] == []


def test_corrupted_dependency_hash_is_one_failure(two_stack, tmp_path):
    cache, labels, _ = two_stack
    tree = InstallTree(tmp_path)
    prefix = install(cache.get(labels["T"]), tree, cache)
    path = tree.artifact_path(prefix, "t")
    data = bytearray(path.read_bytes())
    start, _ = dep_span(1)
    data[start + 64 : start + 128] = b"0" * 64
    path.write_bytes(bytes(data))
    failures = verify(prefix, tree, cache.lookup_by_hash(labels["T"]))["failures"]
    assert len(failures) == 1 and failures[0]["dep"] == "z"


def test_verify_unknown_prefix(two_stack, tmp_path):
    cache, labels, _ = two_stack
    tree = InstallTree(tmp_path)
    report = verify("/nowhere", tree, cache.lookup_by_hash(labels["T"]))
    assert report["checked"] == 0 and len(report["failures"]) == 1


def test_prefix_too_long(two_stack):
    cache, labels, _ = two_stack
    tree = InstallTree("/" + "d" * 300, persist=False)
    with pytest.raises(PrefixTooLong):
        install(cache.get(labels["T"]), tree, cache)


def test_install_result_actions(two_stack, tmp_path):
    cache, labels, want = two_stack
    tree = InstallTree(tmp_path)
    actions = install_result(want["red"], tree, cache)
    L = want["labels"]
    assert actions[L["T_red"]] == "rewired" and actions[L["H'_red"]] == "rewired"
    assert actions[L["S"]] == "reused" and actions[L["Z10"]] == "reused"
    again = install_result(want["red"], tree, cache)
    assert set(again.values()) == {"present"}


def test_install_result_builds_unknown_nodes(tmp_path):
    from splicekit.buildcache import BuildCache

    b = SpecBuilder()
    leaf = b.add("leaf", "1.0")
    top = b.add("top", "1.0", dependencies=[(LINK_RUN, leaf)])
    spec = b.build(top)
    tree = InstallTree(tmp_path)
    actions = install_result(spec, tree, BuildCache())
    assert set(actions.values()) == {"built"}
    assert verify(tree.installed[top], tree, spec)["failures"] == []


def test_staged_artifacts_point_at_stage_root(two_stack):
    _, _, want = two_stack
    staged = stage_artifacts(want["T"])
    assert set(staged) == set(want["T"].nodes)
    assert MockBinary.from_bytes(staged[want["T"].root]).self_prefix.startswith("/splicekit-stage/")
