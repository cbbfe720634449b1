import json

import pytest

from splicekit.buildcache import BuildCache, canonical_index, solver_facts, spec_from_facts
from splicekit.concretizer import SolveOptions, concretize
from splicekit.errors import CacheIOError, HashMismatch
from splicekit.fixtures import example_repo, two_stack_cache
from splicekit.parser import parse_spec
from splicekit.spec import BUILD, LINK_RUN, SpecBuilder


def example_spec(text="example@1.1.0+bzip"):
    return concretize(parse_spec(text), example_repo(), None, SolveOptions(reuse_enabled=False)).spec


def three_deps():
    b = SpecBuilder()
    kids = [(LINK_RUN, b.add(n, "1.0")) for n in ("a", "b", "c")]
    return b.build(b.add("top", "1.0", dependencies=kids))


def test_push_lookup_round_trip():
    cache = BuildCache()
    spec = example_spec()
    h = cache.push(spec)
    assert h == spec.root
    assert cache.lookup_by_hash(h) == spec
    assert cache.lookup_by_hash("0" * 64) is None


def test_push_stores_every_closure_node():
    cache = BuildCache()
    spec = example_spec()
    cache.push(spec)
    assert set(cache) == set(spec.nodes)
    assert sorted(cache.by_name) == ["bzip2", "example", "mpich", "zlib"]


def test_two_stack_cache_has_two_z_entries():
    cache, labels = two_stack_cache()
    assert sorted(cache.by_name["z"]) == sorted([labels["Z10"], labels["Z11"]])
    assert len(cache.by_name["t"]) == 1


def test_push_idempotent(tmp_path):
    cache = BuildCache.open(tmp_path)
    spec = example_spec()
    assert cache.push(spec) == cache.push(spec)
    assert len(cache) == len(spec.nodes)
    assert cache.by_name["example"] == [spec.root]


def test_artifact_attached_later():
    cache = BuildCache()
    spec = three_deps()
    cache.push(spec)
    assert not cache.get(spec.root).installable
    cache.push(spec, b"blob")
    assert cache.get(spec.root).artifact == b"blob"


def test_hash_mismatch():
    with pytest.raises(HashMismatch):
        BuildCache().push(three_deps(), expected_hash="f" * 64)


def test_reopen_equals_index(tmp_path):
    cache = BuildCache.open(tmp_path)
    spec = example_spec()
    cache.push(spec, b"root-bytes")
    again = BuildCache.open(tmp_path)
    assert again.index_snapshot() == cache.index_snapshot()
    assert canonical_index(again) == canonical_index(cache)
    assert (tmp_path / "artifacts" / f"{spec.root}.bin").read_bytes() == b"root-bytes"


def test_index_layout(tmp_path):
    cache = BuildCache.open(tmp_path)
    spec = three_deps()
    cache.push(spec, b"x")
    doc = json.loads((tmp_path / "index.json").read_text())
    entry = doc["entries"][spec.root]
    assert set(entry) == {"spec", "artifact", "created_at", "source"}
    assert entry["artifact"] is True and entry["source"] == "built"
    assert json.loads(entry["spec"])["root"] == spec.root


def test_corrupt_index(tmp_path):
    (tmp_path / "index.json").write_text("{not json")
    with pytest.raises(CacheIOError):
        BuildCache.open(tmp_path)


def test_by_name_derivable_from_by_hash():
    cache, _ = two_stack_cache()
    derived = {}
    for h in cache:
        derived.setdefault(cache.node(h).name, []).append(h)
    assert {k: sorted(v) for k, v in derived.items()} == {k: sorted(v) for k, v in cache.by_name.items()}


def test_facts_for_example_entry():
    cache = BuildCache()
    spec = example_spec()
    cache.push(spec)
    rows = [r for r in solver_facts(cache) if r[0] == spec.root]
    attrs = {r[1] for r in rows}
    assert {"version", "variant", "node_os", "node_target", "depends_on", "hash"} <= attrs
    bzip2 = spec.find("bzip2")[0].hash
    assert (spec.root, "version", "example", "1.1.0") in rows
    assert (spec.root, "variant", "example", "bzip", True) in rows
    assert (spec.root, "depends_on", "example", "bzip2", LINK_RUN) in rows
    assert (spec.root, "hash", "bzip2", bzip2) in rows


def test_facts_empty_cache():
    assert solver_facts(BuildCache()) == []


def test_three_hash_rows():
    cache = BuildCache()
    spec = three_deps()
    cache.push(spec)
    rows = [r for r in solver_facts(cache) if r[0] == spec.root and r[1] == "hash"]
    assert len(rows) == 3


def test_facts_are_lossless():
    cache, labels = two_stack_cache()
    b = SpecBuilder()
    tool = b.add("cmake", "3.27")
    leaf = b.add("leaf", "2.0", {"shared": True, "api": "v2"}, "darwin", "arm64", [(BUILD, tool)])
    cache.push(b.build(leaf))
    rows = solver_facts(cache)
    for h in cache:
        assert spec_from_facts(rows, h) == cache.lookup_by_hash(h)


def test_facts_refresh_after_push():
    cache = BuildCache()
    assert solver_facts(cache) == []
    cache.push(three_deps())
    assert solver_facts(cache)


def test_absorb_merges_without_overwriting():
    a, b = BuildCache(), BuildCache()
    spec = three_deps()
    a.push(spec, b"first")
    b.push(spec, b"second")
    b.push(example_spec())
    view = BuildCache()
    view.absorb(a)
    view.absorb(b)
    assert view.get(spec.root).artifact == b"first"
    assert len(view) == len(set(a) | set(b))


def test_tampered_entry_is_rejected(tmp_path):
    cache = BuildCache.open(tmp_path)
    spec = three_deps()
    cache.push(spec)
    doc = json.loads((tmp_path / "index.json").read_text())
    stored = json.loads(doc["entries"][spec.root]["spec"])
    stored["nodes"][0]["version"] = "9.9"
    doc["entries"][spec.root]["spec"] = json.dumps(stored)
    (tmp_path / "index.json").write_text(json.dumps(doc))
    with pytest.raises(CacheIOError):
        BuildCache.open(tmp_path)
