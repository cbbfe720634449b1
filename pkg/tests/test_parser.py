import random

import pytest
from hypothesis import HealthCheck, given, settings

from _strategies import abstract_specs, random_abstract_spec
from splicekit.errors import ParseError
from splicekit.parser import format_spec, parse_constraint, parse_spec, tokenize
from splicekit.spec import BUILD, LINK_RUN
from splicekit.version import Version

ROUND_TRIPS = 10_000
FUZZ_INPUTS = 10_000


def test_version_clause():
    s = parse_spec("hdf5@1.14.5")
    assert s.root.name == "hdf5"
    assert s.root.version.kind == "exact-or-prefix"
    assert s.root.version.lo == Version.parse("1.14.5")
    assert s.dependencies == ()


def test_link_run_dependency():
    s = parse_spec("hdf5 ^zlib")
    assert [(d.name, k) for d, k in s.dependencies] == [("zlib", LINK_RUN)]


def test_build_dependency():
    s = parse_spec("hdf5 %cmake@3.27")
    assert [(d.name, str(d.version), k) for d, k in s.dependencies] == [("cmake", "3.27", BUILD)]


def test_listing_structure():
    s = parse_spec("example@1.0.0 +bzip arch-less ^mpich@3.1 pmi=pmix")
    assert s.root.name == "example"
    assert str(s.root.version) == "1.0.0"
    assert s.root.variant_map == {"bzip": True}
    assert s.root.os is None and s.root.target is None
    (dep, kind), = s.dependencies
    assert (dep.name, str(dep.version), dep.variant_map, kind) == ("mpich", "3.1", {"pmi": "pmix"}, LINK_RUN)


def test_arch_triple_and_labels():
    s = parse_spec("zlib arch=linux-centos8-skylake")
    assert (s.root.os, s.root.target) == ("centos8", "skylake")
    t = parse_spec("hdf5 target=icelake")
    assert (t.root.os, t.root.target) == (None, "icelake")


def test_string_and_boolean_key_values():
    s = parse_spec("hdf5 api=default shared=false")
    assert s.root.variant_map == {"api": "default", "shared": False}


@pytest.mark.parametrize("text", ["hdf5+cxx", "hdf5~mpi", "zlib@1.2:1.3 ^mpich", "a@:2+x~y k=v os=linux target=x86_64 %cmake"])
def test_canonical_fixed_points(text):
    assert format_spec(parse_spec(text)) == text


def test_format_canonicalizes():
    assert format_spec(parse_spec("hdf5   ~mpi+cxx   ^zlib")) == "hdf5+cxx~mpi ^zlib"


@pytest.mark.parametrize(
    "text,offset",
    [
        ("@oops", 0),
        ("", 0),
        ("hdf5 ^", 5),
        ("hdf5 +", 5),
        ("hdf5@1.2@1.3", 8),
        ("hdf5@1..2", 4),
        ("hdf5 x=", 7),
        ("hdf5 zlib", 5),
        ("hdf5 ^zlib ^zlib", 11),
        ("hdf5 $", 5),
    ],
)
def test_parse_errors_carry_offsets(text, offset):
    with pytest.raises(ParseError) as info:
        parse_spec(text)
    assert info.value.position == offset
    caret = info.value.caret().splitlines()
    assert caret[1].index("^") == offset


def test_oops_expects_a_name():
    with pytest.raises(ParseError) as info:
        parse_spec("@oops")
    assert "name" in info.value.expected


def test_token_positions_increase():
    toks = tokenize("example@1.0.0 +bzip ^mpich pmi=pmix %cmake")
    positions = [t.position for t in toks]
    assert positions == sorted(positions) and len(set(positions)) == len(positions)


def test_when_clause_parsing():
    c = parse_constraint("@1.1.0+bzip")
    assert c.name == "" and c.variant_map == {"bzip": True}
    with pytest.raises(ParseError):
        parse_constraint("a ^b")


def _round_trips(spec):
    text = format_spec(spec)
    assert parse_spec(text) == spec
    assert format_spec(parse_spec(text)) == text


@settings(max_examples=300, deadline=None, suppress_health_check=list(HealthCheck))
@given(abstract_specs())
def test_parse_format_round_trip_property(spec):
    _round_trips(spec)


def test_parse_format_round_trip_bulk():
    rng = random.Random(42)
    for _ in range(ROUND_TRIPS):
        _round_trips(random_abstract_spec(rng))


def _random_input(rng):
    alphabet = "abz019.-_@+~^%= :\t"
    if rng.random() < 0.5:
        return bytes(rng.randrange(256) for _ in range(rng.randrange(40))).decode("latin-1")
    return "".join(rng.choice(alphabet) for _ in range(rng.randrange(40)))


def test_fuzz_never_crashes():
    rng = random.Random(1234)
    ok = failed = 0
    for _ in range(FUZZ_INPUTS):
        text = _random_input(rng)
        try:
            parse_spec(text)
            ok += 1
        except ParseError:
            failed += 1
    assert ok + failed == FUZZ_INPUTS
    assert ok > 0 and failed > 0


def test_large_input_is_handled():
    text = "a" + " +v" * 20000
    with pytest.raises(ParseError):
        parse_spec(text)
    assert parse_spec("a" + "".join(f" +v{i}" for i in range(5000))).root.variants
