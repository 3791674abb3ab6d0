import copy

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hookfuzz.ast_core import BindingContext, BindingRecord, Kind, Signature
from hookfuzz.drivers import load_patterns
from hookfuzz.reflection import (
    UNRECOGNIZED,
    ContextModel,
    ErrorPatternSet,
    EvictProperty,
    FixArity,
    FixParamType,
    RemoveOpType,
    apply_correction,
    format_scan,
    parse_error,
    parse_scan,
    readback_types,
)

CPY = load_patterns("cpython")
LUA = load_patterns("lua")


@pytest.mark.parametrize("message, expected", [
    ("bad operand type for unary ~: 'str'", RemoveOpType("BitNot", "str")),
    ("'dict' object has no attribute 'find'", EvictProperty("dict", "find")),
    ("replace() argument 1 must be str, not None", FixParamType("replace", 1, "str")),
    ("iter() takes from 1 to 2 positional arguments but 0 were given", FixArity("iter", 1, 2)),
    ("unsupported operand type(s) for <<: 'float' and 'float'", RemoveOpType("LShift", "float")),
    ("len() takes exactly one argument (0 given)", FixArity("len", 1, 1)),
    ("'int' object is not subscriptable", RemoveOpType("GetItem", "int")),
])
def test_cpython_messages(message, expected):
    assert parse_error(message, CPY) == expected


def test_mixed_operand_types_are_not_blamed_on_one_side():
    assert parse_error("unsupported operand type(s) for +: 'int' and 'str'", CPY) is UNRECOGNIZED


@pytest.mark.parametrize("message, context, expected", [
    ("line:1: attempt to perform arithmetic on a table value", {"op": "Add"}, RemoveOpType("Add", "table")),
    ("line:1: attempt to compare two boolean values", {"op": "Lt"}, RemoveOpType("Lt", "boolean")),
    ("line:1: attempt to index a number value (global 'n1')", {"kind": "GetProp", "attr": "len"},
     EvictProperty("number", "len")),
    ("line:1: attempt to index a number value (global 'n1')", {"kind": "GetItem"},
     RemoveOpType("GetItem", "number")),
    ("line:1: bad argument #1 to 'rep' (string expected, got no value)", {}, FixArity("rep", 1, None)),
    ("line:1: bad argument #2 to 'rep' (number expected, got table)", {}, FixParamType("rep", 2, "number")),
    ("line:1: attempt to call a nil value (method 'foo')", {"obj_type": "cls3"}, EvictProperty("cls3", "foo")),
])
def test_lua_messages(message, context, expected):
    assert parse_error(message, LUA, context) == expected


def test_missing_context_means_unrecognized():
    assert parse_error("line:1: attempt to perform arithmetic on a nil value", LUA, {}) is UNRECOGNIZED


def test_pattern_order_first_match_wins():
    ps = ErrorPatternSet.parse("EvictProperty\tno (?P<p>\\w+)\ttype=a prop={p}\n"
                               "EvictProperty\tno (?P<p>\\w+)\ttype=b prop={p}\n")
    assert parse_error("no x", ps) == EvictProperty("a", "x")


def test_bad_pattern_file():
    with pytest.raises(ValueError):
        ErrorPatternSet.parse("Bogus\tx\ty=z")


def _model():
    m = ContextModel()
    m.note_type("str")
    m.add_props("dict", ["find", "get"])
    m.register_signature(("str", "replace"), Signature.untyped(2, 3))
    m.register_signature(("", "iter"), Signature.untyped(0, 4))
    return m


_corrections = st.one_of(
    st.builds(RemoveOpType, st.sampled_from(["Neg", "Add", "GetItem"]), st.sampled_from(["str", "int"])),
    st.builds(EvictProperty, st.sampled_from(["dict", "str"]), st.sampled_from(["find", "get", "x"])),
    st.builds(FixParamType, st.sampled_from(["replace", "iter"]), st.integers(1, 4), st.sampled_from(["str", "int"])),
    st.builds(FixArity, st.sampled_from(["replace", "iter"]), st.integers(0, 3),
              st.one_of(st.none(), st.integers(3, 5))),
)


@given(st.lists(_corrections, max_size=8), _corrections)
def test_apply_is_idempotent(before, c):
    once = _model()
    for x in before:
        apply_correction(once, x)
    apply_correction(once, c)
    twice = copy.deepcopy(once)
    apply_correction(twice, c)
    assert twice.dump() == once.dump()


@given(st.lists(_corrections, max_size=10))
def test_constraints_only_tighten(cs):
    m = _model()
    for c in cs:
        before = {op: set(ts) for op, ts in m.removed_op_types.items()}
        props = {t: set(p) for t, p in m.type_props.items()}
        apply_correction(m, c)
        for op, ts in before.items():
            assert ts <= m.removed_op_types[op]
        for t, p in m.type_props.items():
            assert set(p) <= props.get(t, set(p))


def test_signature_fixes():
    m = _model()
    apply_correction(m, FixArity("iter", 1, 2))
    apply_correction(m, FixParamType("replace", 1, "str"))
    assert (m.func_signatures[("", "iter")].min_arity, m.func_signatures[("", "iter")].max_arity) == (1, 2)
    assert m.func_signatures[("str", "replace")].params[0] == "str"
    # a later registration under the same name inherits the fixes
    sig = m.register_signature(("bytes", "replace"), Signature.untyped(0, 1))
    assert sig.params[0] == "str"


def test_evicted_property_stays_evicted():
    m = _model()
    apply_correction(m, EvictProperty("dict", "find"))
    m.add_props("dict", ["find", "keys"])
    assert m.props("dict") == ["get", "keys"]


def test_removed_op_type():
    m = _model()
    apply_correction(m, RemoveOpType("BitNot", "str"))
    assert not m.allows("BitNot", "str")
    assert m.allows("BitNot", "int") and m.allows("Neg", "str")
    assert "str" not in m.op_allowed_types["BitNot"]


def test_scan_round_trip(mock):
    pool = parse_scan(mock.scan(), mock.enabled_modules)
    again = parse_scan(format_scan(pool))
    assert format_scan(again) == format_scan(pool)
    assert pool.modules == ["math", "json", "datetime"]
    assert ("find", Signature.untyped(2, 2)) in pool.overrideables["str"]


def test_scan_respects_enabled_modules(mock):
    pool = parse_scan(mock.scan(), ["json"])
    assert pool.modules == ["json"] and "math" not in pool.members


def test_scan_tolerates_junk():
    pool = parse_scan("base int\nwhat is this\noverride int __add__ x\n")
    assert pool.bases == ["int"] and pool.overrideables == {}


def test_readback(mock):
    mock.run_line("v = 'a'")
    mock.run_line("n = 3")
    ctx = BindingContext()
    for n in ("v", "n", "ghost"):
        ctx.bind(n, BindingRecord(Kind.VARIABLE))
    snap = ctx.snapshot()
    readback_types(mock, ctx)
    assert [ctx.records[n].type_name for n in ("v", "n", "ghost")] == ["str", "int", None]
    # snapshots share records, so the update must not leak into them
    assert snap.records["v"].type_name is None
    mock.restart()
    readback_types(mock, ctx, ["v"])
    assert ctx.records["v"].type_name is None
