import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hookfuzz.ast_core import (
    INT64_MAX,
    BindingContext,
    BindingRecord,
    CallStmt,
    ClassDecl,
    FunctionDecl,
    IntConst,
    Kind,
    MalformedTree,
    Name,
    NameGenerator,
    ReturnStmt,
    Scope,
    UnaryOperator,
    UnaryStmt,
    clone_scope,
    count_scopes,
    dump_tree,
    is_identifier,
    load_tree,
    resolve,
    validate,
)
from conftest import random_program


def test_int_constant_range():
    IntConst(INT64_MAX)
    with pytest.raises(ValueError):
        IntConst(INT64_MAX + 1)


def test_identifiers():
    assert is_identifier("cls12")
    assert not is_identifier("end")  # Lua keyword
    assert not is_identifier("class")
    assert not is_identifier("1x")


@given(st.lists(st.sampled_from(["v", "cls", "ah", "r", "end", "l"]), max_size=200))
def test_fresh_names_never_repeat(prefixes):
    gen = NameGenerator()
    names = [gen.fresh(p) for p in prefixes]
    assert len(set(names)) == len(names)
    assert all(is_identifier(n) for n in names)


def test_fresh_skips_bound_names():
    ctx = BindingContext()
    ctx.bind("v0", BindingRecord(Kind.VARIABLE))
    assert NameGenerator().fresh("v", ctx) == "v1"


def test_layered_lookup_and_shadowing():
    outer = BindingContext()
    outer.bind("a", BindingRecord(Kind.VARIABLE, type_name="int"))
    inner = BindingContext(parent=outer)
    inner.bind("a", BindingRecord(Kind.VARIABLE, type_name="str"))
    inner.bind("b", BindingRecord(Kind.FUNCTION))
    assert resolve(inner, "a").type_name == "str"
    assert resolve(outer, "b") is None
    assert inner.names() == ["a", "b"]
    inner.unbind("a")
    assert resolve(inner, "a").type_name == "int"


def test_view_tracks_parent_changes():
    outer = BindingContext()
    inner = BindingContext(parent=outer)
    assert len(inner) == 0
    outer.bind("x", BindingRecord(Kind.VARIABLE))
    assert "x" in inner.view()


def test_snapshot_is_independent():
    ctx = BindingContext()
    ctx.bind("a", BindingRecord(Kind.VARIABLE, type_name="int"))
    snap = ctx.snapshot()
    ctx.bind("b", BindingRecord(Kind.VARIABLE))
    ctx.unbind("a")
    assert snap.names() == ["a"]
    assert ctx.names() == ["b"]


def test_validate_rejects_unbound_and_misplaced_return():
    with pytest.raises(MalformedTree):
        validate(Scope(executions=[UnaryStmt("d", UnaryOperator.Neg, "nope")]))
    with pytest.raises(MalformedTree):
        validate(Scope(executions=[ReturnStmt()]))
    body = Scope(executions=[ReturnStmt(), CallStmt("f")], global_ref=["f"])
    root = Scope(declarations=[ClassDecl("C", "object", methods=[FunctionDecl("m", ["self"], body)])])
    with pytest.raises(MalformedTree):
        validate(root, builtins=["f"])


def test_validate_capture_subset():
    body = Scope(executions=[CallStmt("g")], global_ref=["g"])
    root = Scope(declarations=[ClassDecl("C", "object", methods=[FunctionDecl("m", ["self"], body)])])
    with pytest.raises(MalformedTree):
        validate(root)
    validate(root, builtins=["g"])


def test_count_scopes():
    fn = FunctionDecl("m", ["self"], Scope())
    root = Scope(declarations=[ClassDecl("C", "object", methods=[fn])])
    assert count_scopes(root) == 2


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32))
def test_random_trees_validate_and_round_trip(mock_pool, seed):
    root, _ = random_program(mock_pool, seed)
    validate(root, builtins=list(mock_pool.globals),
             import_members=lambda m: mock_pool.module_members(m))
    text = dump_tree(root)
    assert load_tree(text) == root
    assert dump_tree(load_tree(text)) == text
    assert clone_scope(root) == root


def test_dump_is_stable():
    root = Scope(executions=[CallStmt("f", [Name("x"), IntConst(-3)], dst="r0")])
    assert dump_tree(root) == (
        '0 Scope {"globalRef":[]}\n'
        '1 CallStmt {"args":[{"Ident":"x"},{"Integer":-3}],"bound":false,"callee":"f","dst":"r0","receiver":null}\n'
    )
