import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hookfuzz.ast_core import (
    BindingContext,
    BindingRecord,
    CallExpr,
    ClassDecl,
    FunctionDecl,
    ImportDecl,
    Kind,
    Scope,
    UnaryStmt,
    VarDecl,
    count_scopes,
    resolve,
    validate,
)
from hookfuzz.config import ConfigError, MutationConfig, parse_config
from hookfuzz.mutation import ContextIndex, Mutator, havoc, index_of, make_constant, select_mutator
from hookfuzz.reflection import BuiltinPool, RemoveOpType, apply_correction, model_from_pool
from hookfuzz.scheduler import base_context


def _mutator(pool, seed=0, cfg=None):
    return Mutator(cfg or MutationConfig(), pool, model_from_pool(pool), random.Random(seed))


def test_select_rejects_bad_tables():
    rng = random.Random(0)
    with pytest.raises(ConfigError):
        select_mutator("decl", {}, rng)
    with pytest.raises(ConfigError):
        select_mutator("decl", {"AddFunction": 1, "Call": 1}, rng)
    with pytest.raises(ValueError):
        select_mutator("other", {"AddFunction": 1}, rng)


def test_select_single_kind():
    rng = random.Random(0)
    assert {select_mutator("exec", {"UnaryOp": 5}, rng) for _ in range(50)} == {"UnaryOp"}


def test_select_follows_weights_roughly():
    rng = random.Random(3)
    counts = Counter(select_mutator("decl", {"AddFunction": 3, "AddClass": 1}, rng) for _ in range(20000))
    assert abs(counts["AddFunction"] / 20000 - 0.75) < 0.02


@given(st.integers(0, 64), st.integers(0, 2**32))
def test_havoc_length(length, seed):
    assert len(havoc(length, random.Random(seed))) == length


def test_constants():
    rng = random.Random(1)
    for variant, attr in (("Integer", "value"), ("Float", "value"), ("Boolean", "value"),
                          ("TextBuffer", "data"), ("RawBuffer", "data")):
        c = make_constant(variant, rng)
        assert hasattr(c, attr)
    with pytest.raises(ValueError):
        make_constant("Complex", rng)


def test_add_function_creates_class_first(mock_pool):
    mut = _mutator(mock_pool)
    root, ctx = Scope(), base_context(mock_pool)
    delta = mut.apply_declaration_mutation("AddFunction", root, ctx, root)
    cls = [d for d in root.declarations if isinstance(d, ClassDecl)]
    assert len(cls) == 1 and len(cls[0].methods) == 1
    assert isinstance(delta.added[0], ClassDecl) and isinstance(delta.added[1], tuple)
    assert resolve(ctx, cls[0].name).custom


def test_override_methods_come_from_pool(mock_pool):
    mut = _mutator(mock_pool, seed=5)
    root, ctx = Scope(), base_context(mock_pool)
    for _ in range(20):
        mut.apply_declaration_mutation("AddFunction", root, ctx, root)
    for cls in root.declarations:
        if not isinstance(cls, ClassDecl):
            continue
        allowed = {m for m, _ in mock_pool.overrideables.get(cls.base) or mock_pool.overrideables["*"]}
        assert {m.name for m in cls.methods} <= allowed


def test_scope_cap_blocks_add_function(mock_pool):
    cfg = parse_config("s_cap = 3\nbody_decls = 0")
    mut = _mutator(mock_pool, cfg=cfg)
    root, ctx = Scope(), base_context(mock_pool)
    for _ in range(10):
        mut.apply_declaration_mutation("AddFunction", root, ctx, root)
    assert count_scopes(root) == 3


def test_add_variable_binds_literal_type(mock_pool):
    mut = _mutator(mock_pool, seed=2)
    root, ctx = Scope(), base_context(mock_pool)
    for _ in range(30):
        mut.apply_declaration_mutation("AddVariable", root, ctx, root)
    for d in root.declarations:
        assert isinstance(d, VarDecl)
        assert resolve(ctx, d.name).type_name in mock_pool.literal_types.values()


def test_add_import_binds_members(mock_pool):
    mut = _mutator(mock_pool)
    root, ctx = Scope(), base_context(mock_pool)
    mut.apply_declaration_mutation("AddImport", root, ctx, root)
    lib = root.declarations[0].lib_name
    assert resolve(ctx, lib).kind is Kind.MODULE
    assert all(m in ctx for m in mock_pool.module_members(lib))


def test_add_import_with_empty_registry_is_noop():
    mut = _mutator(BuiltinPool())
    root = Scope()
    delta = mut.apply_declaration_mutation("AddImport", root, BindingContext(), root)
    assert delta.noop and root.declarations == []


def test_generation_skips_without_operands():
    mut = _mutator(BuiltinPool())
    kind, stmt = mut.generate_exec(BindingContext())
    assert stmt is None


def test_return_only_in_bodies(mock_pool):
    mut = _mutator(mock_pool)
    assert mut.gen_execution_stmt("Return", base_context(mock_pool)) is None
    assert mut.gen_execution_stmt("Return", base_context(mock_pool), in_body=True) is not None


def test_generation_is_deterministic(mock_pool):
    def run(seed):
        mut = _mutator(mock_pool, seed)
        root, ctx = Scope(), base_context(mock_pool)
        for k in ("AddVariable", "AddClass", "AddImport", "AddFunction", "AddVariable"):
            mut.apply_declaration_mutation(k, root, ctx, root)
        return [repr(mut.generate_exec(ctx)) for _ in range(200)]

    assert run(11) == run(11)
    assert run(11) != run(12)


def test_removed_op_type_is_never_generated(mock_pool):
    mut = _mutator(mock_pool, seed=4)
    apply_correction(mut.model, RemoveOpType("Neg", "int"))
    root, ctx = Scope(), base_context(mock_pool)
    for _ in range(20):
        mut.apply_declaration_mutation("AddVariable", root, ctx, root)
    seen = 0
    for _ in range(3000):
        stmt = mut.gen_execution_stmt("UnaryOp", ctx)
        if isinstance(stmt, UnaryStmt) and stmt.op.value == "Neg":
            seen += 1
            assert resolve(ctx, stmt.operand).type_name != "int"
    assert seen > 0


def test_argument_categories(mock_pool):
    mut = _mutator(mock_pool, seed=8)
    root, ctx = Scope(), base_context(mock_pool)
    mut.apply_declaration_mutation("AddVariable", root, ctx, root)
    counts = Counter(type(mut.source_argument(None, ctx)).__name__ for _ in range(32000))
    n = sum(counts.values())
    assert abs(counts["Name"] / n - 9 / 16) < 0.015
    assert abs(counts["CallExpr"] / n - 6 / 16) < 0.015


def test_call_depth_is_bounded(mock_pool):
    mut = _mutator(mock_pool, seed=9)
    ctx = base_context(mock_pool)

    def depth(a):
        return 1 + max((depth(x) for x in a.args), default=0) if isinstance(a, CallExpr) else 0

    assert max(depth(mut.source_argument(None, ctx)) for _ in range(3000)) <= 2


_ops = st.lists(st.tuples(st.sampled_from("abcdefgh"), st.sampled_from([None, "int", "str", "C"]),
                          st.sampled_from(list(Kind)), st.booleans(), st.booleans()), max_size=60)


@settings(max_examples=60)
@given(_ops)
def test_index_follows_context(ops):
    outer = BindingContext()
    inner = BindingContext(parent=outer)
    index_of(inner)
    for name, t, kind, layer_inner, drop in ops:
        layer = inner if layer_inner else outer
        if drop:
            layer.unbind(name)
        else:
            layer.bind(name, BindingRecord(kind, type_name=t, custom=t == "C"))
        got, fresh = index_of(inner), ContextIndex(inner)
        for table in ("variables", "functions", "classes"):
            assert set(getattr(got, table)) == set(getattr(fresh, table))
        for table in ("var_types", "by_type", "receivers"):
            a = {k: set(v) for k, v in getattr(got, table).items()}
            b = {k: set(v) for k, v in getattr(fresh, table).items()}
            assert a == b


def test_method_bodies_only_see_captures(mock_pool):
    mut = _mutator(mock_pool, seed=13)
    root, ctx = Scope(), base_context(mock_pool)
    for _ in range(4):
        mut.apply_declaration_mutation("AddVariable", root, ctx, root)
    for _ in range(10):
        mut.apply_declaration_mutation("AddFunction", root, ctx, root)
    fns = [m for c in root.declarations if isinstance(c, ClassDecl) for m in c.methods]
    assert fns
    for fn in fns:
        assert isinstance(fn, FunctionDecl)
        assert set(fn.body.global_ref) <= set(ctx.names())
        assert not any(isinstance(d, ImportDecl) and d.lib_name not in mock_pool.modules
                       for d in fn.body.declarations)
    validate(root, builtins=list(mock_pool.globals), import_members=mock_pool.module_members)
