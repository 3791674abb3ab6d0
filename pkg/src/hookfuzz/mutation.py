"""
Declaration and execution mutators.

Declaration mutators grow the declaration list of a scope (classes, override
methods, variables, imports). Execution mutators produce one statement at a
time from the live binding context, shaped by the constraints the reflection
layer has learned so far.
"""

from __future__ import annotations

import bisect
from itertools import islice
import logging
from dataclasses import dataclass, field
from typing import Optional

from .ast_core import (
    INT64_MAX,
    INT64_MIN,
    BinaryOperator,
    BinaryStmt,
    BindingContext,
    BindingRecord,
    BoolConst,
    CallExpr,
    CallStmt,
    ClassDecl,
    FloatConst,
    FunctionDecl,
    GetItemStmt,
    GetProp,
    ImportDecl,
    IntConst,
    Kind,
    Name,
    NameGenerator,
    NewInstanceStmt,
    RawConst,
    ReturnStmt,
    Scope,
    SetItemStmt,
    SetProp,
    Signature,
    TextConst,
    UnaryOperator,
    UnaryStmt,
    VarDecl,
    collect_global_refs,
    count_scopes,
    iter_class_decls,
    resolve,
)
from .config import DECL_KINDS, EXEC_KINDS, ConfigError, MutationConfig
from .reflection import BuiltinPool, ContextModel

log = logging.getLogger(__name__)

LITERAL_VARIANTS = ("Integer", "Float", "Boolean", "TextBuffer", "RawBuffer")
VAR_PREFIX = {
    "Integer": "int_",
    "Float": "float_",
    "Boolean": "bool_",
    "TextBuffer": "str_",
    "RawBuffer": "byte_",
}
RESULT_PREFIXES = ("ah", "r")
INSTANCE_PREFIXES = ("l", "z", "e")
ARG_NAMES = [f"arg_{c}" for c in "abcdefghijklmnop"]
MAX_CALL_DEPTH = 2
MAX_BODY_DEPTH = 4
HAVOC_MAX_LEN = 64
HAVOC_MAX_FLIPS = 8

_INT_BOUNDARIES = sorted(
    {0, 1, -1, INT64_MAX, INT64_MIN}
    | {s * (2**k + d) for k in range(1, 63) for d in (-1, 0, 1) for s in (1, -1)}
)
_FLOAT_SPECIALS = (
    0.0,
    -0.0,
    1.0,
    -1.0,
    0.5,
    1.7976931348623157e308,
    -1.7976931348623157e308,
    2.2250738585072014e-308,
    5e-324,
    -5e-324,
    9007199254740993.0,
    2.0**63,
    -(2.0**63),
)


def select_mutator(phase: str, weights: dict, rng) -> str:
    """Pick a mutator kind with probability weight/total using one draw."""
    allowed = DECL_KINDS if phase == "decl" else EXEC_KINDS if phase == "exec" else None
    if allowed is None:
        raise ValueError(f"unknown phase {phase!r}")
    if not weights:
        raise ConfigError("empty weight table")
    kinds = [k for k in allowed if k in weights]
    if len(kinds) != len(weights):
        raise ConfigError(f"weight table has kinds outside the {phase} phase")
    cum = []
    total = 0
    for k in kinds:
        w = weights[k]
        if w <= 0:
            raise ConfigError(f"non-positive weight for {k}")
        total += w
        cum.append(total)
    r = rng.random() * total
    return kinds[bisect.bisect_right(cum, r)]


def _weighted_index(weights, rng) -> int:
    total = sum(weights)
    r = rng.random() * total
    acc = 0
    for i, w in enumerate(weights):
        acc += w
        if r < acc:
            return i
    return len(weights) - 1


def havoc(length: int, rng) -> bytes:
    """`length` random bytes followed by 0-8 random single-bit flips."""
    if length < 0:
        raise ValueError("length must be >= 0")
    buf = bytearray(rng.randbytes(length)) if length else bytearray()
    flips = rng.randint(0, HAVOC_MAX_FLIPS)
    for _ in range(flips):
        if not buf:
            break
        bit = rng.randrange(length * 8)
        buf[bit >> 3] ^= 1 << (bit & 7)
    return bytes(buf)


def gen_int(rng) -> int:
    if rng.random() < 0.5:
        return rng.choice(_INT_BOUNDARIES)
    return rng.randint(INT64_MIN, INT64_MAX)


def gen_float(rng) -> float:
    if rng.random() < 0.5:
        return rng.choice(_FLOAT_SPECIALS)
    return rng.uniform(-1e6, 1e6)


def make_constant(variant: str, rng):
    if variant == "Integer":
        return IntConst(gen_int(rng))
    if variant == "Float":
        return FloatConst(gen_float(rng))
    if variant == "Boolean":
        return BoolConst(rng.random() < 0.5)
    if variant == "TextBuffer":
        return TextConst(havoc(rng.randint(0, HAVOC_MAX_LEN), rng))
    if variant == "RawBuffer":
        return RawConst(havoc(rng.randint(0, HAVOC_MAX_LEN), rng))
    raise ValueError(variant)


_CONST_VARIANT = {
    IntConst: "Integer",
    FloatConst: "Float",
    BoolConst: "Boolean",
    TextConst: "TextBuffer",
    RawConst: "RawBuffer",
}


def constant_variant(c) -> str:
    return _CONST_VARIANT[type(c)]


@dataclass
class DeclDelta:
    """What one declaration mutation added, in submission order.

    Entries are ClassDecl, VarDecl, ImportDecl, NewInstanceStmt, or a
    `(owner_class, FunctionDecl)` pair for a new method.
    """

    kind: str
    added: list = field(default_factory=list)
    noop: bool = False


def props_key(name: str, rec: BindingRecord) -> Optional[str]:
    """Key into ContextModel.type_props for the value bound to `name`."""
    if rec.kind in (Kind.MODULE, Kind.CLASS):
        return name
    return rec.type_name


def defining_layer(ctx: BindingContext, name: str) -> Optional[BindingContext]:
    layer = ctx
    while layer is not None:
        if name in layer.records:
            return layer
        layer = layer.parent
    return None


_FLAT = object()


class ContextIndex:
    """Groupings of one binding context that execution mutators draw from.

    Groups are insertion-ordered dicts used as sets, so a rebinding moves a
    name between groups without rescanning the context. The index follows
    the context incrementally through the per-layer bind logs.
    """

    def __init__(self, ctx: BindingContext):
        self.layers = [(id(c), c.version) for c in ctx.chain()]
        self.seen: dict = {}
        self.variables: dict = {}
        self.var_types: dict = {}
        self.functions: dict = {}
        self.classes: dict = {}
        self.receivers: dict = {}
        self.by_type: dict = {}
        for n, r in ctx.view().items():
            self._add(n, r)

    def _groups(self, n, r):
        if r.kind is Kind.FUNCTION:
            yield self.functions, _FLAT
        else:
            yield self.by_type, r.type_name
        if r.kind is Kind.VARIABLE:
            yield self.variables, _FLAT
            yield self.var_types, r.type_name
        elif r.kind is Kind.CLASS:
            yield self.classes, _FLAT
        pk = props_key(n, r)
        if pk is not None:
            yield self.receivers, (pk, r.kind is Kind.VARIABLE)

    def _add(self, n, r):
        self.seen[n] = r
        for table, key in self._groups(n, r):
            if key is _FLAT:
                table[n] = r
            else:
                table.setdefault(key, {})[n] = r

    def _remove(self, n):
        r = self.seen.pop(n, None)
        if r is None:
            return
        for table, key in self._groups(n, r):
            if key is _FLAT:
                table.pop(n, None)
            else:
                group = table.get(key)
                if group is not None:
                    group.pop(n, None)
                    if not group:
                        del table[key]

    def refresh(self, ctx: BindingContext) -> bool:
        """Catch up with `ctx`; False when a rebuild is needed instead."""
        chain = ctx.chain()
        if len(chain) != len(self.layers):
            return False
        changed = []
        for c, (cid, ver) in zip(chain, self.layers):
            if id(c) != cid or c.version < ver:
                return False
            changed.extend(c.log[ver:])
        if not changed:
            return True
        for n in dict.fromkeys(changed):
            r = resolve(ctx, n)
            if r is not self.seen.get(n):
                self._remove(n)
                if r is not None:
                    self._add(n, r)
        self.layers = [(id(c), c.version) for c in chain]
        return True


def index_of(ctx: BindingContext) -> ContextIndex:
    idx = getattr(ctx, "_index", None)
    if idx is None or not idx.refresh(ctx):
        idx = ContextIndex(ctx)
        ctx._index = idx
    return idx


class Mutator:
    """Generates declarations and execution statements for one session."""

    def __init__(self, cfg: MutationConfig, pool: BuiltinPool, model: ContextModel, rng,
                 names: Optional[NameGenerator] = None):
        self.cfg = cfg
        self.pool = pool
        self.model = model
        self.rng = rng
        self.names = names if names is not None else NameGenerator()

    # --- declarations ---------------------------------------------------------

    def select_decl(self) -> str:
        return select_mutator("decl", self.cfg.w_decl, self.rng)

    def select_exec(self) -> str:
        return select_mutator("exec", self.cfg.w_exec, self.rng)

    def apply_declaration_mutation(self, kind: str, scope: Scope, ctx: BindingContext,
                                   root: Optional[Scope] = None, depth: int = 0) -> DeclDelta:
        root = root if root is not None else scope
        delta = DeclDelta(kind)
        if kind == "AddClass":
            self._add_class(scope, ctx, delta)
        elif kind == "AddFunction":
            if not self._custom_classes(ctx, local_only=True):
                self._add_class(scope, ctx, delta)
            self._add_function(ctx, root, delta, depth)
        elif kind == "AddVariable":
            self._add_variable(scope, ctx, delta)
        elif kind == "AddImport":
            self._add_import(scope, ctx, delta)
        else:
            raise ValueError(f"not a declaration mutator: {kind}")
        return delta

    def _fresh(self, prefix: str, ctx: BindingContext) -> str:
        return self.names.fresh(prefix, ctx)

    def _custom_classes(self, ctx: BindingContext, local_only: bool = False) -> list:
        # methods only go on classes of the scope being mutated, so the new
        # method is serialized together with the block that declares it
        items = ctx.records.items() if local_only else ctx.items()
        return [n for n, r in items if r.kind is Kind.CLASS and r.custom]

    def _class_bases(self, ctx: BindingContext) -> list:
        bases = list(self.pool.bases)
        for n, r in ctx.items():
            if r.kind is Kind.CLASS and not r.custom and n not in bases:
                bases.append(n)
        return bases

    def _add_class(self, scope: Scope, ctx: BindingContext, delta: DeclDelta) -> Optional[ClassDecl]:
        bases = self._class_bases(ctx)
        if not bases:
            delta.noop = True
            return None
        base = self.rng.choice(bases)
        name = self._fresh("cls", ctx)
        cls = ClassDecl(name, base)
        if self.cfg.w_nested_class > 0 and self.rng.random() < self.cfg.w_nested_class / 100:
            inner = ClassDecl(self._fresh("cls", ctx), base)
            cls.nested.append(inner)
        scope.declarations.append(cls)
        ctx.bind(name, BindingRecord(Kind.CLASS, custom=True, key=(name, "__call__")))
        self.model.add_props(name, self.model.props(base))
        ctor = self.model.signature(("", base)) or Signature.untyped(0, 1)
        self.model.register_signature((name, "__call__"), ctor)
        delta.added.append(cls)
        return cls

    def _overrideables(self, base: str, root: Scope) -> list:
        seen = set()
        while base not in self.pool.overrideables:
            # a custom class inherits its base's override entry points
            decl = next((c for c in iter_class_decls(root) if c.name == base), None)
            if decl is None or base in seen:
                break
            seen.add(base)
            base = decl.base
        return self.pool.overrideables.get(base) or self.pool.overrideables.get("*", [])

    def _add_function(self, ctx: BindingContext, root: Scope, delta: DeclDelta, depth: int) -> None:
        if count_scopes(root) >= self.cfg.s_cap:
            delta.noop = True
            return
        candidates = self._custom_classes(ctx, local_only=True)
        decls = {c.name: c for c in iter_class_decls(root)}
        candidates = [c for c in candidates if c in decls]
        if not candidates:
            delta.noop = True
            return
        cname = self.rng.choice(candidates)
        cls = decls[cname]
        entries = self._overrideables(cls.base, root)
        if not entries:
            delta.noop = True
            return
        mname, sig = self.rng.choice(entries)
        nargs = max(1, sig.max_arity)
        args = ARG_NAMES[:nargs]
        fn = FunctionDecl(mname, list(args), Scope())
        cls.methods.append(fn)
        self.model.add_props(cname, [mname])
        self.model.register_signature((cname, mname), Signature.untyped(0, nargs - 1))
        delta.added.append((cname, fn))

        outer = defining_layer(ctx, cname) or ctx
        refs = collect_global_refs(fn.body, outer, self.rng, exclude=tuple(args))
        capture = BindingContext()
        for n in refs:
            capture.bind(n, resolve(outer, n))
        local = BindingContext(parent=capture)
        for i, a in enumerate(args):
            local.bind(a, BindingRecord(Kind.VARIABLE, type_name=cname if i == 0 else None))
        self._fill_body(fn.body, local, root, depth + 1)

    def _fill_body(self, body: Scope, ctx: BindingContext, root: Scope, depth: int) -> None:
        """Declaration mutation on a new body, then execution mutation."""
        if depth <= MAX_BODY_DEPTH:
            for _ in range(self.cfg.body_decls):
                kind = self.select_decl()
                if kind == "AddFunction" and count_scopes(root) >= self.cfg.s_cap:
                    continue
                self.apply_declaration_mutation(kind, body, ctx, root, depth)
        for _ in range(self.cfg.body_stmts):
            kind, stmt = self.generate_exec(ctx, in_body=True)
            if stmt is None:
                continue
            body.executions.append(stmt)
            if isinstance(stmt, ReturnStmt):
                break

    def _add_variable(self, scope: Scope, ctx: BindingContext, delta: DeclDelta) -> None:
        options = list(LITERAL_VARIANTS)
        classes = self._custom_classes(ctx)
        if classes:
            options.append("instance")
        choice = self.rng.choice(options)
        if choice == "instance":
            stmt = self.gen_execution_stmt("NewInstance", ctx)
            if stmt is None:
                delta.noop = True
                return
            scope.executions.append(stmt)
            delta.added.append(stmt)
            return
        value = make_constant(choice, self.rng)
        name = self._fresh(VAR_PREFIX[choice], ctx)
        scope.declarations.append(VarDecl(name, value))
        ctx.bind(name, BindingRecord(Kind.VARIABLE, type_name=self.pool.literal_types.get(choice)))
        delta.added.append(scope.declarations[-1])

    def _add_import(self, scope: Scope, ctx: BindingContext, delta: DeclDelta) -> None:
        if not self.pool.modules:
            delta.noop = True
            log.info("AddImport: module registry is empty")
            return
        lib = self.rng.choice(self.pool.modules)
        decl = ImportDecl(lib)
        scope.declarations.append(decl)
        ctx.bind(lib, BindingRecord(Kind.MODULE))
        for name, info in self.pool.members.get(lib, {}).items():
            rec = BindingRecord(info.kind, type_name=info.type_name, key=(lib, name))
            if info.kind is Kind.FUNCTION:
                rec.signature = self.model.signature((lib, name))
            ctx.bind(name, rec)
        delta.added.append(decl)

    # --- executions -------------------------------------------------------------

    def generate_exec(self, ctx: BindingContext, in_body: bool = False):
        """Select a kind and build a statement, resampling non-viable kinds.

        Returns `(kind, stmt)`; `stmt` is None (a generation skip) after
        `resample_limit` non-viable draws.
        """
        kind = None
        for _ in range(self.cfg.resample_limit):
            kind = self.select_exec()
            stmt = self.gen_execution_stmt(kind, ctx, in_body=in_body)
            if stmt is not None:
                return kind, stmt
        return kind, None

    def _variables(self, ctx):
        return list(index_of(ctx).variables.items())

    def _pick_grouped(self, groups):
        """Uniform pick over the union of disjoint name groups."""
        total = sum(len(g) for g in groups)
        if not total:
            return None
        i = self.rng.randrange(total)
        for g in groups:
            if i < len(g):
                return next(islice(g, i, None))
            i -= len(g)
        raise AssertionError("unreachable")

    def _typed_groups(self, op, ctx):
        """Variable groups whose type admits `op`."""
        return [g for t, g in index_of(ctx).var_types.items() if self.model.allows(op, t)]

    def _indexables(self, ctx, op):
        return [g for t, g in index_of(ctx).by_type.items() if self.model.allows(op, t)]

    def _callables(self, ctx, want=None):
        """Callable candidates as `(plain, groups)`.

        `plain` holds `(callee, None, key, signature, False)` for functions;
        each group is `(receivers, bound, methods)` where every receiver
        shares the method list `[(name, key, signature)]`. `want`, when
        given, filters entries by their learned return type.
        """
        idx = index_of(ctx)
        plain = []
        for n, r in idx.functions.items():
            key = r.key or ("", n)
            if want is not None and not want(self.model.return_types.get(key)):
                continue
            sig = self.model.signature(key) or r.signature or Signature.untyped(0, 2)
            plain.append((n, None, key, sig, False))
        groups = []
        for (pk, bound), names in idx.receivers.items():
            methods = []
            for p in self.model.props(pk):
                sig = self.model.signature((pk, p))
                if sig is None:
                    continue
                if want is not None and not want(self.model.return_types.get((pk, p))):
                    continue
                methods.append((p, (pk, p), sig))
            if methods:
                groups.append((names, bound, methods))
        return plain, groups

    def _pick_callable(self, cands):
        """Functions or methods (even odds), then a receiver, then a method."""
        plain, groups = cands
        if plain and groups:
            use_plain = self.rng.random() < 0.5
        else:
            use_plain = bool(plain)
        if use_plain:
            return self.rng.choice(plain)
        total = sum(len(g[0]) for g in groups)
        i = self.rng.randrange(total)
        for names, bound, methods in groups:
            if i < len(names):
                p, key, sig = self.rng.choice(methods)
                return p, next(islice(names, i, None)), key, sig, bound
            i -= len(names)
        raise AssertionError("unreachable")

    def _args_for(self, sig: Signature, ctx, depth: int):
        n = self.rng.randint(sig.min_arity, sig.max_arity)
        hints = [sig.params[i] if i < len(sig.params) else None for i in range(n)]
        return [self.source_argument(h, ctx, depth) for h in hints], hints

    def gen_execution_stmt(self, kind: str, ctx: BindingContext, in_body: bool = False):
        """One statement of `kind`, or None when no operand is viable."""
        rng = self.rng
        if kind == "Return":
            if not in_body:
                return None
            vars_ = index_of(ctx).variables
            value = Name(self._pick_grouped([vars_])) if vars_ and rng.random() < 0.8 else None
            return ReturnStmt(value)

        if kind == "BinaryOp":
            if not index_of(ctx).variables:
                return None
            for op in rng.sample(list(BinaryOperator), len(BinaryOperator)):
                ok = self._typed_groups(op.value, ctx)
                if ok:
                    lhs, rhs = self._pick_grouped(ok), self._pick_grouped(ok)
                    return self._bind_dst(BinaryStmt(self._fresh("ah", ctx), lhs, op, rhs), ctx)
            return None

        if kind == "UnaryOp":
            if not index_of(ctx).variables:
                return None
            for op in rng.sample(list(UnaryOperator), len(UnaryOperator)):
                ok = self._typed_groups(op.value, ctx)
                if ok:
                    return self._bind_dst(UnaryStmt(self._fresh("ah", ctx), op, self._pick_grouped(ok)), ctx)
            return None

        if kind in ("GetProp", "SetProp"):
            groups = [g for (pk, _), g in index_of(ctx).receivers.items() if self.model.props(pk)]
            obj = self._pick_grouped(groups)
            if obj is None:
                return None
            pk = props_key(obj, resolve(ctx, obj))
            attr = Name(rng.choice(self.model.props(pk)))
            if kind == "GetProp":
                return self._bind_dst(GetProp(self._fresh(rng.choice(RESULT_PREFIXES), ctx), obj, attr), ctx)
            return SetProp(obj, self.source_argument(None, ctx), attr)

        if kind == "GetItem":
            obj = self._pick_grouped(self._indexables(ctx, "GetItem"))
            if obj is None:
                return None
            idx = self.source_argument(None, ctx)
            return self._bind_dst(GetItemStmt(self._fresh(rng.choice(RESULT_PREFIXES), ctx), obj, idx), ctx)

        if kind == "SetItem":
            obj = self._pick_grouped(self._indexables(ctx, "SetItem"))
            if obj is None:
                return None
            idx = self.source_argument(None, ctx)
            return SetItemStmt(obj, idx, self.source_argument(None, ctx))

        if kind == "Call":
            cands = self._callables(ctx)
            if not cands[0] and not cands[1]:
                return None
            callee, recv, key, sig, bound = self._pick_callable(cands)
            args, hints = self._args_for(sig, ctx, 0)
            dst = self._fresh(rng.choice(RESULT_PREFIXES), ctx)
            stmt = CallStmt(callee, args, dst=dst, receiver=recv, bound=bound)
            stmt.hints = hints
            ctx.bind(dst, BindingRecord(Kind.VARIABLE))
            return stmt

        if kind == "NewInstance":
            classes = list(index_of(ctx).classes)
            if not classes:
                return None
            cname = rng.choice(classes)
            rec = resolve(ctx, cname)
            sig = self.model.signature(rec.key) if rec.key else None
            args, _ = self._args_for(sig or Signature.untyped(0, 1), ctx, 0)
            stmt = NewInstanceStmt(self._fresh(rng.choice(INSTANCE_PREFIXES), ctx), cname, args)
            ctx.bind(stmt.dst, BindingRecord(Kind.VARIABLE, type_name=cname if rec.custom else None))
            return stmt

        raise ValueError(f"not an execution mutator: {kind}")

    def _bind_dst(self, stmt, ctx):
        ctx.bind(stmt.dst, BindingRecord(Kind.VARIABLE))
        return stmt

    # --- arguments ------------------------------------------------------------------

    def arg_type(self, arg, ctx) -> Optional[str]:
        """Recorded type of an argument expression, if known."""
        if isinstance(arg, Name):
            rec = resolve(ctx, arg.id)
            return rec.type_name if rec else None
        if isinstance(arg, CallExpr):
            rec = resolve(ctx, arg.receiver) if arg.receiver else None
            owner = props_key(arg.receiver, rec) if rec else None
            if arg.receiver is None:
                frec = resolve(ctx, arg.callee)
                key = (frec.key if frec and frec.key else ("", arg.callee))
            else:
                key = (owner, arg.callee)
            return self.model.return_types.get(key)
        return self.pool.literal_types.get(constant_variant(arg))

    def source_argument(self, expected: Optional[str], ctx: BindingContext, depth: int = 0):
        """Pick an argument: existing binding, constant literal or call (w_var).

        With a type hint, the value's recorded type matches it with
        probability w_respectType and deliberately differs otherwise. A
        category with no fitting candidate falls back to a constant.
        """
        rng = self.rng
        category = _weighted_index(self.cfg.w_var, rng)
        respect = True if expected is None else rng.random() < self.cfg.w_respectType

        def fits(t):
            if expected is None:
                return True
            return t is not None and (t == expected) == respect

        if category == 0:
            pick = self._pick_grouped([g for t, g in index_of(ctx).var_types.items() if fits(t)])
            if pick is not None:
                return Name(pick)
        elif category == 2 and depth < MAX_CALL_DEPTH:
            cands = self._callables(ctx, None if expected is None else fits)
            if cands[0] or cands[1]:
                callee, recv, key, sig, bound = self._pick_callable(cands)
                args, _ = self._args_for(sig, ctx, depth + 1)
                return CallExpr(callee, args, receiver=recv, bound=bound)
        return self.constant_for(expected, respect)

    def constant_for(self, expected: Optional[str], respect: bool = True):
        lt = self.pool.literal_types
        variants = list(LITERAL_VARIANTS)
        if expected is not None and lt:
            matching = [v for v in variants if lt.get(v) == expected]
            other = [v for v in variants if lt.get(v) != expected]
            pick = matching if respect else other
            if pick:
                variants = pick
        return make_constant(self.rng.choice(variants), self.rng)
