"""
Language-agnostic program tree shared by the mutators, the serializers and
the scheduler.

A program is a root `Scope` holding three lists: the outer identifiers the
scope captures (`global_ref`), its declaration statements and its execution
statements. Function bodies are nested `Scope` nodes. `BindingContext` is the
symbol table both mutation phases read and write; contexts chain to a parent
so function bodies see their captures without copying them.
"""

from __future__ import annotations

import enum
import json
import keyword
import re
from dataclasses import dataclass, field, fields
from typing import Iterator, Optional, Union

IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")

LUA_KEYWORDS = frozenset(
    "and break do else elseif end false for function goto if in local nil not "
    "or repeat return then true until while".split()
)
RESERVED_WORDS = frozenset(keyword.kwlist) | LUA_KEYWORDS

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1


def is_identifier(name: str) -> bool:
    return bool(IDENT_RE.match(name)) and name not in RESERVED_WORDS


class BinaryOperator(enum.Enum):
    Add = "Add"
    Sub = "Sub"
    Mul = "Mul"
    Div = "Div"
    Mod = "Mod"
    Pow = "Pow"
    Eq = "Eq"
    NotEq = "NotEq"
    Lt = "Lt"
    Gt = "Gt"
    LtE = "LtE"
    GtE = "GtE"
    BitAnd = "BitAnd"
    BitOr = "BitOr"
    BitXor = "BitXor"
    LShift = "LShift"
    RShift = "RShift"


class UnaryOperator(enum.Enum):
    Neg = "Neg"
    Not = "Not"
    BitNot = "BitNot"


# --- constants ---------------------------------------------------------------


@dataclass(frozen=True)
class IntConst:
    value: int

    def __post_init__(self):
        if not INT64_MIN <= self.value <= INT64_MAX:
            raise ValueError(f"integer constant out of 64-bit range: {self.value}")


@dataclass(frozen=True)
class FloatConst:
    value: float


@dataclass(frozen=True)
class BoolConst:
    value: bool


@dataclass(frozen=True)
class TextConst:
    """Byte sequence rendered as a string literal."""

    data: bytes

    @property
    def length(self) -> int:
        return len(self.data)


@dataclass(frozen=True)
class RawConst:
    """Byte sequence rendered as a bytes/buffer literal."""

    data: bytes

    @property
    def length(self) -> int:
        return len(self.data)


Constant = Union[IntConst, FloatConst, BoolConst, TextConst, RawConst]
CONSTANT_TYPES = (IntConst, FloatConst, BoolConst, TextConst, RawConst)


# --- object references ---------------------------------------------------------


@dataclass(frozen=True)
class Name:
    id: str


@dataclass
class CallExpr:
    """`callee(args)`, or `receiver.callee(args)` when a receiver is given.

    `bound` marks a method call on an instance value; targets with an explicit
    self-passing syntax use it to pick the call form.
    """

    callee: str
    args: list = field(default_factory=list)
    receiver: Optional[str] = None
    bound: bool = False


ObjectRef = Union[Name, CallExpr]
Arg = Union[Name, CallExpr, IntConst, FloatConst, BoolConst, TextConst, RawConst]


# --- declarations ----------------------------------------------------------------


@dataclass
class FunctionDecl:
    name: str
    args: list[str]
    body: "Scope"


@dataclass
class ClassDecl:
    name: str
    base: str
    nested: list["ClassDecl"] = field(default_factory=list)
    methods: list[FunctionDecl] = field(default_factory=list)


@dataclass
class VarDecl:
    name: str
    value: Constant


@dataclass
class ImportDecl:
    lib_name: str


DeclarationStmt = Union[FunctionDecl, ClassDecl, VarDecl, ImportDecl]


# --- executions ------------------------------------------------------------------


@dataclass
class GetProp:
    dst: str
    obj: str
    attr: ObjectRef


@dataclass
class SetProp:
    obj: str
    value: Arg
    attr: ObjectRef


@dataclass
class CallStmt:
    callee: str
    args: list = field(default_factory=list)
    dst: Optional[str] = None
    receiver: Optional[str] = None
    bound: bool = False
    # expected type per argument position when the call was generated;
    # bookkeeping only, never serialized
    hints: list = field(default_factory=list, compare=False, repr=False)


@dataclass
class ReturnStmt:
    value: Optional[ObjectRef] = None


@dataclass
class BinaryStmt:
    dst: str
    lhs: str
    op: BinaryOperator
    rhs: str


@dataclass
class UnaryStmt:
    dst: str
    op: UnaryOperator
    operand: str


@dataclass
class NewInstanceStmt:
    dst: str
    class_name: str
    args: list = field(default_factory=list)


@dataclass
class GetItemStmt:
    dst: str
    obj: str
    idx: Arg


@dataclass
class SetItemStmt:
    obj: str
    idx: Arg
    value: Arg


ExecutionStmt = Union[
    GetProp,
    SetProp,
    CallStmt,
    ReturnStmt,
    BinaryStmt,
    UnaryStmt,
    NewInstanceStmt,
    GetItemStmt,
    SetItemStmt,
]
EXECUTION_TYPES = (
    GetProp,
    SetProp,
    CallStmt,
    ReturnStmt,
    BinaryStmt,
    UnaryStmt,
    NewInstanceStmt,
    GetItemStmt,
    SetItemStmt,
)


@dataclass
class Scope:
    global_ref: list[str] = field(default_factory=list)
    declarations: list = field(default_factory=list)
    executions: list = field(default_factory=list)


# --- binding context ---------------------------------------------------------------


class Kind(str, enum.Enum):
    CLASS = "class"
    FUNCTION = "function"
    VARIABLE = "variable"
    MODULE = "module"


@dataclass
class Signature:
    params: list = field(default_factory=list)
    min_arity: int = 0
    max_arity: int = 0

    def __post_init__(self):
        if not 0 <= self.min_arity <= self.max_arity:
            raise ValueError(f"bad arity range {self.min_arity}..{self.max_arity}")
        if len(self.params) != self.max_arity:
            raise ValueError("params length must equal max_arity")

    @classmethod
    def untyped(cls, min_arity: int, max_arity: int) -> "Signature":
        return cls([None] * max_arity, min_arity, max_arity)


@dataclass
class BindingRecord:
    kind: Kind
    type_name: Optional[str] = None
    signature: Optional[Signature] = None
    # (owner, name) key into the context model's signature table
    key: Optional[tuple] = None
    custom: bool = False


class BindingContext:
    """Identifier -> BindingRecord, layered over an optional parent.

    Iteration order is insertion order (parents first), which keeps every
    random choice over the context reproducible for a fixed seed.
    """

    def __init__(self, parent: Optional["BindingContext"] = None):
        self.parent = parent
        self.records: dict[str, BindingRecord] = {}
        # every name ever (re)bound or unbound here, in order; version == len(log)
        self.log: list[str] = []
        self._view = None

    @property
    def version(self) -> int:
        return len(self.log)

    def bind(self, name: str, record: BindingRecord) -> None:
        self.records[name] = record
        self.log.append(name)

    def unbind(self, name: str) -> None:
        if self.records.pop(name, None) is not None:
            self.log.append(name)

    def chain(self) -> list["BindingContext"]:
        out, ctx = [], self
        while ctx is not None:
            out.append(ctx)
            ctx = ctx.parent
        return out

    def stamp(self) -> tuple:
        """Changes whenever any layer of the chain is rebound."""
        out, ctx = [], self
        while ctx is not None:
            out.append((id(ctx), ctx.version))
            ctx = ctx.parent
        return tuple(out)

    def view(self) -> dict[str, BindingRecord]:
        """Merged name -> record mapping, cached until the chain changes."""
        stamp = self.stamp()
        if self._view is None or self._view[0] != stamp:
            merged = dict(self.parent.view()) if self.parent is not None else {}
            merged.update(self.records)
            self._view = (stamp, merged)
        return self._view[1]

    def local_names(self) -> list[str]:
        return list(self.records)

    def names(self) -> list[str]:
        return list(self.view())

    def items(self) -> Iterator[tuple[str, BindingRecord]]:
        return iter(list(self.view().items()))

    def __contains__(self, name: str) -> bool:
        return resolve(self, name) is not None

    def snapshot(self) -> "BindingContext":
        """Independent copy of every layer.

        Records are shared: they are treated as immutable once bound, and
        updates go through `bind` with a fresh record.
        """
        parent = self.parent.snapshot() if self.parent is not None else None
        out = BindingContext(parent)
        out.records = dict(self.records)
        return out

    def __len__(self) -> int:
        return len(self.view())


def resolve(ctx: BindingContext, name: str) -> Optional[BindingRecord]:
    """Look `name` up through the context chain; absence is `None`."""
    while ctx is not None:
        rec = ctx.records.get(name)
        if rec is not None:
            return rec
        ctx = ctx.parent
    return None


class NameGenerator:
    """Session-wide `prefix + counter` identifiers.

    The counter is shared by every prefix, so two names from one generator are
    never equal. Names already present in `taken` (or reserved words) are
    skipped over.
    """

    def __init__(self, start: int = 0):
        self.counter = start
        self.taken: set[str] = set()

    def fresh(self, prefix: str, ctx: Optional[BindingContext] = None) -> str:
        if not prefix or not (prefix[0].isalpha() or prefix[0] == "_"):
            raise ValueError(f"invalid identifier prefix {prefix!r}")
        while True:
            name = f"{prefix}{self.counter}"
            self.counter += 1
            if name in self.taken or name in RESERVED_WORDS:
                continue
            if ctx is not None and name in ctx:
                continue
            self.taken.add(name)
            return name


def fresh_identifier(prefix: str, names: NameGenerator, ctx: Optional[BindingContext] = None) -> str:
    return names.fresh(prefix, ctx)


# --- tree utilities ------------------------------------------------------------------


def iter_function_decls(scope: Scope) -> Iterator[FunctionDecl]:
    """Every FunctionDecl reachable from `scope`, depth first."""
    for decl in scope.declarations:
        if isinstance(decl, FunctionDecl):
            yield decl
            yield from iter_function_decls(decl.body)
        elif isinstance(decl, ClassDecl):
            yield from _class_functions(decl)


def _class_functions(cls: ClassDecl) -> Iterator[FunctionDecl]:
    for m in cls.methods:
        yield m
        yield from iter_function_decls(m.body)
    for inner in cls.nested:
        yield from _class_functions(inner)


def iter_class_decls(scope: Scope) -> Iterator[ClassDecl]:
    for decl in scope.declarations:
        if isinstance(decl, ClassDecl):
            yield from _walk_class(decl)
        elif isinstance(decl, FunctionDecl):
            yield from iter_class_decls(decl.body)


def _walk_class(cls: ClassDecl) -> Iterator[ClassDecl]:
    yield cls
    for m in cls.methods:
        yield from iter_class_decls(m.body)
    for inner in cls.nested:
        yield from _walk_class(inner)


def clone_scope(scope: Scope) -> Scope:
    """Copy the mutable tree structure; statements and constants are shared.

    Execution statements and variable/import declarations are never edited
    after they are appended, so sharing them keeps snapshots cheap.
    """
    return Scope(list(scope.global_ref), [_clone_decl(d) for d in scope.declarations], list(scope.executions))


def _clone_decl(d):
    if isinstance(d, ClassDecl):
        return ClassDecl(d.name, d.base, [_clone_decl(n) for n in d.nested], [_clone_decl(m) for m in d.methods])
    if isinstance(d, FunctionDecl):
        return FunctionDecl(d.name, list(d.args), clone_scope(d.body))
    return d


def count_scopes(root: Scope) -> int:
    return 1 + sum(1 for _ in iter_function_decls(root))


def collect_global_refs(inner: Scope, outer_ctx: Optional[BindingContext], rng, limit: int = 6,
                        exclude: tuple = ()) -> list[str]:
    """Sample the outer identifiers a new function body may touch.

    The sample is stored into `inner.global_ref`; the body generator then sees
    only these names from the enclosing scopes, which makes the capture list
    complete by construction.
    """
    if outer_ctx is None:
        inner.global_ref = []
        return []
    pool = [n for n in outer_ctx.names() if n not in exclude]
    if not pool:
        inner.global_ref = []
        return []
    k = rng.randint(0, min(limit, len(pool)))
    picked = set(rng.sample(pool, k))
    refs = [n for n in pool if n in picked]
    inner.global_ref = refs
    return refs


# --- validation ------------------------------------------------------------------------


class MalformedTree(ValueError):
    pass


def arg_names(arg) -> list[str]:
    """Identifiers referenced by an argument expression."""
    if isinstance(arg, Name):
        return [arg.id]
    if isinstance(arg, CallExpr):
        out = [arg.receiver] if arg.receiver else [arg.callee]
        for a in arg.args:
            out.extend(arg_names(a))
        return out
    return []


def stmt_reads(stmt) -> list[str]:
    """Identifiers a statement reads (destinations excluded)."""
    if isinstance(stmt, GetProp):
        return [stmt.obj]
    if isinstance(stmt, SetProp):
        return [stmt.obj] + arg_names(stmt.value)
    if isinstance(stmt, CallStmt):
        out = [stmt.receiver] if stmt.receiver else [stmt.callee]
        for a in stmt.args:
            out.extend(arg_names(a))
        return out
    if isinstance(stmt, ReturnStmt):
        return arg_names(stmt.value) if stmt.value is not None else []
    if isinstance(stmt, BinaryStmt):
        return [stmt.lhs, stmt.rhs]
    if isinstance(stmt, UnaryStmt):
        return [stmt.operand]
    if isinstance(stmt, NewInstanceStmt):
        out = [stmt.class_name]
        for a in stmt.args:
            out.extend(arg_names(a))
        return out
    if isinstance(stmt, GetItemStmt):
        return [stmt.obj] + arg_names(stmt.idx)
    if isinstance(stmt, SetItemStmt):
        return [stmt.obj] + arg_names(stmt.idx) + arg_names(stmt.value)
    raise TypeError(f"not an execution statement: {stmt!r}")


def stmt_dst(stmt) -> Optional[str]:
    return getattr(stmt, "dst", None)


def declared_names(scope: Scope, import_members=None) -> list[str]:
    out = []
    for decl in scope.declarations:
        if isinstance(decl, (ClassDecl, VarDecl)):
            out.append(decl.name)
        elif isinstance(decl, FunctionDecl):
            out.append(decl.name)
        elif isinstance(decl, ImportDecl):
            out.append(decl.lib_name)
            if import_members is not None:
                out.extend(import_members(decl.lib_name))
    for stmt in scope.executions:
        d = stmt_dst(stmt)
        if d:
            out.append(d)
    return out


def validate(root: Scope, builtins=(), import_members=None) -> None:
    """Raise MalformedTree unless `root` is well formed.

    Checks operand resolution, ReturnStmt placement and the capture-subset
    rule for every nested scope. `import_members(lib)` supplies the names an
    import brings in; `builtins` are names visible at the root.
    """
    if any(isinstance(s, ReturnStmt) for s in root.executions):
        raise MalformedTree("return statement at root scope")
    if root.global_ref:
        raise MalformedTree("root scope cannot capture outer names")
    visible = set(builtins) | set(declared_names(root, import_members))
    _check_scope(root, visible, visible, import_members, is_body=False)


def _check_scope(scope: Scope, enclosing: set, visible: set, import_members, is_body: bool, args=()):
    for i, stmt in enumerate(scope.executions):
        if isinstance(stmt, ReturnStmt):
            if not is_body or i != len(scope.executions) - 1:
                raise MalformedTree("return statement must end a function body")
        for n in stmt_reads(stmt):
            if n not in visible:
                raise MalformedTree(f"unresolved identifier {n!r}")
    for decl in scope.declarations:
        if isinstance(decl, ClassDecl):
            _check_class(decl, visible, import_members)
        elif isinstance(decl, FunctionDecl):
            _check_function(decl, visible, import_members)


def _check_class(cls: ClassDecl, visible: set, import_members):
    for m in cls.methods:
        _check_function(m, visible, import_members)
    for inner in cls.nested:
        _check_class(inner, visible, import_members)


def _check_function(fn: FunctionDecl, enclosing: set, import_members):
    body = fn.body
    missing = [n for n in body.global_ref if n not in enclosing]
    if missing:
        raise MalformedTree(f"{fn.name}: captures {missing} not bound in enclosing scopes")
    local = set(fn.args) | set(declared_names(body, import_members))
    visible = local | set(body.global_ref)
    _check_scope(body, enclosing, visible, import_members, is_body=True)


# --- canonical tree text --------------------------------------------------------------


def _const_json(c) -> dict:
    if isinstance(c, IntConst):
        return {"Integer": c.value}
    if isinstance(c, FloatConst):
        return {"Float": repr(c.value)}
    if isinstance(c, BoolConst):
        return {"Boolean": c.value}
    if isinstance(c, TextConst):
        return {"TextBuffer": c.data.hex(), "length": c.length}
    if isinstance(c, RawConst):
        return {"RawBuffer": c.data.hex(), "length": c.length}
    raise TypeError(c)


def _const_from_json(d: dict):
    if "Integer" in d:
        return IntConst(d["Integer"])
    if "Float" in d:
        return FloatConst(float(d["Float"]))
    if "Boolean" in d:
        return BoolConst(d["Boolean"])
    if "TextBuffer" in d:
        return TextConst(bytes.fromhex(d["TextBuffer"]))
    if "RawBuffer" in d:
        return RawConst(bytes.fromhex(d["RawBuffer"]))
    raise ValueError(f"unknown constant {d}")


def _arg_json(a):
    if a is None:
        return None
    if isinstance(a, Name):
        return {"Ident": a.id}
    if isinstance(a, CallExpr):
        return {"Call": a.callee, "args": [_arg_json(x) for x in a.args],
                "receiver": a.receiver, "bound": a.bound}
    return _const_json(a)


def _arg_from_json(d):
    if d is None:
        return None
    if "Ident" in d:
        return Name(d["Ident"])
    if "Call" in d:
        return CallExpr(d["Call"], [_arg_from_json(x) for x in d["args"]], d["receiver"], d["bound"])
    return _const_from_json(d)


_EXEC_BY_NAME = {cls.__name__: cls for cls in EXECUTION_TYPES}


def _stmt_fields(stmt) -> dict:
    out = {}
    for f in fields(stmt):
        if f.name == "hints":
            continue
        v = getattr(stmt, f.name)
        if isinstance(v, enum.Enum):
            v = v.value
        elif isinstance(v, list):
            v = [_arg_json(x) for x in v]
        elif f.name in ("attr", "value", "idx"):
            v = _arg_json(v)
        out[f.name] = v
    return out


def dump_tree(root: Scope) -> str:
    """Deterministic one-node-per-line rendering, depth prefixed."""
    lines: list[str] = []

    def emit(depth, kind, payload):
        lines.append(f"{depth} {kind} {json.dumps(payload, sort_keys=True, separators=(',', ':'))}")

    def scope(s: Scope, depth):
        emit(depth, "Scope", {"globalRef": s.global_ref})
        for d in s.declarations:
            decl(d, depth + 1)
        for e in s.executions:
            emit(depth + 1, type(e).__name__, _stmt_fields(e))

    def decl(d, depth):
        if isinstance(d, FunctionDecl):
            emit(depth, "FunctionDecl", {"name": d.name, "args": d.args})
            scope(d.body, depth + 1)
        elif isinstance(d, ClassDecl):
            emit(depth, "ClassDecl", {"name": d.name, "base": d.base})
            for inner in d.nested:
                decl(inner, depth + 1)
            for m in d.methods:
                decl(m, depth + 1)
        elif isinstance(d, VarDecl):
            emit(depth, "VarDecl", {"name": d.name, "value": _const_json(d.value)})
        elif isinstance(d, ImportDecl):
            emit(depth, "ImportDecl", {"lib_name": d.lib_name})
        else:
            raise TypeError(d)

    scope(root, 0)
    return "\n".join(lines) + "\n"


def load_tree(text: str) -> Scope:
    """Inverse of `dump_tree`."""
    parsed = []
    for raw in text.splitlines():
        if not raw.strip():
            continue
        depth, kind, payload = raw.split(" ", 2)
        parsed.append((int(depth), kind, json.loads(payload)))
    if not parsed or parsed[0][:2] != (0, "Scope"):
        raise ValueError("tree text must start with a depth-0 Scope")
    pos = 0

    def take_scope(depth) -> Scope:
        nonlocal pos
        d, kind, p = parsed[pos]
        assert d == depth and kind == "Scope", (d, kind)
        pos += 1
        s = Scope(global_ref=list(p["globalRef"]))
        while pos < len(parsed) and parsed[pos][0] == depth + 1:
            node = take_node(depth + 1)
            if isinstance(node, EXECUTION_TYPES):
                s.executions.append(node)
            else:
                s.declarations.append(node)
        return s

    def take_node(depth):
        nonlocal pos
        d, kind, p = parsed[pos]
        if kind == "FunctionDecl":
            pos += 1
            return FunctionDecl(p["name"], list(p["args"]), take_scope(depth + 1))
        if kind == "ClassDecl":
            pos += 1
            cls = ClassDecl(p["name"], p["base"])
            while pos < len(parsed) and parsed[pos][0] == depth + 1:
                child = take_node(depth + 1)
                if isinstance(child, ClassDecl):
                    cls.nested.append(child)
                else:
                    cls.methods.append(child)
            return cls
        pos += 1
        if kind == "VarDecl":
            return VarDecl(p["name"], _const_from_json(p["value"]))
        if kind == "ImportDecl":
            return ImportDecl(p["lib_name"])
        cls = _EXEC_BY_NAME[kind]
        kwargs = {}
        for f in fields(cls):
            if f.name not in p:
                continue
            v = p[f.name]
            if f.name == "op":
                v = BinaryOperator(v) if cls is BinaryStmt else UnaryOperator(v)
            elif f.name == "args":
                v = [_arg_from_json(x) for x in v]
            elif f.name in ("attr", "value", "idx"):
                v = _arg_from_json(v)
            kwargs[f.name] = v
        return cls(**kwargs)

    root = take_scope(0)
    if pos != len(parsed):
        raise ValueError("trailing nodes after root scope")
    return root
