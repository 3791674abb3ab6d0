"""
Active and passive reflection.

Active reflection reads runtime types back from the live interpreter and scans
its built-in types and modules for overrideable entry points. Passive
reflection turns interpreter error messages into one of four permanent
corrections on the shared `ContextModel`.
"""

from __future__ import annotations

import copy
import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

from .ast_core import BindingContext, Kind, Signature, is_identifier, resolve

log = logging.getLogger(__name__)


# --- corrections ---------------------------------------------------------------


@dataclass(frozen=True)
class RemoveOpType:
    op: str
    type_name: str


@dataclass(frozen=True)
class EvictProperty:
    type_name: str
    prop: str


@dataclass(frozen=True)
class FixParamType:
    func: str
    position: int  # 1-based, as interpreters report it
    type_name: str


@dataclass(frozen=True)
class FixArity:
    func: str
    min_arity: int
    # None: keep the stored maximum, raised to min_arity if needed
    max_arity: Optional[int]


Correction = Union[RemoveOpType, EvictProperty, FixParamType, FixArity]
CORRECTION_TYPES = (RemoveOpType, EvictProperty, FixParamType, FixArity)


class _Unrecognized:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNRECOGNIZED"

    def __bool__(self):
        return False


UNRECOGNIZED = _Unrecognized()


# --- context model ---------------------------------------------------------------


@dataclass
class ContextModel:
    """Generation constraints learned from the target.

    Operator/type compatibility is stored as the set of types removed per
    operator, so types first seen late in a session are allowed until an
    error says otherwise; `op_allowed_types` materializes the allowed sets
    over every type the model has seen.
    """

    known_types: list = field(default_factory=list)
    removed_op_types: dict = field(default_factory=dict)
    type_props: dict = field(default_factory=dict)
    func_signatures: dict = field(default_factory=dict)
    return_types: dict = field(default_factory=dict)
    # corrections keyed by function name, replayed onto later registrations
    name_fixes: dict = field(default_factory=dict)
    applied: list = field(default_factory=list)

    def note_type(self, type_name: Optional[str]) -> None:
        if type_name and type_name not in self.known_types:
            self.known_types.append(type_name)

    def allows(self, op: str, type_name: Optional[str]) -> bool:
        if type_name is None:
            return True
        return type_name not in self.removed_op_types.get(op, ())

    @property
    def op_allowed_types(self) -> dict:
        ops = sorted(set(self.removed_op_types))
        return {op: {t for t in self.known_types if self.allows(op, t)} for op in ops}

    def props(self, type_key: Optional[str]) -> list:
        if type_key is None:
            return []
        return self.type_props.get(type_key, [])

    def add_props(self, type_key: str, names) -> None:
        evicted = {c.prop for c in self.applied if isinstance(c, EvictProperty) and c.type_name == type_key}
        cur = self.type_props.setdefault(type_key, [])
        for n in names:
            if n not in cur and n not in evicted:
                cur.append(n)

    def register_signature(self, key: tuple, sig: Signature) -> Signature:
        sig = copy.deepcopy(sig)
        for c in self.name_fixes.get(key[1], ()):
            _fix_signature(sig, c)
        self.func_signatures[key] = sig
        return sig

    def signature(self, key: Optional[tuple]) -> Optional[Signature]:
        if key is None:
            return None
        return self.func_signatures.get(key)

    def dump(self) -> str:
        """Canonical text of the whole model, for equality checks."""
        lines = ["types " + ",".join(self.known_types)]
        for op in sorted(self.removed_op_types):
            lines.append(f"removed {op} " + ",".join(sorted(self.removed_op_types[op])))
        for t in sorted(self.type_props):
            lines.append(f"props {t} " + ",".join(self.type_props[t]))
        for k in sorted(self.func_signatures):
            s = self.func_signatures[k]
            lines.append(f"sig {k[0]}.{k[1]} {s.min_arity}..{s.max_arity} {s.params}")
        for k in sorted(self.return_types):
            lines.append(f"ret {k[0]}.{k[1]} {self.return_types[k]}")
        for n in sorted(self.name_fixes):
            lines.append(f"fix {n} {self.name_fixes[n]}")
        lines.append(f"applied {self.applied}")
        return "\n".join(lines)


def _fix_signature(sig: Signature, c) -> None:
    if isinstance(c, FixArity):
        lo = c.min_arity
        hi = c.max_arity if c.max_arity is not None else max(sig.max_arity, lo)
        params = list(sig.params[:hi]) + [None] * max(0, hi - len(sig.params))
        sig.params, sig.min_arity, sig.max_arity = params, lo, hi
    elif isinstance(c, FixParamType):
        idx = c.position - 1
        if idx >= sig.max_arity:
            sig.params.extend([None] * (idx + 1 - sig.max_arity))
            sig.max_arity = idx + 1
        sig.params[idx] = c.type_name


def apply_correction(model: ContextModel, c: Correction) -> ContextModel:
    """Apply `c` in place; applying the same correction twice equals once."""
    if isinstance(c, RemoveOpType):
        model.removed_op_types.setdefault(c.op, set()).add(c.type_name)
        model.note_type(c.type_name)
    elif isinstance(c, EvictProperty):
        props = model.type_props.get(c.type_name)
        if props and c.prop in props:
            props.remove(c.prop)
    elif isinstance(c, (FixParamType, FixArity)):
        fixes = model.name_fixes.setdefault(c.func, [])
        if isinstance(c, FixParamType):
            # last writer wins for one position
            fixes[:] = [f for f in fixes if not (isinstance(f, FixParamType) and f.position == c.position)]
        else:
            fixes[:] = [f for f in fixes if not isinstance(f, FixArity)]
        fixes.append(c)
        for key, sig in model.func_signatures.items():
            if key[1] == c.func:
                _fix_signature(sig, c)
    else:
        raise TypeError(f"not a correction: {c!r}")
    if c not in model.applied:
        model.applied.append(c)
    return model


# --- error patterns ----------------------------------------------------------------

UNARY_SYMBOLS = {"-": "Neg", "~": "BitNot", "not": "Not"}
BINARY_SYMBOLS = {
    "+": "Add", "-": "Sub", "*": "Mul", "/": "Div", "%": "Mod", "**": "Pow", "^": "Pow",
    "==": "Eq", "!=": "NotEq", "~=": "NotEq", "<": "Lt", ">": "Gt", "<=": "LtE", ">=": "GtE",
    "&": "BitAnd", "|": "BitOr", "<<": "LShift", ">>": "RShift",
}
_FILTERS = {"unary": UNARY_SYMBOLS, "binary": BINARY_SYMBOLS}
_PLACEHOLDER = re.compile(r"\{([\w.]+)(?:\|(\w+))?\}")


@dataclass(frozen=True)
class ErrorPattern:
    kind: str
    regex: re.Pattern
    template: dict
    # context key -> allowed values; all must hold for the pattern to apply
    guard: dict = field(default_factory=dict)


@dataclass
class ErrorPatternSet:
    patterns: list = field(default_factory=list)

    @classmethod
    def parse(cls, text: str) -> "ErrorPatternSet":
        """One entry per line: kind, regex, template[, guard], tab separated.

        The template is `field=value` pairs whose values may hold `{group}`
        placeholders for named regex groups, `{ctx.key}` for facts about the
        statement that raised, and `{group|unary}` / `{group|binary}` to map an
        operator symbol onto an operator name.
        """
        out = []
        names = {c.__name__ for c in CORRECTION_TYPES}
        for lineno, raw in enumerate(text.splitlines(), 1):
            if not raw.strip() or raw.lstrip().startswith("#"):
                continue
            cols = raw.split("\t")
            if len(cols) not in (3, 4) or cols[0] not in names:
                raise ValueError(f"pattern line {lineno}: expected KIND<TAB>REGEX<TAB>TEMPLATE[<TAB>GUARD]")
            template = dict(kv.split("=", 1) for kv in cols[2].split())
            guard = {}
            if len(cols) == 4 and cols[3].strip():
                for kv in cols[3].split():
                    k, v = kv.split("=", 1)
                    guard[k] = frozenset(v.split("|"))
            out.append(ErrorPattern(cols[0], re.compile(cols[1]), template, guard))
        return cls(out)

    @classmethod
    def load(cls, path) -> "ErrorPatternSet":
        return cls.parse(Path(path).read_text())


def _fill(value: str, groups: dict, context: dict) -> Optional[str]:
    missing = False

    def sub(m):
        nonlocal missing
        key, filt = m.group(1), m.group(2)
        if key.startswith("ctx."):
            v = context.get(key[4:])
        else:
            v = groups.get(key)
        if v is None:
            missing = True
            return ""
        if filt:
            v = _FILTERS[filt].get(v)
            if v is None:
                missing = True
                return ""
        return str(v)

    out = _PLACEHOLDER.sub(sub, value)
    return None if missing else out


def _build(kind: str, t: dict):
    if kind == "RemoveOpType":
        return RemoveOpType(t["op"], t["type"])
    if kind == "EvictProperty":
        return EvictProperty(t["type"], t["prop"])
    if kind == "FixParamType":
        return FixParamType(t["func"], int(t["pos"]), t["type"])
    if kind == "FixArity":
        hi = t.get("max", "*")
        return FixArity(t["func"], int(t["min"]), None if hi == "*" else int(hi))
    raise ValueError(kind)


def parse_error(message: str, patterns: ErrorPatternSet, context: Optional[dict] = None):
    """First matching pattern's correction, or UNRECOGNIZED.

    `context` describes the statement that raised (`kind`, `op`, `attr`,
    `obj_type`, `callee`); guarded patterns and `{ctx.*}` placeholders use it.
    """
    context = context or {}
    for p in patterns.patterns:
        if any(context.get(k) not in allowed for k, allowed in p.guard.items()):
            continue
        m = p.regex.search(message)
        if not m:
            continue
        groups = {k: v for k, v in m.groupdict().items() if v is not None}
        filled = {}
        for k, v in p.template.items():
            val = _fill(v, groups, context)
            if val is None:
                break
            filled[k] = val
        else:
            try:
                return _build(p.kind, filled)
            except (KeyError, ValueError):
                continue
    return UNRECOGNIZED


# --- built-in pool ----------------------------------------------------------------------


@dataclass
class MemberInfo:
    kind: Kind
    type_name: Optional[str] = None
    signature: Optional[Signature] = None


@dataclass
class BuiltinPool:
    """What the startup scan found.

    `overrideables` maps each base type/class to the (method, signature)
    pairs a subclass may override. `globals` are names visible at the root
    without any import; `members` lists what importing each module binds.
    """

    modules: list = field(default_factory=list)
    overrideables: dict = field(default_factory=dict)
    bases: list = field(default_factory=list)
    globals: dict = field(default_factory=dict)
    members: dict = field(default_factory=dict)
    type_props: dict = field(default_factory=dict)
    signatures: dict = field(default_factory=dict)
    # ConstantValue variant name -> runtime type token
    literal_types: dict = field(default_factory=dict)

    def module_members(self, lib: str) -> list:
        return list(self.members.get(lib, {}))

    def export(self) -> str:
        """Human-readable listing in the scan text format."""
        return format_scan(self)


_DEFAULT_ARITY = (0, 3)


def _sig_from(cols: list) -> Signature:
    if len(cols) >= 2 and int(cols[0]) >= 0:
        lo, hi = int(cols[0]), int(cols[1])
        return Signature.untyped(lo, max(lo, hi))
    return Signature.untyped(*_DEFAULT_ARITY)


def parse_scan(text: str, enabled_modules=None) -> BuiltinPool:
    """Build a pool from scan text.

    Line forms (whitespace separated)::

        literal <Variant> <type>
        base <type>
        override <base> <method> <nparams>
        global <name> <type> [<min> <max>]
        module <name>
        member <module> <name> <type> [<min> <max>]
        prop <type> <name> [<min> <max>]

    A `<min>` of -1 means the arity could not be discovered. Types named
    `function` become callables, `class` classes and `module` modules.
    """
    pool = BuiltinPool()
    enabled = set(enabled_modules) if enabled_modules is not None else None
    for raw in text.splitlines():
        cols = raw.split()
        if not cols or cols[0].startswith("#"):
            continue
        tag = cols[0]
        try:
            if tag == "literal":
                pool.literal_types[cols[1]] = cols[2]
            elif tag == "base":
                if cols[1] not in pool.bases:
                    pool.bases.append(cols[1])
            elif tag == "override":
                n = int(cols[3])
                pool.overrideables.setdefault(cols[1], []).append((cols[2], Signature.untyped(n, n)))
            elif tag == "global":
                if is_identifier(cols[1]):
                    pool.globals[cols[1]] = _member(cols[2], cols[3:])
                    if cols[2] in ("function", "class"):
                        pool.signatures[("", cols[1])] = pool.globals[cols[1]].signature
            elif tag == "module":
                if enabled is None or cols[1] in enabled:
                    if cols[1] not in pool.modules:
                        pool.modules.append(cols[1])
                        pool.members.setdefault(cols[1], {})
            elif tag == "member":
                mod, name = cols[1], cols[2]
                if (enabled is None or mod in enabled) and is_identifier(name):
                    info = _member(cols[3], cols[4:])
                    pool.members.setdefault(mod, {})[name] = info
                    if cols[3] in ("function", "class"):
                        pool.signatures[(mod, name)] = info.signature
                    pool.type_props.setdefault(mod, [])
                    if name not in pool.type_props[mod]:
                        pool.type_props[mod].append(name)
            elif tag == "prop":
                t, name = cols[1], cols[2]
                if is_identifier(name):
                    props = pool.type_props.setdefault(t, [])
                    if name not in props:
                        props.append(name)
                    if len(cols) > 3:
                        pool.signatures[(t, name)] = _sig_from(cols[3:])
            else:
                log.warning("scan: unknown line tag %r", tag)
        except (IndexError, ValueError) as exc:
            log.warning("scan: skipping malformed line %r (%s)", raw, exc)
    return pool


def _member(type_name: str, rest: list) -> MemberInfo:
    if type_name == "function":
        return MemberInfo(Kind.FUNCTION, "function", _sig_from(rest))
    if type_name == "class":
        return MemberInfo(Kind.CLASS, "class", _sig_from(rest))
    if type_name == "module":
        return MemberInfo(Kind.MODULE, None)
    return MemberInfo(Kind.VARIABLE, type_name)


def format_scan(pool: BuiltinPool) -> str:
    lines = [f"literal {k} {v}" for k, v in pool.literal_types.items()]
    lines += [f"base {b}" for b in pool.bases]
    for base, items in pool.overrideables.items():
        lines += [f"override {base} {name} {sig.max_arity}" for name, sig in items]

    def tail(info):
        s = info.signature
        return f" {s.min_arity} {s.max_arity}" if s is not None else ""

    for name, info in pool.globals.items():
        lines.append(f"global {name} {info.type_name or info.kind.value}{tail(info)}")
    for mod in pool.modules:
        lines.append(f"module {mod}")
        for name, info in pool.members.get(mod, {}).items():
            lines.append(f"member {mod} {name} {info.type_name or info.kind.value}{tail(info)}")
    for t, props in pool.type_props.items():
        if t in pool.members:
            continue
        for p in props:
            sig = pool.signatures.get((t, p))
            extra = f" {sig.min_arity} {sig.max_arity}" if sig is not None else ""
            lines.append(f"prop {t} {p}{extra}")
    return "\n".join(lines) + "\n"


def scan_builtins(driver) -> BuiltinPool:
    """Run the driver's startup scan and build the pool.

    A failed scan degrades to an empty pool with a warning.
    """
    try:
        text = driver.scan()
    except Exception as exc:  # noqa: BLE001 - any scan failure degrades
        log.warning("built-in scan failed on %s: %s", driver.name, exc)
        return BuiltinPool()
    return parse_scan(text, getattr(driver, "enabled_modules", None))


def model_from_pool(pool: BuiltinPool) -> ContextModel:
    model = ContextModel()
    for t in pool.literal_types.values():
        model.note_type(t)
    for t, props in pool.type_props.items():
        model.add_props(t, props)
    for key, sig in pool.signatures.items():
        model.register_signature(key, sig)
    return model


def readback_types(driver, ctx: BindingContext, names=None, model: Optional[ContextModel] = None) -> BindingContext:
    """Overwrite each binding's type with what the interpreter reports.

    Names the driver cannot resolve get type `None` (unknown).
    """
    names = list(ctx.names()) if names is None else list(names)
    if not names:
        return ctx
    try:
        types = driver.query_types(names)
    except Exception as exc:  # noqa: BLE001 - per-query failures are non-fatal
        log.debug("type read-back failed: %s", exc)
        types = {}
    for n in names:
        layer = ctx
        while layer is not None and n not in layer.records:
            layer = layer.parent
        if layer is None:
            continue
        rec = layer.records[n]
        t = types.get(n)
        if rec.type_name != t:
            # records are shared between snapshots, so rebind instead of mutating
            layer.bind(n, replace(rec, type_name=t))
        if model is not None:
            model.note_type(t)
    return ctx
