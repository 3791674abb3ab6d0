"""Lowering onto Lua 5.4 (metamethod-style override target).

Classes become metatable-backed tables: the class table is the metatable of
its instances, its own metatable chains lookups to the base and makes the
class callable as a constructor.
"""

from __future__ import annotations

import math

from ..ast_core import INT64_MIN, BoolConst, ClassDecl, FloatConst, FunctionDecl, IntConst, RawConst, TextConst
from .serial import Serializer

LUA_BINARY = {
    "Add": "+", "Sub": "-", "Mul": "*", "Div": "/", "Mod": "%", "Pow": "^",
    "Eq": "==", "NotEq": "~=", "Lt": "<", "Gt": ">", "LtE": "<=", "GtE": ">=",
    "BitAnd": "&", "BitOr": "|", "BitXor": "~", "LShift": "<<", "RShift": ">>",
}
LUA_UNARY = {"Neg": "-", "Not": "not", "BitNot": "~"}

_PRINTABLE = set(range(0x20, 0x7F)) - {ord('"'), ord("\\")}


def lua_string(data: bytes) -> str:
    return '"' + "".join(chr(b) if b in _PRINTABLE else f"\\{b:03d}" for b in data) + '"'


class LuaSerializer(Serializer):
    extension = "lua"
    indent_unit = "  "
    binary_ops = LUA_BINARY
    unary_ops = LUA_UNARY

    def __init__(self, import_members=None):
        # lib -> member names, filled in from the startup scan
        self.import_members = import_members or {}

    def const(self, c) -> str:
        if isinstance(c, BoolConst):
            return "true" if c.value else "false"
        if isinstance(c, IntConst):
            # the minimum integer has no literal form: its magnitude overflows
            return "(-9223372036854775807 - 1)" if c.value == INT64_MIN else str(c.value)
        if isinstance(c, FloatConst):
            v = c.value
            if math.isnan(v):
                return "(0/0)"
            if math.isinf(v):
                return "(1/0)" if v > 0 else "(-1/0)"
            return repr(v)
        if isinstance(c, (TextConst, RawConst)):
            return lua_string(c.data)
        raise TypeError(c)

    def call(self, callee, args, receiver=None, bound=False) -> str:
        if receiver:
            target = f"{receiver}{':' if bound else '.'}{callee}"
        else:
            target = callee
        return f"{target}({', '.join(self.arg(a) for a in args)})"

    def assign(self, dst, expr, in_body):
        return f"{'local ' if in_body else ''}{dst} = {expr}"

    def import_lines(self, lib, in_body):
        members = list(self.import_members.get(lib, ()))
        if not members:
            return ["do end"]
        lhs = ", ".join(members)
        rhs = ", ".join(f"{lib}.{m}" for m in members)
        return [f"{'local ' if in_body else ''}{lhs} = {rhs}"]

    def _class_table(self, qual: str, cls: ClassDecl) -> str:
        return (
            f'setmetatable({{__name = "{cls.name}"}}, {{__index = {cls.base}, '
            f"__call = function(cls, ...) return setmetatable({{...}}, cls) end}})"
        )

    def class_lines(self, cls: ClassDecl, in_body, qual: str = None):
        qual = qual or cls.name
        head = f"{qual} = {self._class_table(qual, cls)}"
        if in_body and qual == cls.name:
            head = "local " + head
        out = [head, f"{qual}.__index = {qual}"]
        for n in cls.nested:
            out.extend(self.class_lines(n, in_body, f"{qual}.{n.name}"))
        for m in cls.methods:
            out.extend(self.method_lines(qual, m))
        return out

    def method_lines(self, owner, fn: FunctionDecl):
        body = self.scope_lines(fn.body, in_body=True)
        return [f"function {owner}.{fn.name}({', '.join(fn.args)})"] + self.indent(body) + ["end"]
