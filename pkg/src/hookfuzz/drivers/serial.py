"""Shared lowering skeleton; subclasses supply the surface syntax."""

from __future__ import annotations

from ..ast_core import (
    BinaryStmt,
    CallExpr,
    CallStmt,
    ClassDecl,
    FunctionDecl,
    GetItemStmt,
    GetProp,
    ImportDecl,
    Name,
    NewInstanceStmt,
    ReturnStmt,
    Scope,
    SetItemStmt,
    SetProp,
    UnaryStmt,
    VarDecl,
)
from .base import Unsupported


class Serializer:
    extension = "txt"
    indent_unit = "    "
    binary_ops: dict = {}
    unary_ops: dict = {}

    # --- leaves -------------------------------------------------------------

    def const(self, c) -> str:
        raise NotImplementedError

    def arg(self, a) -> str:
        if isinstance(a, Name):
            return a.id
        if isinstance(a, CallExpr):
            return self.call(a.callee, a.args, a.receiver, a.bound)
        return self.const(a)

    def call(self, callee, args, receiver=None, bound=False) -> str:
        target = f"{receiver}.{callee}" if receiver else callee
        return f"{target}({', '.join(self.arg(a) for a in args)})"

    def attr(self, a) -> str:
        if not isinstance(a, Name):
            raise Unsupported("call-valued attribute names have no surface form")
        return a.id

    def assign(self, dst: str, expr: str, in_body: bool) -> str:
        return f"{dst} = {expr}"

    # --- statements -----------------------------------------------------------

    def stmt(self, s, in_body: bool = False) -> str:
        """One execution statement as a single source line."""
        if isinstance(s, GetProp):
            return self.assign(s.dst, f"{s.obj}.{self.attr(s.attr)}", in_body)
        if isinstance(s, SetProp):
            return f"{s.obj}.{self.attr(s.attr)} = {self.arg(s.value)}"
        if isinstance(s, CallStmt):
            expr = self.call(s.callee, s.args, s.receiver, s.bound)
            return self.assign(s.dst, expr, in_body) if s.dst else expr
        if isinstance(s, ReturnStmt):
            return "return" if s.value is None else f"return {self.arg(s.value)}"
        if isinstance(s, BinaryStmt):
            op = self.binary_ops[s.op.value]
            return self.assign(s.dst, f"{s.lhs} {op} {s.rhs}", in_body)
        if isinstance(s, UnaryStmt):
            op = self.unary_ops[s.op.value]
            sep = " " if op[-1].isalpha() else ""
            return self.assign(s.dst, f"{op}{sep}{s.operand}", in_body)
        if isinstance(s, NewInstanceStmt):
            return self.assign(s.dst, self.call(s.class_name, s.args), in_body)
        if isinstance(s, GetItemStmt):
            return self.assign(s.dst, f"{s.obj}[{self.arg(s.idx)}]", in_body)
        if isinstance(s, SetItemStmt):
            return f"{s.obj}[{self.arg(s.idx)}] = {self.arg(s.value)}"
        raise Unsupported(f"no lowering for {type(s).__name__}")

    def decl(self, d, in_body: bool = False) -> list[str]:
        if isinstance(d, VarDecl):
            return [self.assign(d.name, self.const(d.value), in_body)]
        if isinstance(d, ImportDecl):
            return self.import_lines(d.lib_name, in_body)
        if isinstance(d, ClassDecl):
            return self.class_lines(d, in_body)
        if isinstance(d, FunctionDecl):
            raise Unsupported("free functions are only generated as class methods")
        raise Unsupported(f"no lowering for {type(d).__name__}")

    def scope_lines(self, scope: Scope, in_body: bool = False) -> list[str]:
        out = []
        for d in scope.declarations:
            out.extend(self.decl(d, in_body))
        for s in scope.executions:
            out.append(self.stmt(s, in_body))
        return out

    def program(self, root: Scope) -> str:
        """Whole program text: declaration block, then execution lines."""
        lines = self.scope_lines(root)
        return "\n".join(lines) + ("\n" if lines else "")

    def delta(self, delta) -> str:
        """Source block for what one declaration mutation added at the root."""
        lines = []
        new_classes = {d.name for d in delta.added if isinstance(d, ClassDecl)}
        for item in delta.added:
            if isinstance(item, tuple):
                owner, fn = item
                if owner not in new_classes:
                    lines.extend(self.method_lines(owner, fn))
            elif isinstance(item, NewInstanceStmt):
                lines.append(self.stmt(item))
            else:
                lines.extend(self.decl(item))
        return "\n".join(lines)

    def indent(self, lines, n: int = 1) -> list[str]:
        pad = self.indent_unit * n
        return [pad + ln if ln else ln for ln in lines]

    # --- target hooks -----------------------------------------------------------

    def import_lines(self, lib: str, in_body: bool) -> list[str]:
        raise NotImplementedError

    def class_lines(self, cls: ClassDecl, in_body: bool) -> list[str]:
        raise NotImplementedError

    def method_lines(self, owner: str, fn: FunctionDecl) -> list[str]:
        """A method added to an already declared root class."""
        raise NotImplementedError
