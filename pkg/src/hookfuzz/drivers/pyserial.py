"""Lowering onto Python surface syntax (dunder-style override targets)."""

from __future__ import annotations

import math

from ..ast_core import BoolConst, ClassDecl, FloatConst, FunctionDecl, IntConst, RawConst, TextConst
from .serial import Serializer

PY_BINARY = {
    "Add": "+", "Sub": "-", "Mul": "*", "Div": "/", "Mod": "%", "Pow": "**",
    "Eq": "==", "NotEq": "!=", "Lt": "<", "Gt": ">", "LtE": "<=", "GtE": ">=",
    "BitAnd": "&", "BitOr": "|", "BitXor": "^", "LShift": "<<", "RShift": ">>",
}
PY_UNARY = {"Neg": "-", "Not": "not", "BitNot": "~"}

# temporary name used while attaching a method to an existing class
METHOD_TMP = "_hf_"


class PythonSerializer(Serializer):
    extension = "py"
    binary_ops = PY_BINARY
    unary_ops = PY_UNARY

    def const(self, c) -> str:
        if isinstance(c, BoolConst):
            return "True" if c.value else "False"
        if isinstance(c, IntConst):
            return str(c.value)
        if isinstance(c, FloatConst):
            v = c.value
            if math.isnan(v):
                return "float('nan')"
            if math.isinf(v):
                return "float('inf')" if v > 0 else "float('-inf')"
            return repr(v)
        if isinstance(c, TextConst):
            return repr(c.data.decode("latin-1"))
        if isinstance(c, RawConst):
            return repr(c.data)
        raise TypeError(c)

    def import_lines(self, lib, in_body):
        return [f"{lib} = __import__({lib!r}); exec('from {lib} import *', globals())"]

    def function_lines(self, name: str, fn: FunctionDecl) -> list[str]:
        body = []
        if fn.body.global_ref:
            body.append("global " + ", ".join(fn.body.global_ref))
        body.extend(self.scope_lines(fn.body, in_body=True))
        if len(body) == (1 if fn.body.global_ref else 0):
            body.append("pass")
        return [f"def {name}({', '.join(fn.args)}):"] + self.indent(body)

    def class_lines(self, cls: ClassDecl, in_body):
        inner = []
        for n in cls.nested:
            inner.extend(self.class_lines(n, in_body))
        for m in cls.methods:
            inner.extend(self.function_lines(m.name, m))
        return [f"class {cls.name}({cls.base}):"] + self.indent(inner or ["pass"])

    def method_lines(self, owner, fn):
        tmp = METHOD_TMP + fn.name
        return self.function_lines(tmp, fn) + [f"{owner}.{fn.name} = {tmp}", f"del {tmp}"]
