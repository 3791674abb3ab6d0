"""Campaign configuration: mutator weights, thresholds, probabilities, budgets."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path


class ConfigError(ValueError):
    pass


DECL_KINDS = ("AddFunction", "AddVariable", "AddClass", "AddImport")
EXEC_KINDS = (
    "GetItem",
    "SetItem",
    "Call",
    "SetProp",
    "GetProp",
    "NewInstance",
    "BinaryOp",
    "Return",
    "UnaryOp",
)

DEFAULT_W_DECL = {"AddFunction": 30, "AddVariable": 20, "AddClass": 12, "AddImport": 6}
DEFAULT_W_EXEC = {
    "GetItem": 15,
    "SetItem": 15,
    "Call": 14,
    "SetProp": 13,
    "GetProp": 12,
    "NewInstance": 9,
    "BinaryOp": 2,
    "Return": 2,
    "UnaryOp": 1,
}


@dataclass
class MutationConfig:
    t_floor: int = 100
    t_ceil: int = 2000
    s_cap: int = 50
    w_decl: dict = field(default_factory=lambda: dict(DEFAULT_W_DECL))
    w_exec: dict = field(default_factory=lambda: dict(DEFAULT_W_EXEC))
    w_startover: float = 0.10
    w_respectType: float = 0.80
    w_var: tuple = (9, 1, 6)
    t_line: float = 0.5  # seconds
    t_lines: float = 1.0  # seconds
    # knobs the weight tables leave open
    body_decls: int = 1
    body_stmts: int = 4
    resample_limit: int = 8
    fail_rounds: int = 5
    # nested-class weight inside a ClassDecl; zero disables generation
    w_nested_class: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for table, kinds in ((self.w_decl, DECL_KINDS), (self.w_exec, EXEC_KINDS)):
            if set(table) != set(kinds):
                raise ConfigError(f"weight table must name exactly {kinds}")
            for k, w in table.items():
                if not isinstance(w, int) or w <= 0:
                    raise ConfigError(f"weight for {k} must be a positive integer, got {w!r}")
        if len(self.w_var) != 3 or any((not isinstance(w, int)) or w <= 0 for w in self.w_var):
            raise ConfigError("w_var must be three positive integers")
        for p in ("w_startover", "w_respectType"):
            if not 0.0 <= getattr(self, p) <= 1.0:
                raise ConfigError(f"{p} must lie in [0, 1]")
        if not 0 < self.t_floor <= self.t_ceil:
            raise ConfigError("need 0 < t_floor <= t_ceil")
        if not 0 < self.t_line <= self.t_lines:
            raise ConfigError("need 0 < t_line <= t_lines")
        if self.s_cap < 1 or self.resample_limit < 1 or self.fail_rounds < 1:
            raise ConfigError("s_cap, resample_limit and fail_rounds must be >= 1")
        if self.body_decls < 0 or self.body_stmts < 0 or self.w_nested_class < 0:
            raise ConfigError("body knobs must be >= 0")

    def canonical_text(self) -> str:
        """Stable `key = value` rendering; also the on-disk format."""
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("w_decl", "w_exec"):
                for k in sorted(v):
                    out.append(f"{f.name}.{k} = {v[k]}")
            elif f.name == "w_var":
                out.append(f"w_var = ({', '.join(str(x) for x in v)})")
            elif f.name in ("t_line", "t_lines"):
                out.append(f"{f.name} = {round(v * 1000)}ms")
            else:
                out.append(f"{f.name} = {v}")
        return "\n".join(out) + "\n"

    def config_hash(self, driver_name: str) -> str:
        h = hashlib.sha256()
        h.update(self.canonical_text().encode())
        h.update(b"driver=" + driver_name.encode())
        return h.hexdigest()[:16]


_DURATION = re.compile(r"^([0-9]*\.?[0-9]+)\s*(ms|s)?$")
_PERCENT = re.compile(r"^([0-9]*\.?[0-9]+)\s*%$")


def _parse_duration(text: str) -> float:
    m = _DURATION.match(text)
    if not m:
        raise ConfigError(f"bad duration {text!r}")
    value = float(m.group(1))
    return value / 1000.0 if m.group(2) in (None, "ms") else value


def _parse_probability(text: str) -> float:
    m = _PERCENT.match(text)
    if m:
        return float(m.group(1)) / 100.0
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"bad probability {text!r}") from None


def _parse_int(key: str, text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{key}: expected integer, got {text!r}") from None


def parse_config(text: str, base: MutationConfig | None = None) -> MutationConfig:
    """Parse `key = value` lines on top of `base` (defaults if omitted).

    Keys are the parameter symbols (`t_floor`, `w_startover`, ...); weight
    entries use `w_decl.AddFunction = 30`. Durations accept `ms`/`s` suffixes
    (bare numbers are milliseconds); probabilities accept `10%` or `0.1`.
    """
    cfg = replace(base) if base is not None else MutationConfig()
    w_decl = dict(cfg.w_decl)
    w_exec = dict(cfg.w_exec)
    updates = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key.startswith("w_decl.") or key.startswith("w_exec."):
            table, name = key.split(".", 1)
            target = w_decl if table == "w_decl" else w_exec
            if name not in target:
                raise ConfigError(f"line {lineno}: unknown mutator {name!r}")
            target[name] = _parse_int(key, value)
        elif key in ("t_line", "t_lines"):
            updates[key] = _parse_duration(value)
        elif key in ("w_startover", "w_respectType"):
            updates[key] = _parse_probability(value)
        elif key == "w_var":
            parts = [p.strip() for p in value.strip("()[] ").split(",")]
            updates[key] = tuple(_parse_int(key, p) for p in parts)
        elif key in {f.name for f in fields(MutationConfig)}:
            updates[key] = _parse_int(key, value)
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    try:
        return replace(cfg, w_decl=w_decl, w_exec=w_exec, **updates)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path) -> MutationConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)
