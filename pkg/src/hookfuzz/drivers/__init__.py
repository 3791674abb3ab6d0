"""Driver registry.

Each `data/drivers/*.driver` file describes one target: its name, transport,
the class implementing it, the error-pattern file and the modules enabled
for import.
"""

from __future__ import annotations

import importlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from ..reflection import ErrorPatternSet
from .base import Driver, DriverError, GuardTable, LineResult, Unsupported

__all__ = [
    "Driver", "DriverError", "GuardTable", "LineResult", "Unsupported", "DriverDescriptor",
    "load_patterns", "load_descriptors", "create_driver",
]

_DATA = resources.files("hookfuzz") / "data"


@dataclass
class DriverDescriptor:
    name: str
    transport: str
    factory: str
    pattern_file: str
    enabled_modules: list = field(default_factory=list)
    command: Optional[str] = None

    @classmethod
    def parse(cls, text: str) -> "DriverDescriptor":
        kv = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if line:
                k, _, v = line.partition("=")
                kv[k.strip()] = v.strip()
        try:
            transport = kv["transport"]
            if transport not in ("embedded", "subprocess"):
                raise ValueError(f"unknown transport {transport!r}")
            mods = [m.strip() for m in kv.get("enabled_modules", "").split(",") if m.strip()]
            return cls(kv["name"], transport, kv["factory"], kv["patterns"], mods, kv.get("command"))
        except KeyError as exc:
            raise ValueError(f"driver descriptor missing {exc.args[0]!r}") from None

    def patterns(self) -> ErrorPatternSet:
        return ErrorPatternSet.parse((_DATA / "patterns" / self.pattern_file).read_text())


def load_patterns(stem: str) -> ErrorPatternSet:
    return ErrorPatternSet.parse((_DATA / "patterns" / f"{stem}.txt").read_text())


def load_descriptors(extra_dirs=()) -> dict:
    out = {}
    dirs = [_DATA / "drivers"] + [Path(d) for d in extra_dirs]
    for d in dirs:
        for f in sorted(d.iterdir(), key=lambda p: p.name):
            if not f.name.endswith(".driver"):
                continue
            desc = DriverDescriptor.parse(f.read_text())
            if desc.name in out:
                raise ValueError(f"duplicate driver name {desc.name!r}")
            out[desc.name] = desc
    return out


def create_driver(name: str, **options) -> Driver:
    descs = load_descriptors()
    if name not in descs:
        raise KeyError(f"unknown target {name!r}; known: {', '.join(sorted(descs))}")
    desc = descs[name]
    mod_name, _, cls_name = desc.factory.partition(":")
    factory = getattr(importlib.import_module(mod_name), cls_name)
    if desc.command and "command" not in options:
        options["command"] = desc.command
    return factory(desc.patterns(), desc.enabled_modules, **options)
