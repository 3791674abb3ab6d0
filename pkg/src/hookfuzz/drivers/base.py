"""Driver contract, line verdicts and the engine-side guard table."""

from __future__ import annotations

import abc
from dataclasses import dataclass, field
from typing import Optional


class DriverError(RuntimeError):
    """The transport to the interpreter is broken."""


class InstrumentationFault(IndexError):
    pass


class Unsupported(ValueError):
    """A construct this target's serializer cannot lower."""


@dataclass
class LineResult:
    new_edge_ids: set = field(default_factory=set)
    error: Optional[str] = None
    timed_out: bool = False
    # the interpreter died without answering
    crashed: bool = False

    @property
    def ok(self) -> bool:
        return self.error is None and not self.timed_out and not self.crashed


class GuardTable:
    """Per-site guard slots with pc-guard semantics.

    `init_range` numbers a fresh slot range 1..N (a range whose first slot is
    already set is left alone). `record_edge` counts a slot the first time it
    fires and zeroes it so later firings count nothing.
    """

    def __init__(self, size: int = 0):
        self.guards = [0] * size
        self.next_id = 0
        self.new_edge_count = 0

    def init_range(self, start: int, stop: int) -> None:
        if stop > len(self.guards):
            self.guards.extend([0] * (stop - len(self.guards)))
        if start == stop or self.guards[start]:
            return
        for i in range(start, stop):
            self.next_id += 1
            self.guards[i] = self.next_id

    def record_edge(self, index: int) -> bool:
        if not 0 <= index < len(self.guards):
            raise InstrumentationFault(f"guard index {index} outside 0..{len(self.guards) - 1}")
        if not self.guards[index]:
            return False
        self.new_edge_count += 1
        self.guards[index] = 0
        return True

    def record_ids(self, ids) -> set:
        """Guard ids (1-based, as the instrumentation numbers them) -> newly counted ids."""
        return {i for i in sorted(ids) if self.record_edge(i - 1)}


class Driver(abc.ABC):
    """One target interpreter behind the serialize/execute/reflect contract.

    Subclasses implement `_execute`, which returns every guard id the line
    fired; `run_line` turns those into campaign-relative new edges through
    the guard table, which survives restarts.
    """

    name = "abstract"
    extension = "txt"

    def __init__(self, serializer, patterns, enabled_modules=None):
        self.serializer = serializer
        self.patterns = patterns
        self.enabled_modules = enabled_modules
        self.guards = GuardTable()
        self.lines_run = 0

    # lifecycle
    def start(self) -> None:
        pass

    def close(self) -> None:
        pass

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.close()

    @abc.abstractmethod
    def now(self) -> float:
        """Campaign clock in seconds."""

    @abc.abstractmethod
    def _execute(self, text: str, budget: float):
        """Run `text`; return (fired guard ids, error or None, timed_out, crashed)."""

    def run_line(self, text: str, budget: Optional[float] = None) -> LineResult:
        self.lines_run += 1
        fired, error, timed_out, crashed = self._execute(text, budget if budget is not None else 0.5)
        if timed_out or crashed:
            return LineResult(set(), error, timed_out, crashed)
        return LineResult(self.guards.record_ids(fired), error)

    @abc.abstractmethod
    def restart(self) -> None:
        """Fresh interpreter state; the guard table is kept."""

    @abc.abstractmethod
    def query_types(self, names) -> dict:
        """name -> type token for every name the interpreter can resolve."""

    def query_type(self, name: str) -> Optional[str]:
        return self.query_types([name]).get(name)

    @abc.abstractmethod
    def scan(self) -> str:
        """Built-in pool in scan text format."""

    def parse(self, text: str) -> Optional[str]:
        """Syntax error message for `text`, or None when the parser accepts it."""
        raise NotImplementedError
