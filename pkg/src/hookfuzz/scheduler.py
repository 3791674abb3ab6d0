"""
Campaign loop: one generated line at a time, stall-triggered declaration
passes, corpus admission, fallback to saved entries and timeout recovery.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Optional

from .ast_core import (
    BindingContext,
    BindingRecord,
    ClassDecl,
    FunctionDecl,
    ImportDecl,
    Kind,
    Scope,
    VarDecl,
    clone_scope,
    count_scopes,
    resolve,
    stmt_dst,
    stmt_reads,
)
from .config import MutationConfig
from .mutation import Mutator, props_key
from .reflection import (
    UNRECOGNIZED,
    BuiltinPool,
    apply_correction,
    model_from_pool,
    parse_error,
    readback_types,
    scan_builtins,
)

log = logging.getLogger(__name__)

BLANK_ATTEMPTS = 10


class CampaignError(RuntimeError):
    """The campaign cannot continue (transport failure, unrecoverable replay)."""


def stall_threshold(n: int, cfg: Optional[MutationConfig] = None) -> int:
    """min(max(floor(log2(n + 4) * 50), t_floor), t_ceil), computed exactly.

    floor(50 * log2(m)) is the largest k with 2**k <= m**50; the float
    estimate is corrected with integer arithmetic so boundaries never round
    the wrong way.
    """
    if n < 0:
        raise ValueError("edge count must be >= 0")
    cfg = cfg or MutationConfig()
    m = n + 4
    target = m**50
    k = int(50 * math.log2(m))
    while 1 << (k + 1) <= target:
        k += 1
    while 1 << k > target:
        k -= 1
    return min(max(k, cfg.t_floor), cfg.t_ceil)


@dataclass
class CorpusEntry:
    entry_id: int
    ast_snapshot: Scope
    ctx_snapshot: BindingContext
    line_history: list
    seed: int
    discovered_edges: set
    created_at: float


@dataclass
class Event:
    kind: str
    ordinal: int
    t: float
    data: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"event": self.kind, "line": self.ordinal, "t": round(self.t, 6), **self.data}


@dataclass
class CampaignState:
    rng: random.Random
    seed: int
    root: Scope = field(default_factory=Scope)
    ctx: BindingContext = field(default_factory=BindingContext)
    history: list = field(default_factory=list)
    global_edges: set = field(default_factory=set)
    no_edge_counter: int = 0
    failed_decl_rounds: int = 0
    pass_pending: bool = False
    corpus: list = field(default_factory=list)
    blank: Optional[CorpusEntry] = None
    # (edge id, line ordinal, timestamp) in discovery order
    edge_log: list = field(default_factory=list)
    lines_executed: int = 0
    skipped_lines: int = 0
    errors: int = 0
    decl_passes: int = 0
    fallbacks: int = 0
    timeouts: int = 0
    crash: Optional[dict] = None

    @property
    def total_edges(self) -> int:
        return len(self.global_edges)


def base_context(pool: BuiltinPool) -> BindingContext:
    ctx = BindingContext()
    for name, info in pool.globals.items():
        rec = BindingRecord(info.kind, key=("", name), signature=info.signature)
        if info.kind is Kind.VARIABLE:
            rec.type_name = info.type_name
        ctx.bind(name, rec)
    return ctx


def context_from_tree(root: Scope, pool: BuiltinPool) -> BindingContext:
    """Rebuild the root binding context of a saved program."""
    ctx = base_context(pool)
    for d in root.declarations:
        if isinstance(d, ClassDecl):
            ctx.bind(d.name, BindingRecord(Kind.CLASS, custom=True, key=(d.name, "__call__")))
        elif isinstance(d, VarDecl):
            ctx.bind(d.name, BindingRecord(Kind.VARIABLE))
        elif isinstance(d, ImportDecl):
            ctx.bind(d.lib_name, BindingRecord(Kind.MODULE))
            for name, info in pool.members.get(d.lib_name, {}).items():
                ctx.bind(name, BindingRecord(info.kind, type_name=info.type_name, key=(d.lib_name, name),
                                             signature=info.signature))
        elif isinstance(d, FunctionDecl):
            ctx.bind(d.name, BindingRecord(Kind.FUNCTION))
    for s in root.executions:
        dst = stmt_dst(s)
        if dst:
            ctx.bind(dst, BindingRecord(Kind.VARIABLE))
    return ctx


class Campaign:
    """One fuzzing session against one driver."""

    def __init__(self, driver, cfg: Optional[MutationConfig] = None, seed: Optional[int] = None,
                 on_event: Optional[Callable[[Event], None]] = None, pool: Optional[BuiltinPool] = None):
        self.driver = driver
        self.cfg = cfg or MutationConfig()
        if seed is None:
            seed = random.SystemRandom().getrandbits(64)
        self.seed = seed
        self.rng = random.Random(seed)
        self.pool = pool if pool is not None else scan_builtins(driver)
        if hasattr(driver.serializer, "import_members"):
            driver.serializer.import_members = {m: self.pool.module_members(m) for m in self.pool.modules}
        self.model = model_from_pool(self.pool)
        self.mutator = Mutator(self.cfg, self.pool, self.model, self.rng)
        self.state = CampaignState(self.rng, seed)
        self.events: list[Event] = []
        self.listeners = [on_event] if on_event else []
        self.corrections: list = []
        self.started = False
        self.t_start = 0.0

    # --- events -------------------------------------------------------------------

    def emit(self, event: str, **data) -> None:
        ev = Event(event, self.state.lines_executed, self.driver.now() - self.t_start, data)
        self.events.append(ev)
        for fn in self.listeners:
            fn(ev)

    @property
    def threshold(self) -> int:
        return stall_threshold(self.state.total_edges, self.cfg)

    # --- setup ----------------------------------------------------------------------

    def start(self, corpus: Optional[list] = None) -> None:
        """Synthesize the blank entry; resume from `corpus` when given."""
        self.t_start = self.driver.now()
        self.emit("start", seed=self.seed, target=self.driver.name)
        st = self.state
        for _ in range(BLANK_ATTEMPTS):
            root, ctx = Scope(), base_context(self.pool)
            delta = self.mutator.apply_declaration_mutation(self.mutator.select_decl(), root, ctx, root)
            text = self.driver.serializer.delta(delta)
            history = []
            if text:
                res = self.driver.run_line(text, self.cfg.t_line)
                if res.crashed:
                    self._record_crash(text)
                    return
                if not res.ok:
                    self.driver.restart()
                    continue
                history.append(text)
                self._absorb_edges(res.new_edge_ids)
            break
        else:
            root, ctx, history = Scope(), base_context(self.pool), []
        st.root, st.ctx, st.history = root, ctx, history
        readback_types(self.driver, ctx, self._variable_names(ctx), self.model)
        self._prune(ctx, self._variable_names(ctx))
        st.blank = CorpusEntry(0, clone_scope(root), ctx.snapshot(), list(history), self.seed, set(),
                               self.driver.now())
        self.emit("blank", chunks=len(history))
        if corpus:
            st.corpus.extend(corpus)
            self._restore(self.rng.choice(st.corpus))
        self.started = True

    # --- main loop --------------------------------------------------------------------

    def run(self, max_time: Optional[float] = None, max_lines: Optional[int] = None) -> CampaignState:
        if not self.started:
            self.start()
        st = self.state
        while st.crash is None:
            if max_time is not None and self.driver.now() - self.t_start >= max_time:
                break
            if max_lines is not None and st.lines_executed + st.skipped_lines >= max_lines:
                break
            self.step()
        self.emit("end", edges=st.total_edges, lines=st.lines_executed, corpus=len(st.corpus))
        return st

    def step(self) -> None:
        st = self.state
        kind, stmt = self.mutator.generate_exec(st.ctx, in_body=False)
        if stmt is None:
            st.skipped_lines += 1
            st.no_edge_counter += 1
            self.emit("skip")
            self._check_stall()
            return
        text = self.driver.serializer.stmt(stmt)
        res = self.driver.run_line(text, self.cfg.t_line)
        st.lines_executed += 1
        dst = stmt_dst(stmt)
        if res.crashed:
            self._record_crash(text)
            return
        if res.timed_out:
            self.emit("line", text=text, mutator=kind, new=0, status="timeout")
            if dst:
                st.ctx.unbind(dst)
            self.handle_timeout()
            return
        if res.error is not None:
            st.errors += 1
            if dst:
                st.ctx.unbind(dst)
            self._reflect(res.error, kind, stmt)
        else:
            st.history.append(text)
            st.root.executions.append(stmt)
        new = self._absorb_edges(res.new_edge_ids)
        self.emit("line", text=text, mutator=kind, new=len(new), status="error" if res.error else "ok")
        if new:
            self._progress()
            self.maybe_add_to_corpus(new)
        else:
            st.no_edge_counter += 1
        touched = [n for n in ([dst] if dst and res.error is None else []) + stmt_reads(stmt)]
        names = [n for n in dict.fromkeys(touched) if self._is_variable(n)]
        readback_types(self.driver, st.ctx, names, self.model)
        self._prune(st.ctx, names)
        if res.error is None and dst and kind == "Call" and resolve(st.ctx, dst) is not None:
            self._learn_return(stmt, resolve(st.ctx, dst).type_name)
        self._check_stall()

    # --- scheduling -------------------------------------------------------------------------

    def _check_stall(self) -> None:
        st = self.state
        if st.no_edge_counter < self.threshold:
            return
        if st.pass_pending:
            st.failed_decl_rounds += 1
            st.pass_pending = False
        if st.failed_decl_rounds >= self.cfg.fail_rounds:
            self.fallback()
        elif count_scopes(st.root) >= self.cfg.s_cap:
            self.emit("decl_skip", scopes=count_scopes(st.root))
            self.fallback()
        else:
            self.declaration_pass()

    def declaration_pass(self) -> None:
        st = self.state
        saved_root, saved_ctx = clone_scope(st.root), st.ctx.snapshot()
        kind = self.mutator.select_decl()
        delta = self.mutator.apply_declaration_mutation(kind, st.root, st.ctx, st.root)
        st.decl_passes += 1
        st.no_edge_counter = 0
        st.pass_pending = True
        text = self.driver.serializer.delta(delta)
        if not text:
            self.emit("decl_pass", mutator=kind, new=0, status="noop")
            return
        res = self.driver.run_line(text, self.cfg.t_line)
        if res.crashed:
            self._record_crash(text)
            return
        if not res.ok:
            # the interpreter never saw this block: drop it from the tree too
            st.root, st.ctx = saved_root, saved_ctx
            st.pass_pending = False
            st.failed_decl_rounds += 1
            self.emit("decl_pass", mutator=kind, new=0, status="timeout" if res.timed_out else "error",
                      text=text)
            if res.timed_out:
                self.handle_timeout()
                return
            self._reflect(res.error, kind, None)
            new = self._absorb_edges(res.new_edge_ids)
            if new:
                self._progress()
            if st.failed_decl_rounds >= self.cfg.fail_rounds:
                self.fallback()
            return
        st.history.append(text)
        new = self._absorb_edges(res.new_edge_ids)
        self.emit("decl_pass", mutator=kind, new=len(new), status="ok", text=text)
        if new:
            self._progress()
            self.maybe_add_to_corpus(new)
        names = self._variable_names(st.ctx)
        readback_types(self.driver, st.ctx, names, self.model)
        self._prune(st.ctx, names)

    def fallback(self) -> None:
        st = self.state
        st.fallbacks += 1
        if st.corpus and self.rng.random() >= self.cfg.w_startover:
            entry = self.rng.choice(st.corpus)
        else:
            entry = st.blank
        self.emit("fallback", entry=entry.entry_id)
        self._restore(entry)

    def handle_timeout(self) -> None:
        st = self.state
        st.timeouts += 1
        self.emit("timeout", replay=len(st.history))
        self.driver.restart()
        if not self._replay(st.history, self.cfg.t_lines):
            self.emit("replay_failed")
            self.fallback()
            return
        st.no_edge_counter += 1
        self._check_stall()

    def maybe_add_to_corpus(self, new_edges) -> Optional[CorpusEntry]:
        if not new_edges:
            return None
        st = self.state
        entry = CorpusEntry(
            entry_id=max((e.entry_id for e in st.corpus), default=0) + 1,
            ast_snapshot=clone_scope(st.root),
            ctx_snapshot=st.ctx.snapshot(),
            line_history=list(st.history),
            seed=self.seed,
            discovered_edges=set(new_edges),
            created_at=self.driver.now() - self.t_start,
        )
        st.corpus.append(entry)
        self.emit("corpus_add", entry=entry.entry_id, edges=len(entry.discovered_edges))
        return entry

    # --- helpers -------------------------------------------------------------------------------

    def _progress(self) -> None:
        st = self.state
        st.no_edge_counter = 0
        st.failed_decl_rounds = 0
        st.pass_pending = False

    def _absorb_edges(self, ids) -> list:
        st = self.state
        new = sorted(set(ids) - st.global_edges)
        if new:
            now = self.driver.now() - self.t_start
            for e in new:
                st.edge_log.append((e, st.lines_executed, now))
            st.global_edges.update(new)
        return new

    def _restore(self, entry: CorpusEntry) -> None:
        st = self.state
        self.driver.restart()
        if not self._replay(entry.line_history, None):
            if entry is st.blank:
                raise CampaignError("blank entry no longer replays on a fresh interpreter")
            log.warning("corpus entry %d failed to replay; restoring blank entry", entry.entry_id)
            self.driver.restart()
            entry = st.blank
            if not self._replay(entry.line_history, None):
                raise CampaignError("blank entry no longer replays on a fresh interpreter")
        st.root = clone_scope(entry.ast_snapshot)
        st.ctx = entry.ctx_snapshot.snapshot()
        st.history = list(entry.line_history)
        st.no_edge_counter = 0
        st.failed_decl_rounds = 0
        st.pass_pending = False
        names = self._variable_names(st.ctx)
        readback_types(self.driver, st.ctx, names, self.model)
        self._prune(st.ctx, names)

    def _replay(self, chunks, budget: Optional[float]) -> bool:
        """Run saved chunks on the (fresh) interpreter; False on any failure or overrun."""
        t0 = self.driver.now()
        for text in chunks:
            remaining = self.cfg.t_line
            if budget is not None:
                remaining = min(remaining, budget - (self.driver.now() - t0))
                if remaining <= 0:
                    return False
            res = self.driver.run_line(text, remaining)
            if res.crashed:
                self._record_crash(text)
                return False
            if not res.ok:
                return False
            self._absorb_edges(res.new_edge_ids)
        return budget is None or self.driver.now() - t0 <= budget

    def _record_crash(self, text: str) -> None:
        self.state.crash = {"line": text, "seed": self.seed, "ordinal": self.state.lines_executed}
        self.emit("crash", text=text, seed=self.seed)

    def _is_variable(self, name: str) -> bool:
        rec = resolve(self.state.ctx, name)
        return rec is not None and rec.kind is Kind.VARIABLE

    def _variable_names(self, ctx: BindingContext) -> list:
        return [n for n, r in ctx.items() if r.kind is Kind.VARIABLE]

    def _prune(self, ctx: BindingContext, names) -> None:
        """Drop variables the interpreter does not know (failed or nil-valued)."""
        for n in names:
            rec = ctx.records.get(n)
            if rec is not None and rec.kind is Kind.VARIABLE and rec.type_name is None:
                ctx.unbind(n)

    def _learn_return(self, stmt, type_name: Optional[str]) -> None:
        if type_name is None:
            return
        if stmt.receiver is None:
            rec = resolve(self.state.ctx, stmt.callee)
            key = rec.key if rec is not None and rec.key else ("", stmt.callee)
        else:
            rec = resolve(self.state.ctx, stmt.receiver)
            key = (props_key(stmt.receiver, rec) if rec else None, stmt.callee)
        self.model.return_types[key] = type_name

    def error_context(self, kind: str, stmt) -> dict:
        ctx = {"kind": kind}
        if stmt is None:
            return ctx
        op = getattr(stmt, "op", None)
        if op is not None:
            ctx["op"] = op.value
        elif kind in ("GetItem", "SetItem"):
            ctx["op"] = kind
        attr = getattr(stmt, "attr", None)
        if attr is not None and hasattr(attr, "id"):
            ctx["attr"] = attr.id
        obj = getattr(stmt, "obj", None) or getattr(stmt, "receiver", None)
        if obj:
            rec = resolve(self.state.ctx, obj)
            if rec is not None:
                ctx["obj_type"] = props_key(obj, rec)
        callee = getattr(stmt, "callee", None)
        if callee:
            ctx["callee"] = callee
        return ctx

    def _reflect(self, message: str, kind: str, stmt) -> None:
        c = parse_error(message, self.driver.patterns, self.error_context(kind, stmt))
        if c is UNRECOGNIZED:
            return
        fresh = c not in self.model.applied
        apply_correction(self.model, c)
        if fresh:
            self.corrections.append(c)
            self.emit("correction", correction=repr(c))
