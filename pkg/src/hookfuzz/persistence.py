"""
Corpus directories: saved entries, session config, event log and coverage export.

Layout::

    <dir>/config.txt          configuration the session ran with, plus its hash
    <dir>/saved/<id>.<ext>    program source, chunks in execution order
    <dir>/saved/<id>.meta     key = value sidecar
    <dir>/saved/<id>.ast      structural dump of the entry's tree
    <dir>/session.log         one JSON object per event
    <dir>/coverage.export     per-edge discovery records and a summary block
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .ast_core import Scope, dump_tree, load_tree
from .config import MutationConfig, parse_config
from .scheduler import CorpusEntry, context_from_tree

log = logging.getLogger(__name__)

META_KEYS = ("entry_id", "seed", "edge_count", "target", "timestamp", "config_hash", "chunks", "edges")


class SessionMismatch(ValueError):
    """A saved session was produced under a different configuration or target."""


@dataclass
class SavedEntry:
    source_text: str
    meta: dict
    ast_text: str = ""
    # source line count of each executed chunk, in order
    chunks: list = field(default_factory=list)

    def chunk_texts(self) -> list:
        lines = self.source_text.split("\n")
        out, i = [], 0
        for n in self.chunks:
            out.append("\n".join(lines[i:i + n]))
            i += n
        return out


def entry_source(entry: CorpusEntry) -> tuple[str, list]:
    chunks = list(entry.line_history)
    text = "\n".join(chunks)
    return (text + "\n" if chunks else ""), [c.count("\n") + 1 for c in chunks]


def format_meta(meta: dict) -> str:
    out = []
    for k in META_KEYS:
        v = meta.get(k)
        if isinstance(v, (list, tuple)):
            v = ",".join(str(x) for x in v)
        out.append(f"{k} = {'' if v is None else v}")
    return "\n".join(out) + "\n"


def parse_meta(text: str) -> dict:
    raw = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        k, sep, v = line.partition("=")
        if not sep:
            raise ValueError(f"malformed sidecar line {line!r}")
        raw[k.strip()] = v.strip()
    missing = [k for k in META_KEYS if k not in raw]
    if missing:
        raise ValueError(f"sidecar lacks {', '.join(missing)}")
    meta = dict(raw)
    for k in ("entry_id", "seed", "edge_count"):
        meta[k] = int(raw[k])
    meta["timestamp"] = float(raw["timestamp"])
    meta["chunks"] = [int(x) for x in raw["chunks"].split(",") if x]
    meta["edges"] = [int(x) for x in raw["edges"].split(",") if x]
    if meta["edge_count"] != len(meta["edges"]):
        raise ValueError("edge_count disagrees with the edge list")
    return meta


def save_entry(entry: CorpusEntry, driver, directory, cfg: MutationConfig) -> Optional[SavedEntry]:
    """Write `saved/<id>.<ext>` and its sidecars; None (with a warning) on storage failure."""
    source, chunks = entry_source(entry)
    meta = {
        "entry_id": entry.entry_id,
        "seed": entry.seed,
        "edge_count": len(entry.discovered_edges),
        "target": driver.name,
        "timestamp": round(entry.created_at, 6),
        "config_hash": cfg.config_hash(driver.name),
        "chunks": chunks,
        "edges": sorted(entry.discovered_edges),
    }
    saved = SavedEntry(source, meta, dump_tree(entry.ast_snapshot), chunks)
    base = Path(directory) / "saved"
    try:
        base.mkdir(parents=True, exist_ok=True)
        stem = base / str(entry.entry_id)
        Path(f"{stem}.{driver.extension}").write_text(source)
        Path(f"{stem}.ast").write_text(saved.ast_text)
        # the sidecar goes last: its presence marks a complete entry
        Path(f"{stem}.meta").write_text(format_meta(meta))
    except OSError as exc:
        log.warning("could not save corpus entry %d: %s", entry.entry_id, exc)
        return None
    return saved


def load_entry(meta_path: Path) -> SavedEntry:
    meta = parse_meta(meta_path.read_text())
    candidates = sorted(p for p in meta_path.parent.glob(f"{meta_path.stem}.*")
                        if p.suffix not in (".meta", ".ast"))
    if not candidates:
        raise ValueError(f"no source file next to {meta_path.name}")
    ast_path = meta_path.with_suffix(".ast")
    ast_text = ast_path.read_text() if ast_path.exists() else ""
    saved = SavedEntry(candidates[0].read_text(), meta, ast_text, meta["chunks"])
    if len(saved.chunk_texts()) != len(meta["chunks"]) or sum(meta["chunks"]) > saved.source_text.count("\n") + 1:
        raise ValueError("chunk table does not fit the source")
    return saved


def write_config(directory, cfg: MutationConfig, driver_name: str) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    text = cfg.canonical_text() + f"# target = {driver_name}\n# config_hash = {cfg.config_hash(driver_name)}\n"
    (d / "config.txt").write_text(text)


def load_session(directory, cfg: Optional[MutationConfig] = None, driver_name: Optional[str] = None):
    """Saved entries (sorted by id) and the configuration they were made with.

    When `cfg`/`driver_name` are given, a session recorded under a different
    configuration hash is refused with SessionMismatch. Entries whose sidecar
    is corrupt are skipped with a warning.
    """
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(d)
    stored = None
    cfg_file = d / "config.txt"
    if cfg_file.exists():
        stored = parse_config(cfg_file.read_text())
    expected = None
    if driver_name is not None:
        expected = (cfg or stored or MutationConfig()).config_hash(driver_name)
        if stored is not None and stored.config_hash(driver_name) != expected:
            raise SessionMismatch(f"{d} was recorded with a different configuration")
    entries = []
    saved_dir = d / "saved"
    metas = sorted(saved_dir.glob("*.meta"), key=lambda p: (len(p.stem), p.stem)) if saved_dir.is_dir() else []
    for m in metas:
        try:
            e = load_entry(m)
        except (OSError, ValueError) as exc:
            log.warning("skipping corpus entry %s: %s", m.name, exc)
            continue
        if expected is not None and e.meta["config_hash"] != expected:
            raise SessionMismatch(f"entry {m.stem} was recorded with config {e.meta['config_hash']}, "
                                  f"expected {expected}")
        if driver_name is not None and e.meta["target"] != driver_name:
            raise SessionMismatch(f"entry {m.stem} belongs to target {e.meta['target']!r}")
        entries.append(e)
    return entries, stored


def corpus_entry(saved: SavedEntry, pool) -> CorpusEntry:
    """Rebuild an in-memory corpus entry from its saved form."""
    root = load_tree(saved.ast_text) if saved.ast_text else Scope()
    return CorpusEntry(
        entry_id=saved.meta["entry_id"],
        ast_snapshot=root,
        ctx_snapshot=context_from_tree(root, pool),
        line_history=saved.chunk_texts(),
        seed=saved.meta["seed"],
        discovered_edges=set(saved.meta["edges"]),
        created_at=saved.meta["timestamp"],
    )


def coverage_summary(state) -> dict:
    return {
        "total_edges": state.total_edges,
        "lines_executed": state.lines_executed,
        "corpus_size": len(state.corpus),
        "decl_passes": state.decl_passes,
        "fallbacks": state.fallbacks,
    }


def format_coverage(state) -> str:
    out = ["# edge\tline\tt"]
    for edge, ordinal, t in state.edge_log:
        out.append(f"edge\t{edge}\t{ordinal}\t{t:.6f}")
    out.append("[summary]")
    for k, v in coverage_summary(state).items():
        out.append(f"{k} = {v}")
    return "\n".join(out) + "\n"


def parse_coverage(text: str) -> tuple[list, dict]:
    records, summary, in_summary = [], {}, False
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        if line == "[summary]":
            in_summary = True
        elif in_summary:
            k, _, v = line.partition("=")
            summary[k.strip()] = int(v)
        else:
            _, edge, ordinal, t = line.split("\t")
            records.append((int(edge), int(ordinal), float(t)))
    return records, summary


def export_coverage(state, path) -> Optional[Path]:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(format_coverage(state))
    except OSError as exc:
        log.warning("could not write coverage export %s: %s", path, exc)
        return None
    return path


class SessionRecorder:
    """Event listener that persists a campaign as it runs.

    Appends every event to `session.log` and saves each admitted corpus entry.
    """

    def __init__(self, directory, campaign):
        self.dir = Path(directory)
        self.campaign = campaign
        self.dir.mkdir(parents=True, exist_ok=True)
        write_config(self.dir, campaign.cfg, campaign.driver.name)
        self._log = open(self.dir / "session.log", "a", encoding="utf-8")
        campaign.listeners.append(self)

    def __call__(self, ev) -> None:
        self._log.write(json.dumps(ev.as_dict(), sort_keys=True, default=str) + "\n")
        if ev.kind == "corpus_add":
            entry = self.campaign.state.corpus[-1]
            save_entry(entry, self.campaign.driver, self.dir, self.campaign.cfg)

    def close(self) -> None:
        self._log.close()
        export_coverage(self.campaign.state, self.dir / "coverage.export")
