import logging

import pytest

from hookfuzz.ast_core import dump_tree
from hookfuzz.config import MutationConfig, parse_config
from hookfuzz.drivers.mock import MockDriver
from hookfuzz.persistence import (
    SessionMismatch,
    SessionRecorder,
    corpus_entry,
    format_meta,
    load_session,
    parse_coverage,
    parse_meta,
)
from hookfuzz.scheduler import Campaign


def _recorded(tmp_path, seed=1, lines=600):
    c = Campaign(MockDriver(), MutationConfig(), seed)
    rec = SessionRecorder(tmp_path, c)
    c.run(max_lines=lines)
    rec.close()
    return c


def test_meta_round_trip():
    meta = {"entry_id": 4, "seed": 2**63, "edge_count": 2, "target": "mock", "timestamp": 1.25,
            "config_hash": "abc", "chunks": [1, 3], "edges": [5, 9]}
    assert parse_meta(format_meta(meta)) == meta


def test_meta_rejects_inconsistent_edges():
    text = format_meta({"entry_id": 1, "seed": 1, "edge_count": 3, "target": "mock", "timestamp": 0,
                        "config_hash": "x", "chunks": [], "edges": [1]})
    with pytest.raises(ValueError):
        parse_meta(text)


def test_session_round_trip(tmp_path):
    c = _recorded(tmp_path)
    saved, stored = load_session(tmp_path, MutationConfig(), "mock")
    assert stored == MutationConfig()
    assert [s.meta["entry_id"] for s in saved] == [e.entry_id for e in c.state.corpus]
    for s, e in zip(saved, c.state.corpus):
        assert s.chunk_texts() == e.line_history
        assert set(s.meta["edges"]) == e.discovered_edges
        back = corpus_entry(s, c.pool)
        assert dump_tree(back.ast_snapshot) == dump_tree(e.ast_snapshot)


def test_saved_entries_replay_to_their_state(tmp_path):
    c = _recorded(tmp_path, seed=2)
    saved, _ = load_session(tmp_path, MutationConfig(), "mock")
    last = saved[-1]
    d = MockDriver()
    for chunk in last.chunk_texts():
        assert d.run_line(chunk).ok
    entry = c.state.corpus[-1]
    vars_ = [n for n, r in entry.ctx_snapshot.items() if r.kind.value == "variable" and r.type_name is not None]
    assert vars_ and all(n in d.env for n in vars_)


def test_coverage_export(tmp_path):
    c = _recorded(tmp_path, seed=3)
    records, summary = parse_coverage((tmp_path / "coverage.export").read_text())
    assert len(records) == summary["total_edges"] == c.state.total_edges
    assert [r[1] for r in records] == sorted(r[1] for r in records)
    assert summary["corpus_size"] == len(c.state.corpus)


def test_session_log_has_every_event(tmp_path):
    c = _recorded(tmp_path, seed=4, lines=200)
    lines = (tmp_path / "session.log").read_text().splitlines()
    assert len(lines) == len(c.events)


def test_mismatched_config_is_refused(tmp_path):
    _recorded(tmp_path, lines=200)
    with pytest.raises(SessionMismatch):
        load_session(tmp_path, parse_config("s_cap = 10"), "mock")
    with pytest.raises(SessionMismatch):
        load_session(tmp_path, MutationConfig(), "lua")


def test_corrupt_sidecar_is_skipped(tmp_path, caplog):
    _recorded(tmp_path, lines=300)
    metas = sorted((tmp_path / "saved").glob("*.meta"))
    metas[0].write_text("entry_id = what\n")
    with caplog.at_level(logging.WARNING):
        saved, _ = load_session(tmp_path, MutationConfig(), "mock")
    assert len(saved) == len(metas) - 1
    assert "skipping corpus entry" in caplog.text


def test_storage_failure_is_not_fatal(tmp_path, caplog):
    blocker = tmp_path / "saved"
    c = Campaign(MockDriver(), MutationConfig(), 5)
    rec = SessionRecorder(tmp_path, c)
    blocker.write_text("not a directory")
    with caplog.at_level(logging.WARNING):
        c.run(max_lines=200)
    rec.close()
    assert c.state.corpus and "could not save" in caplog.text
