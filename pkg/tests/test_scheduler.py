import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hookfuzz.config import MutationConfig, parse_config
from hookfuzz.drivers.mock import MockDriver
from hookfuzz.scheduler import Campaign, CampaignError, stall_threshold


def _threshold_oracle(n: int) -> int:
    # largest k with 2**k <= (n + 4)**50, read off the bit length
    m = (n + 4) ** 50
    k = m.bit_length() - 1
    return min(max(k, 100), 2000)


@given(st.integers(0, 2**64))
def test_threshold_matches_integer_oracle(n):
    assert stall_threshold(n) == _threshold_oracle(n)


def test_threshold_boundaries():
    # 50 * log2(m) crosses an integer exactly when m is a power of two
    for m in (64, 128, 1024, 2**20):
        n = m - 4
        assert stall_threshold(n) == min(max(50 * int(math.log2(m)), 100), 2000)
        assert stall_threshold(n - 1) < stall_threshold(n) or stall_threshold(n) == 100


def test_threshold_respects_config():
    cfg = parse_config("t_floor = 10\nt_ceil = 150")
    assert stall_threshold(0, cfg) == 100
    assert stall_threshold(10**6, cfg) == 150
    with pytest.raises(ValueError):
        stall_threshold(-1)


def _campaign(seed=1, **mock_opts):
    return Campaign(MockDriver(**mock_opts), MutationConfig(), seed)


def test_campaign_runs_and_finds_edges():
    c = _campaign()
    st_ = c.run(max_lines=500)
    assert st_.lines_executed + st_.skipped_lines == 500
    assert st_.total_edges > 0 and st_.corpus
    assert c.events[0].kind == "start" and c.events[-1].kind == "end"
    assert st_.blank is not None and st_.blank.entry_id == 0


def test_corpus_entries_hold_only_new_edges():
    c = _campaign(seed=3)
    c.run(max_lines=2000)
    seen = set()
    for e in c.state.corpus:
        assert e.discovered_edges and not (e.discovered_edges & seen)
        seen |= e.discovered_edges
    assert seen <= c.state.global_edges
    assert [e.entry_id for e in c.state.corpus] == list(range(1, len(c.state.corpus) + 1))


def test_fallback_startover_rate():
    c = _campaign(seed=5)
    c.run(max_lines=300)
    picks = []
    c.listeners.append(lambda ev: picks.append(ev.data["entry"]) if ev.kind == "fallback" else None)
    for _ in range(2000):
        c.fallback()
    share = picks.count(0) / len(picks)
    assert abs(share - 0.10) < 0.025


def test_fallback_restores_entry_state():
    c = _campaign(seed=6)
    c.run(max_lines=400)
    entry = c.state.corpus[0]
    c.rng.random = lambda: 0.99  # never start over
    c.rng.choice = lambda seq: seq[0]
    c.fallback()
    assert c.state.history == entry.line_history
    assert c.state.root == entry.ast_snapshot
    assert c.state.no_edge_counter == 0


def test_timeout_is_recovered():
    c = _campaign(seed=2, timeouts={40})
    c.run(max_lines=100)
    assert c.state.timeouts == 1
    assert any(ev.kind == "timeout" for ev in c.events)
    assert c.driver.restarts >= 1


def test_crash_stops_campaign():
    class Crashing(MockDriver):
        def _execute(self, text, budget):
            if self.ordinal == 30:
                self.ordinal += 1
                return [], "segfault", False, True
            return super()._execute(text, budget)

    c = Campaign(Crashing(), MutationConfig(), 9)
    c.run(max_lines=200)
    assert c.state.crash is not None and c.state.crash["seed"] == 9
    assert c.events[-2].kind == "crash"


def test_blank_entry_that_no_longer_replays():
    c = _campaign(seed=4)
    c.start()
    c.state.blank.line_history = ["this is not python"]
    with pytest.raises(CampaignError):
        c._restore(c.state.blank)


def test_errors_feed_reflection():
    c = _campaign(seed=7, error_rules=[(r"\bupper\b", "'str' object has no attribute 'upper'")])
    c.run(max_lines=3000)
    applied = [repr(x) for x in c.corrections]
    assert "EvictProperty(type_name='str', prop='upper')" in applied
    assert "upper" not in c.model.props("str")


def test_same_seed_same_events():
    def trace(seed):
        c = _campaign(seed)
        c.run(max_lines=800)
        return [(e.kind, e.ordinal, repr(sorted(e.data.items()))) for e in c.events]

    assert trace(21) == trace(21)
    assert trace(21) != trace(22)


def test_threshold_agrees_with_float_log():
    # float agreement away from the integer boundaries
    for n in (0, 12, 60, 1020, 5000, 123456):
        assert stall_threshold(n) == min(max(math.floor(Fraction(50) * Fraction(math.log2(n + 4))), 100), 2000)
