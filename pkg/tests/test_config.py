import pytest

from hookfuzz.config import ConfigError, MutationConfig, parse_config


def test_defaults():
    cfg = MutationConfig()
    assert (cfg.t_floor, cfg.t_ceil, cfg.s_cap) == (100, 2000, 50)
    assert cfg.w_decl == {"AddFunction": 30, "AddVariable": 20, "AddClass": 12, "AddImport": 6}
    assert sum(cfg.w_exec.values()) == 83
    assert cfg.w_var == (9, 1, 6)
    assert (cfg.w_startover, cfg.w_respectType) == (0.10, 0.80)
    assert (cfg.t_line, cfg.t_lines) == (0.5, 1.0)


def test_canonical_text_round_trips():
    cfg = parse_config("t_floor = 150\nw_exec.Call = 40\nw_startover = 25%\nt_line = 250ms\nw_var = (1, 2, 3)")
    assert cfg.t_floor == 150 and cfg.w_exec["Call"] == 40
    assert cfg.w_startover == 0.25 and cfg.t_line == 0.25 and cfg.w_var == (1, 2, 3)
    assert parse_config(cfg.canonical_text()) == cfg


def test_hash_depends_on_config_and_driver():
    a, b = MutationConfig(), parse_config("s_cap = 49")
    assert a.config_hash("mock") == MutationConfig().config_hash("mock")
    assert a.config_hash("mock") != b.config_hash("mock")
    assert a.config_hash("mock") != a.config_hash("lua")


def test_durations():
    assert parse_config("t_lines = 2s").t_lines == 2.0
    assert parse_config("t_line = 300").t_line == 0.3


@pytest.mark.parametrize("text", [
    "w_decl.AddFunction = 0",
    "w_exec.Fly = 3",
    "t_floor = 3000",
    "w_startover = 1.5",
    "no_such_key = 1",
    "t_line = 2s",
    "w_var = (1, 2)",
    "s_cap = zero",
    "just words",
])
def test_rejects_bad_config(text):
    with pytest.raises(ConfigError):
        parse_config(text)
