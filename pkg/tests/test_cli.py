import subprocess
import sys

import pytest

from hookfuzz import cli


def _run(*args):
    return subprocess.run([sys.executable, "-m", "hookfuzz", *args], capture_output=True, text=True)


def test_usage_errors_exit_1(tmp_path):
    assert _run("--bogus").returncode == 1
    assert _run("--target", "nope", "--max-time", "1").returncode == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text("t_floor = -3\n")
    assert _run("--config", str(bad), "--max-time", "1").returncode == 1
    assert _run("--replay", str(tmp_path / "missing.py")).returncode == 1


def test_campaign_prints_seed_and_stats(tmp_path, capsys):
    code = cli.main(["--seed", "0x10", "--max-time", "3", "--stats-interval", "1", "--corpus-dir", str(tmp_path)])
    out = capsys.readouterr().out.splitlines()
    assert code == 0
    assert out[0] == "seed: 16"
    assert sum(1 for ln in out if "edges=" in ln) >= 3
    assert (tmp_path / "coverage.export").exists() and (tmp_path / "config.txt").exists()


def test_resume_and_refuse(tmp_path, capsys):
    assert cli.main(["--seed", "1", "--max-time", "2", "--corpus-dir", str(tmp_path)]) == 0
    assert cli.main(["--seed", "2", "--max-time", "1", "--corpus-dir", str(tmp_path)]) == 0
    assert "resuming with" in capsys.readouterr().out
    cfg = tmp_path / "other.cfg"
    cfg.write_text("s_cap = 7\n")
    assert cli.main(["--seed", "3", "--max-time", "1", "--corpus-dir", str(tmp_path), "--config", str(cfg)]) == 1


def test_zero_budget_still_exports(tmp_path):
    assert cli.main(["--seed", "1", "--max-time", "0", "--corpus-dir", str(tmp_path)]) == 0
    assert (tmp_path / "coverage.export").read_text().count("total_edges = 0") == 1


def test_replay(tmp_path, capsys):
    cli.main(["--seed", "5", "--max-time", "2", "--corpus-dir", str(tmp_path)])
    entry = sorted((tmp_path / "saved").glob("*.py"))[0]
    capsys.readouterr()
    assert cli.main(["--replay", str(entry)]) == 0
    assert "replayed" in capsys.readouterr().out
    assert cli.main(["--replay", str(entry), "--target", "lua"]) == 1


def test_scan(capsys):
    assert cli.main(["--scan"]) == 0
    out = capsys.readouterr().out
    assert "module math" in out and "override str find 2" in out


def test_crash_exit_code(monkeypatch, capsys):
    from hookfuzz.drivers.mock import MockDriver

    class Crashing(MockDriver):
        def _execute(self, text, budget):
            if self.ordinal >= 20:
                return [], "died", False, True
            return super()._execute(text, budget)

    monkeypatch.setattr(cli, "_driver", lambda args: Crashing())
    assert cli.main(["--seed", "1", "--max-time", "5"]) == cli.EXIT_CRASH
    assert "crash at line" in capsys.readouterr().out


@pytest.mark.parametrize("flag", ["--max-time", "--max-lines", "--seed"])
def test_numeric_flags_validate(flag):
    assert _run(flag, "ten").returncode == 1
