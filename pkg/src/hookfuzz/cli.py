"""Command-line front end: campaigns, replay of saved entries, built-in scans."""

from __future__ import annotations

import argparse
import logging
import random
import sys
from pathlib import Path

from .config import ConfigError, MutationConfig, load_config
from .drivers import DriverError, create_driver, load_descriptors
from .persistence import SessionMismatch, SessionRecorder, corpus_entry, load_entry, load_session
from .reflection import format_scan, scan_builtins
from .scheduler import Campaign, CampaignError

EXIT_OK, EXIT_USAGE, EXIT_FAILURE, EXIT_CRASH = 0, 1, 2, 10

log = logging.getLogger("hookfuzz")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hookfuzz", description="Coverage-guided override-hook fuzzer for script interpreters.")
    p.add_argument("--target", default="mock", help="registered driver name (default: mock)")
    p.add_argument("--seed", type=lambda s: int(s, 0), help="64-bit campaign seed; drawn fresh if omitted")
    p.add_argument("--max-time", type=float, default=60.0, help="campaign length in seconds of target clock")
    p.add_argument("--max-lines", type=int, help="stop after this many generated lines")
    p.add_argument("--corpus-dir", type=Path, help="where corpus, session log and coverage export go")
    p.add_argument("--config", type=Path, help="key = value file overriding the default parameters")
    p.add_argument("--replay", type=Path, metavar="FILE", help="run a saved entry line by line and exit")
    p.add_argument("--scan", action="store_true", help="print the built-in pool of the target and exit")
    p.add_argument("--stats-interval", type=float, default=2.0, help="seconds between stats lines (default 2)")
    p.add_argument("--asan", action="store_true", help="build real targets with AddressSanitizer")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _driver(args):
    options = {"asan": True} if args.asan else {}
    return create_driver(args.target, **options)


def stats_line(campaign: Campaign) -> str:
    st = campaign.state
    return (f"[{campaign.driver.now() - campaign.t_start:8.1f}s] lines={st.lines_executed} edges={st.total_edges} "
            f"corpus={len(st.corpus)} threshold={campaign.threshold} fallbacks={st.fallbacks}")


def run_campaign(args, cfg: MutationConfig, out=None) -> int:
    out = out or sys.stdout
    seed = args.seed if args.seed is not None else random.SystemRandom().getrandbits(64)
    print(f"seed: {seed}", file=out, flush=True)
    driver = _driver(args)
    try:
        driver.start()
        campaign = Campaign(driver, cfg, seed)
        recorder = None
        resume = []
        if args.corpus_dir is not None:
            if args.corpus_dir.is_dir():
                saved, _ = load_session(args.corpus_dir, cfg, driver.name)
                resume = [corpus_entry(s, campaign.pool) for s in saved]
                if resume:
                    print(f"resuming with {len(resume)} saved entries", file=out, flush=True)
            recorder = SessionRecorder(args.corpus_dir, campaign)

        next_stats = [args.stats_interval]

        def on_event(ev):
            if args.stats_interval > 0 and ev.t >= next_stats[0]:
                print(stats_line(campaign), file=out, flush=True)
                while next_stats[0] <= ev.t:
                    next_stats[0] += args.stats_interval

        campaign.listeners.append(on_event)
        try:
            if args.max_time > 0 and (args.max_lines is None or args.max_lines > 0):
                campaign.start(resume)
                campaign.run(max_time=args.max_time, max_lines=args.max_lines)
        finally:
            if recorder is not None:
                recorder.close()
        print(stats_line(campaign), file=out, flush=True)
        crash = campaign.state.crash
        if crash is not None:
            print(f"crash at line {crash['ordinal']} (seed {crash['seed']}):\n{crash['line']}", file=out, flush=True)
            return EXIT_CRASH
        return EXIT_OK
    finally:
        driver.close()


def replay_entry(args, out=None) -> int:
    out = out or sys.stdout
    path: Path = args.replay
    if not path.exists():
        print(f"no such entry: {path}", file=sys.stderr)
        return EXIT_USAGE
    meta_path = path.with_suffix(".meta")
    if meta_path.exists():
        saved = load_entry(meta_path)
        if saved.meta["target"] != args.target:
            print(f"entry was recorded on target {saved.meta['target']!r}, not {args.target!r}", file=sys.stderr)
            return EXIT_USAGE
        chunks = saved.chunk_texts()
    else:
        chunks = [ln for ln in path.read_text().splitlines() if ln.strip()]
    driver = _driver(args)
    if path.suffix.lstrip(".") != driver.extension:
        print(f"{path.name} is not a .{driver.extension} program", file=sys.stderr)
        return EXIT_USAGE
    try:
        driver.start()
        for i, text in enumerate(chunks, 1):
            res = driver.run_line(text, MutationConfig().t_line)
            if res.crashed:
                print(f"{i}: crash\n{res.error or ''}", file=out, flush=True)
                return EXIT_CRASH
            status = "timeout" if res.timed_out else ("error: " + res.error.splitlines()[0] if res.error else "ok")
            print(f"{i}: {status} (+{len(res.new_edge_ids)} edges)", file=out, flush=True)
        print(f"replayed {len(chunks)} lines", file=out)
        return EXIT_OK
    finally:
        driver.close()


def scan(args, out=None) -> int:
    out = out or sys.stdout
    driver = _driver(args)
    try:
        driver.start()
        out.write(format_scan(scan_builtins(driver)))
        return EXIT_OK
    finally:
        driver.close()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        known = load_descriptors()
        if args.target not in known:
            print(f"unknown target {args.target!r}; known: {', '.join(sorted(known))}", file=sys.stderr)
            return EXIT_USAGE
        cfg = load_config(args.config) if args.config else MutationConfig()
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.scan:
            return scan(args)
        if args.replay is not None:
            return replay_entry(args)
        return run_campaign(args, cfg)
    except SessionMismatch as exc:
        print(f"refusing to resume: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DriverError, CampaignError, OSError) as exc:
        print(f"campaign failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except KeyboardInterrupt:
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
