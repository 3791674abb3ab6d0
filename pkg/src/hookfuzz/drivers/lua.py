"""
Lua 5.4 driver: a coverage-instrumented interpreter behind a pipe.

The wrapper binary is compiled on first use from the bundled sources
(`csrc/`) with clang's pc-guard instrumentation and cached per source hash.
Every request carries an engine-side watchdog; a wrapper that dies without
answering is reported as a crash and replaced by a fresh process.
"""

from __future__ import annotations

import hashlib
import logging
import os
import select
import shutil
import subprocess
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path
from typing import Optional

from .base import Driver, DriverError
from .luaserial import LuaSerializer
from .protocol import ProtocolError, Response, decode_response, encode_request, read_frame

log = logging.getLogger(__name__)

BINARY_NAME = "hookfuzz-lua-wrapper"
# `command = @bundled` in a descriptor means: build from the packaged sources
BUNDLED = "@bundled"
WATCHDOG_FACTOR = 1.2
WATCHDOG_SLACK = 0.05
CONTROL_TIMEOUT = 10.0

# a fixed string-hash seed keeps table traversal order the same across restarts,
# so saved histories replay to the same values
COMMON_FLAGS = ["-O1", "-g", "-fno-omit-frame-pointer", "-DLUA_USE_POSIX", "-Dluai_makeseed(L)=0x9e3779b9u"]
COVERAGE_FLAGS = ["-fsanitize-coverage=trace-pc-guard"]

# metamethods a generated class may define; arity includes the receiver
METAMETHODS = [
    ("__index", 2), ("__newindex", 3), ("__call", 2), ("__add", 2), ("__sub", 2), ("__mul", 2),
    ("__div", 2), ("__mod", 2), ("__pow", 2), ("__unm", 2), ("__idiv", 2), ("__band", 2),
    ("__bor", 2), ("__bxor", 2), ("__shl", 2), ("__shr", 2), ("__bnot", 2), ("__concat", 2),
    ("__len", 2), ("__eq", 2), ("__lt", 2), ("__le", 2), ("__tostring", 1), ("__close", 2),
    ("__gc", 1),
]
BASE_LIBS = ("string", "table", "math", "utf8", "coroutine")

# Runs inside the wrapper; names are sorted because table order is not stable
# across interpreter processes.
SCAN_SCRIPT = r"""
local out = {}
local function add(...) out[#out + 1] = table.concat({...}, " ") end
local function sorted_keys(t)
  local ks = {}
  for k in pairs(t) do if type(k) == "string" then ks[#ks + 1] = k end end
  table.sort(ks)
  return ks
end
local function entry(v)
  local t = type(v)
  if t == "function" then return "function -1 -1" end
  return t
end
local env = _ENV
add("literal Integer number")
add("literal Float number")
add("literal Boolean boolean")
add("literal TextBuffer string")
add("literal RawBuffer string")
local bases = {%s}
for _, b in ipairs(bases) do
  if type(env[b]) == "table" then add("base", b) end
end
local metas = {%s}
for _, m in ipairs(metas) do add("override * " .. m) end
for _, b in ipairs(bases) do
  local lib = env[b]
  if type(lib) == "table" then
    for _, k in ipairs(sorted_keys(lib)) do
      if type(lib[k]) == "function" then add("override", b, k, "1") end
    end
  end
end
local libs = {}
for _, k in ipairs(sorted_keys(env)) do
  local v = env[k]
  if type(v) == "table" and k ~= "_ENV" then
    libs[#libs + 1] = k
  else
    add("global", k, entry(v))
  end
end
for _, lib in ipairs(libs) do
  add("module", lib)
  for _, k in ipairs(sorted_keys(env[lib])) do
    add("member", lib, k, entry(env[lib][k]))
  end
end
local smeta = getmetatable("")
if smeta and type(smeta.__index) == "table" then
  for _, k in ipairs(sorted_keys(smeta.__index)) do
    if type(smeta.__index[k]) == "function" then add("prop string", k, "-1 -1") end
  end
end
return table.concat(out, "\n") .. "\n"
""" % (
    ", ".join(f'"{b}"' for b in BASE_LIBS),
    ", ".join(f'"{m} {n}"' for m, n in METAMETHODS),
)


class BuildError(DriverError):
    pass


def _sources() -> tuple[Path, list[Path]]:
    root = Path(str(resources.files("hookfuzz") / "drivers" / "csrc"))
    lua = sorted((root / "lua54").glob("*.c"))
    return root, lua


def _compiler() -> str:
    cc = os.environ.get("CC") or shutil.which("clang")
    if not cc:
        raise BuildError("clang is required to build the instrumented interpreter")
    return cc


def build_wrapper(asan: bool = False, cache_root: Optional[Path] = None, jobs: Optional[int] = None) -> Path:
    """Path to the instrumented wrapper, compiling it if the cache is cold."""
    root, lua_sources = _sources()
    cc = _compiler()
    flags = COMMON_FLAGS + (["-fsanitize=address"] if asan else [])
    h = hashlib.sha256()
    h.update(" ".join([cc] + flags + COVERAGE_FLAGS).encode())
    for p in lua_sources + [root / "wrapper.c"] + sorted((root / "lua54").glob("*.h")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    cache_root = Path(cache_root or os.environ.get("HOOKFUZZ_CACHE") or Path.home() / ".cache" / "hookfuzz")
    out_dir = cache_root / f"lua-{h.hexdigest()[:16]}{'-asan' if asan else ''}"
    binary = out_dir / BINARY_NAME
    if binary.exists():
        return binary
    out_dir.mkdir(parents=True, exist_ok=True)
    log.info("building instrumented Lua into %s", out_dir)
    with tempfile.TemporaryDirectory(dir=out_dir) as tmp:
        tmp = Path(tmp)
        inc = ["-I", str(root / "lua54")]

        def compile_one(src: Path, extra: list) -> Path:
            obj = tmp / (src.stem + ".o")
            cmd = [cc, "-c", str(src), "-o", str(obj)] + flags + extra + inc
            res = subprocess.run(cmd, capture_output=True, text=True)
            if res.returncode:
                raise BuildError(f"compiling {src.name} failed:\n{res.stderr[-2000:]}")
            return obj

        with ThreadPoolExecutor(max_workers=jobs or os.cpu_count() or 2) as pool:
            futures = [pool.submit(compile_one, s, COVERAGE_FLAGS) for s in lua_sources]
            futures.append(pool.submit(compile_one, root / "wrapper.c", []))
            objects = [f.result() for f in futures]
        staged = tmp / BINARY_NAME
        res = subprocess.run([cc, "-o", str(staged)] + [str(o) for o in objects] + flags + ["-lm"],
                             capture_output=True, text=True)
        if res.returncode:
            raise BuildError(f"linking failed:\n{res.stderr[-2000:]}")
        os.replace(staged, binary)
    return binary


class LuaDriver(Driver):
    name = "lua"
    extension = "lua"

    def __init__(self, patterns, enabled_modules=None, command: Optional[str] = None, asan: bool = False,
                 t_line: float = 0.5, memory_mb: int = 256, cache_dir=None):
        super().__init__(LuaSerializer(), patterns, enabled_modules)
        self.command = command if command not in (None, "", BUNDLED) else None
        self.asan = asan
        self.t_line = t_line
        self.memory_mb = memory_mb
        self.cache_dir = cache_dir
        self.proc: Optional[subprocess.Popen] = None
        self.info: dict = {}
        self.crashes = 0
        self._stderr = None
        self._t0 = time.monotonic()

    # --- process management ------------------------------------------------------

    def binary(self) -> Path:
        if self.command:
            found = shutil.which(self.command) or self.command
            return Path(found)
        return build_wrapper(self.asan, self.cache_dir)

    def start(self) -> None:
        if self.proc is not None:
            return
        exe = self.binary()
        self._stderr = tempfile.TemporaryFile()
        env = dict(os.environ, ASAN_OPTIONS="detect_leaks=0:abort_on_error=1")
        self.proc = subprocess.Popen(
            [str(exe), "-t", str(int(self.t_line * 1000)), "-m", str(self.memory_mb << 20)],
            stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=self._stderr, env=env,
        )
        resp = self._request("INFO", "", CONTROL_TIMEOUT)
        if resp is None or resp.timed_out:
            raise DriverError("wrapper did not answer INFO")
        self.info = dict(line.split(" ", 1) for line in (resp.text or "").splitlines() if " " in line)
        self.guards.init_range(0, int(self.info.get("guards", 0)))

    def close(self) -> None:
        if self.proc is None:
            return
        try:
            self.proc.stdin.close()
        except OSError:
            pass
        try:
            self.proc.wait(timeout=1)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            self.proc.wait()
        self.proc.stdout.close()
        self.proc = None
        if self._stderr is not None:
            self._stderr.close()
            self._stderr = None

    def _kill(self) -> None:
        if self.proc is not None:
            self.proc.kill()
            self.proc.wait()
        self.close()

    def _respawn(self) -> None:
        self._kill()
        self.start()

    def _stderr_tail(self) -> str:
        if self._stderr is None:
            return ""
        self._stderr.seek(0)
        return self._stderr.read()[-4000:].decode("utf-8", "replace")

    def _request(self, verb: str, body: str, timeout: float) -> Optional[Response]:
        """One round trip; None when the wrapper died, TimeoutError past `timeout`."""
        if self.proc is None:
            self.start()
        deadline = time.monotonic() + timeout
        fd = self.proc.stdout.fileno()

        def read(n: int) -> bytes:
            left = deadline - time.monotonic()
            if left <= 0 or not select.select([fd], [], [], left)[0]:
                raise TimeoutError
            return os.read(fd, n)

        try:
            self.proc.stdin.write(encode_request(verb, body))
            self.proc.stdin.flush()
            return decode_response(read_frame(read))
        except (BrokenPipeError, EOFError):
            return None
        except ProtocolError as exc:
            raise DriverError(str(exc)) from exc

    # --- contract --------------------------------------------------------------------

    def now(self) -> float:
        return time.monotonic() - self._t0

    def _execute(self, text: str, budget: float):
        try:
            resp = self._request("RUN", text, budget * WATCHDOG_FACTOR + WATCHDOG_SLACK)
        except TimeoutError:
            self._respawn()
            return [], None, True, False
        if resp is None:
            self.crashes += 1
            detail = self._stderr_tail()
            code = self.proc.poll() if self.proc is not None else None
            self._respawn()
            return [], f"wrapper terminated (status {code})\n{detail}", False, True
        if resp.timed_out:
            return [], None, True, False
        return resp.edges, resp.text, False, False

    def restart(self) -> None:
        try:
            resp = self._request("RESTART", "", CONTROL_TIMEOUT)
        except TimeoutError:
            resp = None
        if resp is None:
            self._respawn()

    def query_types(self, names) -> dict:
        names = [n for n in names if n]
        if not names:
            return {}
        try:
            resp = self._request("TYPEOF", "\n".join(names), CONTROL_TIMEOUT)
        except TimeoutError:
            self._respawn()
            return {}
        if resp is None:
            self._respawn()
            return {}
        out = {}
        for line in (resp.text or "").splitlines():
            name, _, t = line.partition(" ")
            if t:
                out[name] = t
        return out

    def scan(self) -> str:
        resp = self._request("SCAN", SCAN_SCRIPT, CONTROL_TIMEOUT)
        if resp is None or resp.timed_out:
            raise DriverError("built-in scan failed")
        return resp.text or ""

    def parse(self, text: str) -> Optional[str]:
        resp = self._request("PARSE", text, CONTROL_TIMEOUT)
        if resp is None:
            self._respawn()
            raise DriverError("wrapper died while parsing")
        return resp.text
