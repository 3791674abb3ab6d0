/*
 * Out-of-process Lua 5.4 harness for the fuzzing engine.
 *
 * Requests arrive on stdin and responses leave on a private duplicate of the
 * original stdout (fd 1 itself is pointed at /dev/null so scripts cannot
 * corrupt the stream). Every frame is a 4-byte little-endian length followed
 * by the payload.
 *
 *   RUN\n<chunk>      execute one chunk in the persistent state
 *   RESTART\n         close and reopen the state
 *   TYPEOF\n<names>   one "name type" line per resolvable global
 *   SCAN\n<chunk>     run an introspection chunk, reply with its string result
 *   PARSE\n<chunk>    compile only
 *   INFO\n            guard count and interpreter version
 *
 * Replies are "OK\n<guard ids>\n<text>" or "TIMEOUT\n". The guard ids are all
 * sites that fired while serving the request; fired guards are re-armed at
 * the start of the next RUN so the engine sees every firing and decides
 * novelty itself.
 *
 * The interpreter sources are compiled with -fsanitize-coverage=trace-pc-guard;
 * this file is not, so the callbacks below never instrument themselves.
 */

#include <fcntl.h>
#include <stdint.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include <time.h>
#include <unistd.h>

#include "lua.h"
#include "lauxlib.h"
#include "lualib.h"

/* ---- guards ------------------------------------------------------------- */

static uint32_t n_guards;

struct fired {
  uint32_t *slot;
  uint32_t id;
};

static struct fired *fired;
static size_t n_fired, cap_fired;

void __sanitizer_cov_trace_pc_guard_init(uint32_t *start, uint32_t *stop) {
  if (start == stop || *start)
    return;
  for (uint32_t *x = start; x < stop; x++)
    *x = ++n_guards;
}

void __sanitizer_cov_trace_pc_guard(uint32_t *guard) {
  if (!*guard)
    return;
  if (n_fired == cap_fired) {
    size_t cap = cap_fired ? cap_fired * 2 : 4096;
    struct fired *p = realloc(fired, cap * sizeof *p);
    if (!p)
      return;
    fired = p;
    cap_fired = cap;
  }
  fired[n_fired].slot = guard;
  fired[n_fired].id = *guard;
  n_fired++;
  *guard = 0;
}

static void rearm(void) {
  for (size_t i = 0; i < n_fired; i++)
    *fired[i].slot = fired[i].id;
  n_fired = 0;
}

/* ---- limits --------------------------------------------------------------- */

static size_t mem_used, mem_cap = 256u << 20;
static double line_budget = 0.5, deadline;
static int timed_out;

static double now(void) {
  struct timespec ts;
  clock_gettime(CLOCK_MONOTONIC, &ts);
  return ts.tv_sec + ts.tv_nsec / 1e9;
}

static void *capped_alloc(void *ud, void *ptr, size_t osize, size_t nsize) {
  (void)ud;
  if (!ptr)
    osize = 0;
  if (nsize == 0) {
    free(ptr);
    mem_used -= osize;
    return NULL;
  }
  if (nsize > osize && mem_used + (nsize - osize) > mem_cap)
    return NULL;
  void *p = realloc(ptr, nsize);
  if (p)
    mem_used += nsize - osize;
  return p;
}

static void watchdog(lua_State *L, lua_Debug *ar) {
  (void)ar;
  if (now() > deadline) {
    timed_out = 1;
    luaL_error(L, "line budget exceeded");
  }
}

/* ---- state ---------------------------------------------------------------- */

static const luaL_Reg safe_libs[] = {
  {LUA_GNAME, luaopen_base},
  {LUA_STRLIBNAME, luaopen_string},
  {LUA_TABLIBNAME, luaopen_table},
  {LUA_MATHLIBNAME, luaopen_math},
  {LUA_UTF8LIBNAME, luaopen_utf8},
  {LUA_COLIBNAME, luaopen_coroutine},
  {NULL, NULL}
};

static const char *const banned[] = {"dofile", "loadfile", "print", "_G", NULL};

static lua_State *fresh_state(void) {
  mem_used = 0;
  lua_State *L = lua_newstate(capped_alloc, NULL);
  if (!L)
    return NULL;
  for (const luaL_Reg *lib = safe_libs; lib->func; lib++) {
    luaL_requiref(L, lib->name, lib->func, 1);
    lua_pop(L, 1);
  }
  for (const char *const *n = banned; *n; n++) {
    lua_pushnil(L);
    lua_setglobal(L, *n);
  }
  /* the default seed mixes in the clock; pin it so replays draw the same numbers */
  int top = lua_gettop(L);
  if (lua_getglobal(L, "math") == LUA_TTABLE && lua_getfield(L, -1, "randomseed") == LUA_TFUNCTION) {
    lua_pushinteger(L, 0);
    lua_pcall(L, 1, 0, 0);
  }
  lua_settop(L, top);
  lua_sethook(L, watchdog, LUA_MASKCOUNT, 1000);
  return L;
}

/* ---- framing -------------------------------------------------------------- */

static int out_fd = -1;

static int read_all(int fd, void *buf, size_t n) {
  char *p = buf;
  while (n) {
    ssize_t r = read(fd, p, n);
    if (r <= 0)
      return -1;
    p += r;
    n -= (size_t)r;
  }
  return 0;
}

static void write_all(const void *buf, size_t n) {
  const char *p = buf;
  while (n) {
    ssize_t w = write(out_fd, p, n);
    if (w <= 0)
      exit(3);
    p += w;
    n -= (size_t)w;
  }
}

static void send_frame(lua_State *L) {
  size_t n;
  const char *s = lua_tolstring(L, -1, &n);
  unsigned char head[4] = {n & 0xff, (n >> 8) & 0xff, (n >> 16) & 0xff, (n >> 24) & 0xff};
  write_all(head, 4);
  write_all(s, n);
  lua_pop(L, 1);
}

/* Builds the reply on a private helper state so replies survive a state
   that has run out of memory. */
static lua_State *R;

/* `edges` selects whether the guards fired since the last re-arm are listed;
   only RUN replies carry them. Firings caused by building the reply itself
   are left for the next re-arm. */
static void reply_ok(const char *text, size_t len, int edges) {
  luaL_Buffer b;
  char num[16];
  size_t k = edges ? n_fired : 0;
  luaL_buffinit(R, &b);
  luaL_addstring(&b, "OK\n");
  for (size_t i = 0; i < k; i++) {
    snprintf(num, sizeof num, i ? ",%u" : "%u", fired[i].id);
    luaL_addstring(&b, num);
  }
  luaL_addchar(&b, '\n');
  if (text)
    luaL_addlstring(&b, text, len);
  luaL_pushresult(&b);
  send_frame(R);
}

static void reply_timeout(void) {
  lua_pushliteral(R, "TIMEOUT\n");
  send_frame(R);
}

/* ---- verbs ----------------------------------------------------------------- */

static const char *error_text(lua_State *L, size_t *len) {
  if (lua_type(L, -1) == LUA_TSTRING || lua_type(L, -1) == LUA_TNUMBER)
    return lua_tolstring(L, -1, len);
  lua_pushfstring(L, "(error object is a %s value)", luaL_typename(L, -1));
  return lua_tolstring(L, -1, len);
}

static void run_chunk(lua_State *L, const char *src, size_t len, int want_result) {
  timed_out = 0;
  deadline = now() + line_budget;
  int st = luaL_loadbufferx(L, src, len, "=line", "t");
  if (st == LUA_OK)
    st = lua_pcall(L, 0, want_result ? 1 : 0, 0);
  if (timed_out) {
    lua_settop(L, 0);
    reply_timeout();
    return;
  }
  if (st != LUA_OK) {
    size_t n;
    const char *msg = error_text(L, &n);
    reply_ok(msg, n, !want_result);
  } else if (want_result && lua_type(L, -1) == LUA_TSTRING) {
    size_t n;
    const char *s = lua_tolstring(L, -1, &n);
    reply_ok(s, n, 0);
  } else {
    reply_ok(NULL, 0, !want_result);
  }
  lua_settop(L, 0);
}

static void type_of(lua_State *L, const char *body) {
  luaL_Buffer b;
  luaL_buffinit(R, &b);
  const char *p = body;
  while (*p) {
    const char *e = strchr(p, '\n');
    size_t n = e ? (size_t)(e - p) : strlen(p);
    lua_pushglobaltable(L);
    lua_pushlstring(L, p, n);
    int tt = lua_rawget(L, -2);
    const char *name = NULL;
    if (tt != LUA_TNIL)
      name = luaL_getmetafield(L, -1, "__name") == LUA_TSTRING ? lua_tostring(L, -1) : lua_typename(L, tt);
    if (name && n) {
      luaL_addlstring(&b, p, n);
      luaL_addchar(&b, ' ');
      luaL_addstring(&b, name);
      luaL_addchar(&b, '\n');
    }
    lua_settop(L, 0);
    if (!e)
      break;
    p = e + 1;
  }
  luaL_pushresult(&b);
  size_t n;
  const char *s = lua_tolstring(R, -1, &n);
  reply_ok(s, n, 0);
  lua_pop(R, 1);
}

int main(int argc, char **argv) {
  int opt;
  while ((opt = getopt(argc, argv, "t:m:")) != -1) {
    if (opt == 't')
      line_budget = atof(optarg) / 1000.0;
    else if (opt == 'm')
      mem_cap = (size_t)strtoull(optarg, NULL, 10);
  }
  out_fd = dup(1);
  int devnull = open("/dev/null", O_WRONLY);
  if (out_fd < 0 || devnull < 0)
    return 2;
  dup2(devnull, 1);
  close(devnull);

  R = luaL_newstate();
  lua_State *L = fresh_state();
  if (!R || !L)
    return 2;

  for (;;) {
    unsigned char head[4];
    if (read_all(0, head, 4))
      break;
    size_t n = head[0] | head[1] << 8 | head[2] << 16 | (size_t)head[3] << 24;
    char *req = malloc(n + 1);
    if (!req || read_all(0, req, n))
      break;
    req[n] = 0;
    char *body = memchr(req, '\n', n);
    size_t verb_len = body ? (size_t)(body - req) : n;
    body = body ? body + 1 : req + n;
    size_t body_len = n - (size_t)(body - req);

    if (verb_len == 3 && !memcmp(req, "RUN", 3)) {
      rearm();
      run_chunk(L, body, body_len, 0);
    } else if (verb_len == 7 && !memcmp(req, "RESTART", 7)) {
      lua_close(L);
      L = fresh_state();
      if (!L)
        return 2;
      reply_ok(NULL, 0, 0);
    } else if (verb_len == 6 && !memcmp(req, "TYPEOF", 6)) {
      type_of(L, body);
    } else if (verb_len == 4 && !memcmp(req, "SCAN", 4)) {
      run_chunk(L, body, body_len, 1);
    } else if (verb_len == 5 && !memcmp(req, "PARSE", 5)) {
      int st = luaL_loadbufferx(L, body, body_len, "=line", "t");
      size_t m = 0;
      const char *msg = st == LUA_OK ? NULL : error_text(L, &m);
      reply_ok(msg, m, 0);
      lua_settop(L, 0);
    } else if (verb_len == 4 && !memcmp(req, "INFO", 4)) {
      char info[128];
      int m = snprintf(info, sizeof info, "guards %u\nversion %s\n", n_guards, LUA_RELEASE);
      reply_ok(info, (size_t)m, 0);
    } else {
      static const char msg[] = "unknown verb";
      reply_ok(msg, sizeof msg - 1, 0);
    }
    free(req);
  }
  lua_close(L);
  lua_close(R);
  return 0;
}
