import random
import shutil
import sys

import pytest

from hookfuzz.ast_core import Scope
from hookfuzz.config import MutationConfig
from hookfuzz.drivers.mock import MockDriver
from hookfuzz.mutation import Mutator
from hookfuzz.reflection import model_from_pool, scan_builtins
from hookfuzz.scheduler import base_context


def random_program(pool, seed, decls=6, stmts=12, cfg=None):
    """A well-formed random tree: weighted declarations, then executions."""
    cfg = cfg or MutationConfig()
    rng = random.Random(seed)
    model = model_from_pool(pool)
    mut = Mutator(cfg, pool, model, rng)
    root, ctx = Scope(), base_context(pool)
    for _ in range(decls):
        mut.apply_declaration_mutation(mut.select_decl(), root, ctx, root)
    for _ in range(stmts):
        _, stmt = mut.generate_exec(ctx)
        if stmt is not None:
            root.executions.append(stmt)
    return root, ctx


@pytest.fixture
def mock():
    return MockDriver()


@pytest.fixture(scope="session")
def mock_pool():
    return scan_builtins(MockDriver())


@pytest.fixture(scope="session")
def lua_driver():
    if shutil.which("clang") is None:
        pytest.skip("clang is needed to build the instrumented interpreter")
    from hookfuzz.drivers import create_driver

    d = create_driver("lua")
    d.start()
    yield d
    d.close()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
