import ast
import io
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hookfuzz.ast_core import BoolConst, FloatConst, IntConst, INT64_MIN, RawConst, TextConst
from hookfuzz.drivers import DriverDescriptor, GuardTable, create_driver, load_descriptors
from hookfuzz.drivers.base import InstrumentationFault
from hookfuzz.drivers.luaserial import LuaSerializer, lua_string
from hookfuzz.drivers.mock import MockDriver
from hookfuzz.drivers.protocol import (
    ProtocolError,
    decode_request,
    decode_response,
    encode_request,
    encode_response,
    read_frame,
)
from hookfuzz.drivers.pyserial import PythonSerializer
from conftest import random_program


# --- wire protocol -------------------------------------------------------------


def _reader(data: bytes):
    return io.BytesIO(data).read


def test_request_layout_is_bit_exact():
    assert encode_request("RUN", "x = 1") == b"\x09\x00\x00\x00RUN\nx = 1"
    assert encode_request("RESTART") == struct.pack("<I", 8) + b"RESTART\n"


def test_response_layout_is_bit_exact():
    assert encode_response([3, 17], "boom") == struct.pack("<I", 12) + b"OK\n3,17\nboom"
    assert encode_response(timed_out=True) == b"\x08\x00\x00\x00TIMEOUT\n"


@given(st.sampled_from(["RUN", "TYPEOF", "SCAN", "PARSE"]), st.text())
def test_request_round_trip(verb, body):
    frame = encode_request(verb, body)
    assert decode_request(read_frame(_reader(frame))) == (verb, body)


@given(st.lists(st.integers(1, 2**31), max_size=50), st.one_of(st.none(), st.text(min_size=1)))
def test_response_round_trip(edges, text):
    r = decode_response(read_frame(_reader(encode_response(edges, text))))
    assert (r.timed_out, r.edges, r.text) == (False, edges, text)


def test_protocol_errors():
    with pytest.raises(ProtocolError):
        encode_request("EXEC", "")
    with pytest.raises(ProtocolError):
        decode_response(b"WHAT\n")
    with pytest.raises(ProtocolError):
        decode_response(b"OK\n1,x\n")
    with pytest.raises(EOFError):
        read_frame(_reader(b"\x05\x00\x00\x00OK"))
    with pytest.raises(ProtocolError):
        read_frame(_reader(b"\xff\xff\xff\xff"))


# --- guards ----------------------------------------------------------------------


def test_guard_init_numbers_sequentially():
    g = GuardTable()
    g.init_range(0, 5)
    assert g.guards == [1, 2, 3, 4, 5]
    g.init_range(0, 5)  # already initialized: untouched
    assert g.guards == [1, 2, 3, 4, 5]
    g.init_range(5, 8)
    assert g.guards[5:] == [6, 7, 8]


def test_guard_out_of_range():
    g = GuardTable(0)
    g.init_range(0, 3)
    with pytest.raises(InstrumentationFault):
        g.record_edge(3)


@given(st.lists(st.integers(0, 31), max_size=300))
def test_each_guard_counts_once(firings):
    g = GuardTable()
    g.init_range(0, 32)
    counted = [i for i in firings if g.record_edge(i)]
    assert sorted(counted) == sorted(set(firings))
    assert g.new_edge_count == len(set(firings))


# --- descriptors -------------------------------------------------------------------


def test_descriptors():
    descs = load_descriptors()
    assert set(descs) == {"mock", "lua"}
    assert descs["lua"].transport == "subprocess" and descs["lua"].command == "@bundled"
    with pytest.raises(ValueError):
        DriverDescriptor.parse("name = x\ntransport = carrier-pigeon\nfactory = a:b\npatterns = p")
    with pytest.raises(ValueError):
        DriverDescriptor.parse("name = x")
    with pytest.raises(KeyError):
        create_driver("nope")


def test_create_mock():
    d = create_driver("mock")
    assert isinstance(d, MockDriver) and d.enabled_modules == ["math", "json", "datetime"]


# --- mock driver -----------------------------------------------------------------------


def test_mock_is_stateful(mock):
    assert mock.run_line("a = 'x'").ok
    r = mock.run_line("b = a.upper()")
    assert r.ok and mock.query_type("b") == "str"
    assert mock.query_type("zz") is None
    mock.restart()
    assert mock.query_type("a") is None
    assert mock.run_line("c = a").error == "name 'a' is not defined"


def test_mock_errors_follow_cpython():
    m = MockDriver()
    m.run_line("s = 'x'")
    m.run_line("d = dict()")
    assert m.run_line("t = ~s").error == "bad operand type for unary ~: 'str'"
    assert m.run_line("t = d.find").error == "'dict' object has no attribute 'find'"
    assert m.run_line("t = iter()").error == "iter() takes from 1 to 2 positional arguments but 0 were given"


def test_mock_edges_are_a_function_of_the_lines():
    lines = ["a = 1", "b = 'q'", "c = a + a", "d = b.upper()", "e = ~a", "f = len(b)"]

    def fired(driver):
        out = []
        for ln in lines:
            out.append(sorted(driver._execute(ln, 0.5)[0]))
        return out

    assert fired(MockDriver()) == fired(MockDriver())
    one = MockDriver()
    first = fired(one)
    one.restart()
    assert fired(one) == first


def test_mock_scripted_behaviour():
    m = MockDriver(errors={2: "boom"}, timeouts={3}, plateau_after=4)
    assert m.run_line("a = 1").ok
    assert m.run_line("b = 2").error == "boom"
    assert m.query_type("b") is None
    t0 = m.now()
    assert m.run_line("c = 3", 0.5).timed_out
    assert m.now() - t0 == pytest.approx(0.5)
    assert m.run_line("d = 'x'").ok
    assert m.run_line("e = 'x'.upper()").new_edge_ids == set()


def test_mock_clock():
    m = MockDriver()
    m.run_line("a = 1")
    m.restart()
    assert m.now() == pytest.approx(0.01 + 0.05)


# --- serializers -------------------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32))
def test_python_programs_parse(mock_pool, seed):
    root, _ = random_program(mock_pool, seed)
    text = PythonSerializer().program(root)
    ast.parse(text)


def test_python_constants():
    s = PythonSerializer()
    for c in (IntConst(INT64_MIN), FloatConst(float("nan")), FloatConst(float("-inf")), BoolConst(True),
              TextConst(b"\x00'\"\\\xff"), RawConst(b"\x00\xff")):
        ast.parse(s.const(c))


def test_lua_constants():
    s = LuaSerializer()
    assert s.const(BoolConst(False)) == "false"
    assert s.const(IntConst(INT64_MIN)) == "(-9223372036854775807 - 1)"
    assert s.const(FloatConst(float("inf"))) == "(1/0)"
    assert s.const(FloatConst(float("nan"))) == "(0/0)"
    assert lua_string(b'a"\\\n\xff') == '"a\\034\\092\\010\\255"'


def test_lua_call_forms():
    s = LuaSerializer()
    assert s.call("len", [], receiver="s", bound=True) == "s:len()"
    assert s.call("rep", [], receiver="string") == "string.rep()"
