"""
Length-prefixed request/response framing for out-of-process wrappers.

Each frame is a 4-byte little-endian payload length followed by the UTF-8
payload. Requests are `VERB\\n<body>`; responses are
`OK\\n<edge ids>\\n<error or empty>` or `TIMEOUT\\n`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

VERBS = ("RUN", "RESTART", "TYPEOF", "SCAN", "PARSE", "INFO")
_LEN = struct.Struct("<I")
MAX_FRAME = 64 * 1024 * 1024


class ProtocolError(ValueError):
    pass


def encode_frame(payload: bytes) -> bytes:
    return _LEN.pack(len(payload)) + payload


def encode_request(verb: str, body: str = "") -> bytes:
    if verb not in VERBS:
        raise ProtocolError(f"unknown verb {verb!r}")
    return encode_frame(f"{verb}\n{body}".encode("utf-8", "surrogateescape"))


def decode_request(payload: bytes) -> tuple[str, str]:
    text = payload.decode("utf-8", "surrogateescape")
    verb, _, body = text.partition("\n")
    if verb not in VERBS:
        raise ProtocolError(f"unknown verb {verb!r}")
    return verb, body


@dataclass
class Response:
    timed_out: bool
    edges: list
    # error text, or the reply body for TYPEOF/SCAN/INFO
    text: Optional[str]


def encode_response(edges=None, text: Optional[str] = None, timed_out: bool = False) -> bytes:
    if timed_out:
        return encode_frame(b"TIMEOUT\n")
    ids = ",".join(str(e) for e in (edges or ()))
    return encode_frame(f"OK\n{ids}\n{text or ''}".encode("utf-8", "surrogateescape"))


def decode_response(payload: bytes) -> Response:
    text = payload.decode("utf-8", "replace")
    if text == "TIMEOUT\n":
        return Response(True, [], None)
    if not text.startswith("OK\n"):
        raise ProtocolError(f"malformed response {text[:40]!r}")
    ids, _, rest = text[3:].partition("\n")
    try:
        edges = [int(x) for x in ids.split(",")] if ids else []
    except ValueError:
        raise ProtocolError(f"bad edge list {ids[:40]!r}") from None
    return Response(False, edges, rest or None)


def read_frame(read) -> bytes:
    """Read one frame using `read(n)`, which returns at most n bytes (b'' at EOF)."""
    head = _read_exact(read, 4)
    (n,) = _LEN.unpack(head)
    if n > MAX_FRAME:
        raise ProtocolError(f"frame of {n} bytes exceeds limit")
    return _read_exact(read, n)


def _read_exact(read, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = read(n - len(buf))
        if not chunk:
            raise EOFError("stream closed mid-frame")
        buf += chunk
    return bytes(buf)
