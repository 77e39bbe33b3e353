"""SNAP: binary TLV request/response/trap protocol, big-endian throughout.

Frame layout:

    magic   2   0x53 0x4E
    version 1   0x01
    op      1   1 Get, 2 Set, 3 Response, 4 Trap
    req_id  4   unsigned
    error   1   0 ok, 1 NoSuchObject, 2 ReadOnly, 3 WrongType, 4 Malformed
    count   2   number of varbinds, at most 64
    varbind *   arc_count u16, arcs u32 each, kind u8, length u16, payload

Value kinds: 0 Null (length 0), 1 Integer (signed 64-bit), 2 Counter,
3 Gauge, 4 Octets (raw), 5 Oid (arc_count u16 + arcs u32), 6 TimeTicks.
Transport frames are length-prefixed (u32) on the stream socket.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional

from ..mib import (
    CounterVal,
    GaugeVal,
    IntegerVal,
    ObjectValue,
    OctetsVal,
    Oid,
    OidVal,
    TimeTicksVal,
)
from . import SnapError

MAGIC = b"\x53\x4e"
VERSION = 1

OP_GET = 1
OP_SET = 2
OP_RESPONSE = 3
OP_TRAP = 4
OPS = (OP_GET, OP_SET, OP_RESPONSE, OP_TRAP)

ERR_OK = 0
ERR_NO_SUCH_OBJECT = 1
ERR_READ_ONLY = 2
ERR_WRONG_TYPE = 3
ERR_MALFORMED = 4

KIND_NULL = 0
KIND_INTEGER = 1
KIND_COUNTER = 2
KIND_GAUGE = 3
KIND_OCTETS = 4
KIND_OID = 5
KIND_TICKS = 6

MAX_VARBINDS = 64

_TAG_OF = {"i": KIND_INTEGER, "c": KIND_COUNTER, "g": KIND_GAUGE,
           "s": KIND_OCTETS, "o": KIND_OID, "t": KIND_TICKS}


@dataclass
class SnapMessage:
    """One SNAP frame; varbind value None means the wire Null kind."""

    op: int
    request_id: int
    error_code: int = 0
    varbinds: list[tuple[Oid, Optional[ObjectValue]]] = field(default_factory=list)


def snap_encode(msg: SnapMessage) -> bytes:
    if msg.op not in OPS:
        raise SnapError("bad-op", str(msg.op))
    if not (0 <= msg.request_id <= 0xFFFFFFFF):
        raise SnapError("bad-request-id", str(msg.request_id))
    if not (0 <= msg.error_code <= 0xFF):
        raise SnapError("bad-error-code", str(msg.error_code))
    if len(msg.varbinds) > MAX_VARBINDS:
        raise SnapError("too-many-varbinds", str(len(msg.varbinds)))
    out = bytearray()
    out += MAGIC
    out.append(VERSION)
    out.append(msg.op)
    out += struct.pack(">I", msg.request_id)
    out.append(msg.error_code)
    out += struct.pack(">H", len(msg.varbinds))
    for oid, value in msg.varbinds:
        out += struct.pack(">H", len(oid.arcs))
        for arc in oid.arcs:
            out += struct.pack(">I", arc)
        out += _encode_value(value)
    return bytes(out)


def _encode_value(value: Optional[ObjectValue]) -> bytes:
    if value is None:
        return struct.pack(">BH", KIND_NULL, 0)
    if isinstance(value, IntegerVal):
        return struct.pack(">BH", KIND_INTEGER, 8) + struct.pack(">q", value.value)
    if isinstance(value, (CounterVal, GaugeVal, TimeTicksVal)):
        tag = _TAG_OF[value.kind]
        return struct.pack(">BH", tag, 4) + struct.pack(">I", value.value)
    if isinstance(value, OctetsVal):
        if len(value.data) > 0xFFFF:
            raise SnapError("oversize-octets", str(len(value.data)))
        return struct.pack(">BH", KIND_OCTETS, len(value.data)) + value.data
    if isinstance(value, OidVal):
        payload = struct.pack(">H", len(value.oid.arcs))
        payload += b"".join(struct.pack(">I", a) for a in value.oid.arcs)
        return struct.pack(">BH", KIND_OID, len(payload)) + payload
    raise SnapError("bad-kind", type(value).__name__)


def snap_decode(data: bytes) -> SnapMessage:
    view = memoryview(data)
    if len(view) < 2 or bytes(view[:2]) != MAGIC:
        raise SnapError("bad-magic")
    if len(view) < 3:
        raise SnapError("truncated", "no version byte")
    if view[2] != VERSION:
        raise SnapError("bad-version", str(view[2]))
    if len(view) < 11:
        raise SnapError("truncated", "short header")
    op = view[3]
    if op not in OPS:
        raise SnapError("bad-op", str(op))
    request_id = struct.unpack(">I", view[4:8])[0]
    error_code = view[8]
    count = struct.unpack(">H", view[9:11])[0]
    if count > MAX_VARBINDS:
        raise SnapError("too-many-varbinds", str(count))
    pos = 11
    varbinds: list[tuple[Oid, Optional[ObjectValue]]] = []
    for _ in range(count):
        oid, pos = _decode_oid(view, pos)
        value, pos = _decode_value(view, pos)
        varbinds.append((oid, value))
    if pos != len(view):
        raise SnapError("trailing-bytes", str(len(view) - pos))
    return SnapMessage(op, request_id, error_code, varbinds)


def _decode_oid(view: memoryview, pos: int) -> tuple[Oid, int]:
    if pos + 2 > len(view):
        raise SnapError("truncated", "arc count")
    arc_count = struct.unpack(">H", view[pos:pos + 2])[0]
    pos += 2
    if arc_count == 0:
        raise SnapError("bad-oid", "empty")
    if pos + 4 * arc_count > len(view):
        raise SnapError("truncated", "arcs")
    arcs = struct.unpack(f">{arc_count}I", view[pos:pos + 4 * arc_count])
    return Oid(arcs), pos + 4 * arc_count


def _decode_value(view: memoryview, pos: int) -> tuple[Optional[ObjectValue], int]:
    if pos + 3 > len(view):
        raise SnapError("truncated", "value header")
    kind, length = struct.unpack(">BH", view[pos:pos + 3])
    pos += 3
    if pos + length > len(view):
        raise SnapError("truncated", "value payload")
    payload = bytes(view[pos:pos + length])
    pos += length
    if kind == KIND_NULL:
        if length != 0:
            raise SnapError("bad-length", "null with payload")
        return None, pos
    if kind == KIND_INTEGER:
        if length != 8:
            raise SnapError("bad-length", f"integer length {length}")
        return IntegerVal(struct.unpack(">q", payload)[0]), pos
    if kind in (KIND_COUNTER, KIND_GAUGE, KIND_TICKS):
        if length != 4:
            raise SnapError("bad-length", f"u32 length {length}")
        raw = struct.unpack(">I", payload)[0]
        cls = {KIND_COUNTER: CounterVal, KIND_GAUGE: GaugeVal, KIND_TICKS: TimeTicksVal}[kind]
        return cls(raw), pos
    if kind == KIND_OCTETS:
        return OctetsVal(payload), pos
    if kind == KIND_OID:
        if length < 2:
            raise SnapError("bad-length", "oid value header")
        arc_count = struct.unpack(">H", payload[:2])[0]
        if arc_count == 0 or 2 + 4 * arc_count != length:
            raise SnapError("bad-length", "oid value arcs")
        arcs = struct.unpack(f">{arc_count}I", payload[2:])
        return OidVal(Oid(arcs)), pos
    raise SnapError("bad-tag", str(kind))
