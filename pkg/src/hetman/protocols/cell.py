"""CELL: fixed-field record protocol of the cellular network.

One newline-terminated ASCII record per message:

    CELL|<kind>|<id>|<seq>|k1:v1,k2:v2\n

Kinds: POLL, REPORT, CMD, ALERT. The id is a 15-digit subscriber id, seq an
unsigned 16-bit sequence number. Pair values are protocol-native raw text
(no value typing on the wire); the pair splits on the first colon, so values
may themselves contain colons. A record never exceeds 512 bytes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..mib import (
    CounterVal,
    GaugeVal,
    IntegerVal,
    ObjectValue,
    OctetsVal,
    Oid,
    OidVal,
    TimeTicksVal,
    MibError,
    oid_parse,
)
from . import CellError

KINDS = ("POLL", "REPORT", "CMD", "ALERT")
MAX_RECORD = 512

_ID = re.compile(r"^[0-9]{15}$")
_KEY = re.compile(r"^[A-Za-z0-9_]+$")
_VALUE_BAD = re.compile(r"[|,\n\r]")


@dataclass
class CellRecord:
    """One CELL record; pair values stay raw text at this layer."""

    kind: str
    imsi: str
    seq: int
    pairs: list[tuple[str, str]] = field(default_factory=list)


def cell_encode(rec: CellRecord) -> str:
    if rec.kind not in KINDS:
        raise CellError("bad-kind", rec.kind)
    if not _ID.match(rec.imsi):
        raise CellError("bad-id", rec.imsi)
    if not (0 <= rec.seq <= 0xFFFF):
        raise CellError("malformed", f"seq {rec.seq}")
    rendered = []
    for key, value in rec.pairs:
        if not _KEY.match(key):
            raise CellError("malformed", f"key {key!r}")
        if _VALUE_BAD.search(value):
            raise CellError("malformed", f"value {value!r}")
        rendered.append(f"{key}:{value}")
    record = f"CELL|{rec.kind}|{rec.imsi}|{rec.seq}|{','.join(rendered)}\n"
    if len(record.encode("ascii", errors="replace")) > MAX_RECORD:
        raise CellError("oversize", str(len(record)))
    return record


def cell_decode(text: str) -> CellRecord:
    if len(text.encode("utf-8", errors="replace")) > MAX_RECORD:
        raise CellError("oversize", str(len(text)))
    if text.endswith("\n"):
        text = text[:-1]
    fields = text.split("|")
    if fields[0] != "CELL":
        raise CellError("bad-kind", "prefix mismatch")
    if len(fields) != 5:
        raise CellError("malformed", f"{len(fields)} fields")
    _, kind, imsi, seq_text, blob = fields
    if kind not in KINDS:
        raise CellError("bad-kind", kind)
    if not _ID.match(imsi):
        raise CellError("bad-id", imsi)
    if not seq_text.isdigit() or int(seq_text) > 0xFFFF:
        raise CellError("malformed", f"seq {seq_text!r}")
    pairs: list[tuple[str, str]] = []
    if blob:
        for chunk in blob.split(","):
            key, colon, value = chunk.partition(":")
            if not colon or not _KEY.match(key):
                raise CellError("malformed", chunk)
            pairs.append((key, value))
    return CellRecord(kind, imsi, int(seq_text), pairs)


def render_raw(value: ObjectValue) -> str:
    """Protocol-native rendering: numbers as decimal, octets as text."""
    if isinstance(value, (IntegerVal, CounterVal, GaugeVal, TimeTicksVal)):
        return str(value.value)
    if isinstance(value, OidVal):
        return value.oid.text()
    if isinstance(value, OctetsVal):
        return value.data.decode("ascii", errors="replace")
    raise CellError("malformed", type(value).__name__)


def coerce_raw(kind: str, text: str) -> ObjectValue:
    """Type a raw pair value using the target object's value kind."""
    try:
        if kind == "i":
            if not (text.isdigit() or (text.startswith("-") and text[1:].isdigit())):
                raise CellError("malformed", f"int {text!r}")
            return IntegerVal(int(text))
        if kind in ("c", "g", "t"):
            if not text.isdigit():
                raise CellError("malformed", f"u32 {text!r}")
            cls = {"c": CounterVal, "g": GaugeVal, "t": TimeTicksVal}[kind]
            return cls(int(text))
        if kind == "s":
            return OctetsVal(text.encode("ascii", errors="replace"))
        if kind == "o":
            return OidVal(oid_parse(text))
    except MibError as exc:
        raise CellError("malformed", str(exc))
    raise CellError("malformed", f"kind {kind!r}")
