"""Protocol front-ends an embedded agent exposes over its network's store.

agent_serve answers one request against a MibStore and never raises for
request-level problems: errors travel in-band as protocol error codes or
attributes. Native naming conventions: SNAP requests address objects by oid;
TELM and CELL stores register descriptor names as `<element>/<attr>` and
`<imsi>/<key>`, which is what GET paths and record ids resolve against.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from ..mib import (
    MibStore,
    NoSuchObject,
    NoSuchValue,
    ObjectValue,
    OctetsVal,
    Oid,
    ReadOnly,
    TimeTicksVal,
    WrongType,
    oid_parse,
)
from . import SEVERITIES, CellError, CodecError
from .cell import CellRecord, coerce_raw, render_raw
from .snap import (
    ERR_MALFORMED,
    ERR_NO_SUCH_OBJECT,
    ERR_OK,
    ERR_READ_ONLY,
    ERR_WRONG_TYPE,
    OP_GET,
    OP_RESPONSE,
    OP_SET,
    OP_TRAP,
    SnapMessage,
)
from .telm import TelmMessage

PROTOCOLS = ("snap", "telm", "cell")

# Alarm column prefixes for SNAP traps; the wire oid appends the subject's
# row arc, so trap varbinds compose exactly like data varbinds do.
TRAP_SEVERITY_OID = "0.1"
TRAP_CAUSE_OID = "0.2"
TRAP_SOURCE_OID = "0.3"
TRAP_TICKS_OID = "0.4"

AnyMessage = Union[SnapMessage, TelmMessage, CellRecord]


@dataclass(frozen=True)
class TrapEvent:
    """Unsolicited fault notification raised by an agent."""

    source_agent: str
    oid_or_path: str
    severity: str
    cause: str
    timestamp: float

    def __post_init__(self):
        if self.severity not in SEVERITIES:
            raise ValueError(f"bad severity {self.severity!r}")


def _snap_error_code(exc: Exception) -> int:
    if isinstance(exc, (NoSuchObject, NoSuchValue)):
        return ERR_NO_SUCH_OBJECT
    if isinstance(exc, ReadOnly):
        return ERR_READ_ONLY
    if isinstance(exc, WrongType):
        return ERR_WRONG_TYPE
    return ERR_MALFORMED


def _error_name(exc: Exception) -> str:
    for cls, name in ((NoSuchObject, "NoSuchObject"), (NoSuchValue, "NoSuchValue"),
                      (ReadOnly, "ReadOnly"), (WrongType, "WrongType")):
        if isinstance(exc, cls):
            return name
    return "Malformed"


def agent_serve(store: MibStore, request: AnyMessage) -> AnyMessage:
    if isinstance(request, SnapMessage):
        return _serve_snap(store, request)
    if isinstance(request, TelmMessage):
        return _serve_telm(store, request)
    if isinstance(request, CellRecord):
        return _serve_cell(store, request)
    raise TypeError(f"not a protocol message: {type(request).__name__}")


def _serve_snap(store: MibStore, req: SnapMessage) -> SnapMessage:
    if req.op not in (OP_GET, OP_SET):
        return SnapMessage(OP_RESPONSE, req.request_id, ERR_MALFORMED, [])
    code = ERR_OK
    varbinds: list[tuple[Oid, Optional[ObjectValue]]] = []
    for oid, value in req.varbinds:
        try:
            if req.op == OP_GET:
                varbinds.append((oid, store.get(oid)))
            else:
                if value is None:
                    raise WrongType("set with null value")
                store.set(oid, value)
                varbinds.append((oid, value))
        except Exception as exc:
            if code == ERR_OK:
                code = _snap_error_code(exc)
            varbinds.append((oid, None))
    return SnapMessage(OP_RESPONSE, req.request_id, code, varbinds)


def _element_attrs(store: MibStore, path: str) -> list[tuple[str, Oid, str]]:
    """(leaf, oid, kind) of every descriptor one level under path, oid order."""
    prefix = path + "/"
    found = []
    for desc in store.descriptors():
        if desc.name.startswith(prefix) and "/" not in desc.name[len(prefix):]:
            found.append((desc.name[len(prefix):], desc.oid, desc.kind))
    found.sort(key=lambda item: item[1].arcs)
    return found


def _serve_telm(store: MibStore, req: TelmMessage) -> TelmMessage:
    if req.verb not in ("GET", "SET"):
        return TelmMessage("RESP", req.path, req.tag,
                           [("err", OctetsVal(b"Malformed"))])
    attrs: list[tuple[str, Optional[ObjectValue]]] = []
    error: Optional[str] = None
    if req.verb == "GET" and not req.attrs:
        element = _element_attrs(store, req.path)
        if not element:
            return TelmMessage("RESP", req.path, req.tag,
                               [("err", OctetsVal(b"NoSuchObject"))])
        for leaf, oid, _ in element:
            try:
                attrs.append((leaf, store.get(oid)))
            except NoSuchValue:
                continue
    else:
        for name, value in req.attrs:
            try:
                desc = store.descriptor_by_name(f"{req.path}/{name}")
                if req.verb == "GET":
                    attrs.append((name, store.get(desc.oid)))
                else:
                    if value is None:
                        raise WrongType("set with empty value")
                    store.set(desc.oid, value)
                    attrs.append((name, value))
            except Exception as exc:
                if error is None:
                    error = _error_name(exc)
    if error is not None:
        attrs.append(("err", OctetsVal(error.encode("ascii"))))
    return TelmMessage("RESP", req.path, req.tag, attrs)


def _serve_cell(store: MibStore, req: CellRecord) -> CellRecord:
    if req.kind not in ("POLL", "CMD"):
        return CellRecord("REPORT", req.imsi, req.seq, [("err", "Malformed")])
    pairs: list[tuple[str, str]] = []
    error: Optional[str] = None
    if req.kind == "POLL" and not req.pairs:
        subscriber = _element_attrs(store, req.imsi)
        if not subscriber:
            return CellRecord("REPORT", req.imsi, req.seq, [("err", "NoSuchObject")])
        for key, oid, _ in subscriber:
            try:
                pairs.append((key, render_raw(store.get(oid))))
            except NoSuchValue:
                continue
    else:
        for key, raw in req.pairs:
            try:
                desc = store.descriptor_by_name(f"{req.imsi}/{key}")
                if req.kind == "POLL":
                    pairs.append((key, render_raw(store.get(desc.oid))))
                else:
                    store.set(desc.oid, coerce_raw(desc.kind, raw))
                    pairs.append((key, raw))
            except Exception as exc:
                if error is None:
                    error = "WrongType" if isinstance(exc, CellError) else _error_name(exc)
    if error is not None:
        pairs.append(("err", error))
    return CellRecord("REPORT", req.imsi, req.seq, pairs)


def _ticks(timestamp: float) -> TimeTicksVal:
    return TimeTicksVal(max(0, min(2**32 - 1, round(timestamp * 100))))


def emit_trap(event: TrapEvent, protocol: str, seq: int = 0) -> AnyMessage:
    """Build the protocol form of a trap. Traps always correlate as 0.

    event.oid_or_path is the native subject: the row ordinal for SNAP, the
    element path for TELM, the imsi (possibly name-qualified) for CELL.
    """
    if protocol == "snap":
        row = int(event.oid_or_path)
        return SnapMessage(OP_TRAP, 0, ERR_OK, [
            (oid_parse(f"{TRAP_SEVERITY_OID}.{row}"), OctetsVal.of_text(event.severity)),
            (oid_parse(f"{TRAP_CAUSE_OID}.{row}"), OctetsVal.of_text(event.cause)),
            (oid_parse(f"{TRAP_SOURCE_OID}.{row}"), OctetsVal.of_text(event.source_agent)),
            (oid_parse(f"{TRAP_TICKS_OID}.{row}"), _ticks(event.timestamp)),
        ])
    if protocol == "telm":
        return TelmMessage("EVT", event.oid_or_path, 0, [
            ("sev", OctetsVal.of_text(event.severity)),
            ("cause", OctetsVal.of_text(event.cause)),
            ("ts", _ticks(event.timestamp)),
        ])
    if protocol == "cell":
        # ats, not ts: alert keys share the per-imsi namespace with data keys
        imsi = event.oid_or_path.split("/", 1)[0]
        return CellRecord("ALERT", imsi, seq, [
            ("sev", event.severity),
            ("cause", event.cause),
            ("src", event.source_agent),
            ("ats", str(_ticks(event.timestamp).value)),
        ])
    raise CodecError("bad-protocol", protocol)
