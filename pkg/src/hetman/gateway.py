"""Five-stage translation gateway between native agent protocols and the
common model.

Message flow is symmetric: anything entering the pipeline (a frame from a
network or a generic request from the manager side) is accepted, anything
leaving it (a frame toward a network or a stored result) has passed every
stage in between. The stage counters in PipelineStats follow that reading,
which is what makes `dispatched <= accepted` hold structurally.

Native naming convention shared with the rule tables: to_generic rules carry
full wire names (a complete oid for SNAP, `<path>/<attr>` for TELM,
`<imsi>/<key>` for CELL) while from_generic rules carry subject-free column
names; the rebuilder composes column + subject back into the wire name.
"""

from __future__ import annotations

import socket
import struct
import threading
import time
from dataclasses import dataclass
from typing import Callable, Optional

from .cim import CimInstance, Origin, RuleTable, Schema
from .mib import MibError, ObjectValue, OctetsVal, TimeTicksVal, oid_parse
from .protocols import CellError, CodecError
from .protocols.agent import AnyMessage
from .protocols.cell import CellRecord, cell_decode, cell_encode, coerce_raw, render_raw
from .protocols.snap import (
    MAX_VARBINDS,
    OP_GET,
    OP_RESPONSE,
    OP_SET,
    OP_TRAP,
    SnapMessage,
    snap_decode,
    snap_encode,
)
from .protocols.telm import TelmMessage, telm_decode, telm_encode

READ_REQUEST = "ReadRequest"
WRITE_REQUEST = "WriteRequest"
READ_RESPONSE = "ReadResponse"
WRITE_RESPONSE = "WriteResponse"
INDICATION = "Indication"
KINDS = (READ_REQUEST, WRITE_REQUEST, READ_RESPONSE, WRITE_RESPONSE, INDICATION)

STATUS_OK = "ok"
# wire error code <-> status text, shared vocabulary for all three protocols
_SNAP_STATUS = {0: STATUS_OK, 1: "NoSuchObject", 2: "ReadOnly",
                3: "WrongType", 4: "Malformed"}
_SNAP_CODE = {text: code for code, text in _SNAP_STATUS.items()}
_SNAP_CODE["NoSuchValue"] = 1

MAX_FRAME = 1 << 20


class GatewayError(Exception):
    """Pipeline failure; `code` is one of the stable error identifiers."""

    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code
        self.detail = detail


class TransportDown(GatewayError):
    def __init__(self, detail: str):
        super().__init__("transport-down", detail)


@dataclass(frozen=True)
class RouteEntry:
    network: str
    protocol: str
    host: str
    port: int

    @property
    def relay_id(self) -> str:
        return f"relay-{self.network}"

    @property
    def address(self) -> str:
        return f"{self.host}:{self.port}"


class RouteTable:
    def __init__(self, entries: list[RouteEntry]):
        self.entries: dict[str, RouteEntry] = {}
        for entry in entries:
            if entry.network in self.entries:
                raise GatewayError("bad-route", f"duplicate network {entry.network}")
            if entry.protocol not in ("snap", "telm", "cell"):
                raise GatewayError("bad-route", f"protocol {entry.protocol!r}")
            self.entries[entry.network] = entry

    def get(self, network: str) -> RouteEntry:
        try:
            return self.entries[network]
        except KeyError:
            raise GatewayError("unknown-network", network)

    def networks(self) -> list[str]:
        return sorted(self.entries)


def parse_routes(text: str) -> RouteTable:
    entries = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("|")
        if len(parts) != 3:
            raise GatewayError("bad-route", f"line {lineno}: expected 3 fields")
        network, protocol, address = parts
        host, sep, port = address.rpartition(":")
        if not sep or not port.isdigit():
            raise GatewayError("bad-route", f"line {lineno}: address {address!r}")
        entries.append(RouteEntry(network, protocol, host, int(port)))
    return RouteTable(entries)


@dataclass
class GenericMessage:
    kind: str
    correlator: int
    origin: Origin
    items: list[tuple[str, str, Optional[ObjectValue]]]
    status: str = STATUS_OK

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GatewayError("bad-kind", self.kind)
        if self.kind == INDICATION and self.correlator != 0:
            raise GatewayError("bad-kind", "indication correlator must be 0")


@dataclass
class PipelineStats:
    accepted: int = 0
    extracted: int = 0
    translated: int = 0
    rebuilt: int = 0
    dispatched: int = 0
    errored: int = 0

    def as_dict(self) -> dict[str, int]:
        return {
            "accepted": self.accepted,
            "extracted": self.extracted,
            "translated": self.translated,
            "rebuilt": self.rebuilt,
            "dispatched": self.dispatched,
            "errored": self.errored,
        }


@dataclass
class NativeDraft:
    """A message translated from_generic but not yet assembled for the wire."""

    protocol: str
    kind: str
    subject: str
    correlator: int
    items: list[tuple[str, Optional[ObjectValue]]]
    status: str = STATUS_OK


def _agent_status(status: str) -> str:
    # strip the partial-translation note appended after the agent's own status
    return status.split(";", 1)[0]


def _with_notes(status: str, notes: list[str]) -> str:
    if not notes:
        return status
    return f"{status};no-rule:{','.join(notes)}"


def _split_subject(protocol: str, native_name: str) -> tuple[str, str]:
    """Full wire name -> (column, subject)."""
    if protocol == "snap":
        column, _, subject = native_name.rpartition(".")
        return (column, subject) if column else (native_name, "")
    subject, sep, column = native_name.rpartition("/")
    return (column, subject) if sep else (native_name, "")


def translate_to_generic(msg: AnyMessage, network: str, rules: RuleTable,
                         schema: Schema) -> tuple[GenericMessage, list[str]]:
    """Native message -> generic message plus unmapped-name notes."""
    if isinstance(msg, SnapMessage):
        protocol = "snap"
        kind = {OP_GET: READ_REQUEST, OP_SET: WRITE_REQUEST,
                OP_RESPONSE: READ_RESPONSE, OP_TRAP: INDICATION}[msg.op]
        correlator = msg.request_id
        status = _SNAP_STATUS[msg.error_code]
        native: list[tuple[str, object]] = [(oid.text(), value)
                                            for oid, value in msg.varbinds]
        subjects = {oid.arcs[-1] for oid, _ in msg.varbinds if len(oid.arcs) > 1}
        subject = str(subjects.pop()) if len(subjects) == 1 else ""
    elif isinstance(msg, TelmMessage):
        protocol = "telm"
        kind = {"GET": READ_REQUEST, "SET": WRITE_REQUEST,
                "RESP": READ_RESPONSE, "EVT": INDICATION}[msg.verb]
        correlator = msg.tag
        subject = msg.path
        status = STATUS_OK
        native = []
        for name, value in msg.attrs:
            if name == "err":
                status = value.text() if isinstance(value, OctetsVal) else "Malformed"
            else:
                native.append((f"{msg.path}/{name}", value))
    elif isinstance(msg, CellRecord):
        protocol = "cell"
        kind = {"POLL": READ_REQUEST, "CMD": WRITE_REQUEST,
                "REPORT": READ_RESPONSE, "ALERT": INDICATION}[msg.kind]
        correlator = msg.seq
        subject = msg.imsi
        status = STATUS_OK
        native = []
        for key, raw in msg.pairs:
            if key == "err":
                status = raw
            else:
                native.append((f"{msg.imsi}/{key}", raw))
    else:
        raise GatewayError("bad-kind", type(msg).__name__)

    request = kind in (READ_REQUEST, WRITE_REQUEST)
    items: list[tuple[str, str, Optional[ObjectValue]]] = []
    notes: list[str] = []
    for name, value in native:
        rule = rules.to_generic(protocol, name)
        if rule is None:
            notes.append(name)
            continue
        if protocol == "cell":
            # records carry raw text; type it by the target property
            if value == "" and request:
                value = None
            elif isinstance(value, str):
                prop = schema.require(rule.cim_class).property(rule.cim_property)
                try:
                    value = coerce_raw(prop.kind, value)
                except CellError as exc:
                    raise GatewayError("untranslatable",
                                       f"{name}: {exc.code}") from exc
        items.append((rule.cim_class, rule.cim_property, value))

    if kind == INDICATION:
        correlator = 0
    generic = GenericMessage(kind, correlator, Origin(network, subject, protocol),
                             items, _with_notes(status, notes))
    return generic, notes


def translate_from_generic(generic: GenericMessage, protocol: str,
                           rules: RuleTable) -> tuple[NativeDraft, list[str]]:
    """Generic message -> protocol-shaped draft plus unmapped-name notes."""
    items: list[tuple[str, Optional[ObjectValue]]] = []
    notes = []
    for cls, prop, value in generic.items:
        rule = rules.from_generic(cls, prop, protocol)
        if rule is None:
            notes.append(f"{cls}.{prop}")
            continue
        items.append((rule.native_name, value))
    draft = NativeDraft(protocol, generic.kind, generic.origin.agent,
                        generic.correlator, items,
                        _agent_status(generic.status))
    return draft, notes


def rebuild(draft: NativeDraft, correlator: Optional[Callable[[], int]] = None
            ) -> list[AnyMessage]:
    """Assemble wire messages from a draft, chunking to wire limits.

    `correlator` allocates fresh native correlators for requests; responses
    keep the draft's own and indications correlate as 0. Raises `unencodable`
    when a value cannot be carried by the target protocol.
    """
    request = draft.kind in (READ_REQUEST, WRITE_REQUEST)

    def corr() -> int:
        if request and correlator is not None:
            return correlator()
        return 0 if draft.kind == INDICATION else draft.correlator

    try:
        if draft.protocol == "snap":
            op = {READ_REQUEST: OP_GET, WRITE_REQUEST: OP_SET,
                  READ_RESPONSE: OP_RESPONSE, WRITE_RESPONSE: OP_RESPONSE,
                  INDICATION: OP_TRAP}[draft.kind]
            code = _SNAP_CODE.get(draft.status, 4)
            varbinds = []
            for name, value in draft.items:
                wire = f"{name}.{draft.subject}" if draft.subject else name
                varbinds.append((oid_parse(wire), value))
            chunks = [varbinds[i:i + MAX_VARBINDS]
                      for i in range(0, len(varbinds), MAX_VARBINDS)] or [[]]
            messages: list[AnyMessage] = [
                SnapMessage(op, corr(), code, chunk) for chunk in chunks]
        elif draft.protocol == "telm":
            verb = {READ_REQUEST: "GET", WRITE_REQUEST: "SET",
                    READ_RESPONSE: "RESP", WRITE_RESPONSE: "RESP",
                    INDICATION: "EVT"}[draft.kind]
            attrs = list(draft.items)
            if draft.status != STATUS_OK:
                attrs.append(("err", OctetsVal.of_text(draft.status)))
            messages = [TelmMessage(verb, draft.subject, corr(), attrs)]
        elif draft.protocol == "cell":
            kind = {READ_REQUEST: "POLL", WRITE_REQUEST: "CMD",
                    READ_RESPONSE: "REPORT", WRITE_RESPONSE: "REPORT",
                    INDICATION: "ALERT"}[draft.kind]
            pairs = [(name, "" if value is None else render_raw(value))
                     for name, value in draft.items]
            if draft.status != STATUS_OK:
                pairs.append(("err", draft.status))
            # chunk by encoded size; probe with a placeholder correlator
            chunks_p: list[list[tuple[str, str]]] = [[]]
            for pair in pairs:
                trial = chunks_p[-1] + [pair]
                try:
                    cell_encode(CellRecord(kind, draft.subject, 0, trial))
                    chunks_p[-1] = trial
                except CellError as exc:
                    if exc.code != "oversize" or not chunks_p[-1]:
                        raise
                    cell_encode(CellRecord(kind, draft.subject, 0, [pair]))
                    chunks_p.append([pair])
            messages = [CellRecord(kind, draft.subject, corr(), chunk)
                        for chunk in chunks_p]
        else:
            raise GatewayError("bad-kind", draft.protocol)
        for msg in messages:
            frame_message(draft.protocol, msg)  # probe wire validity now
        return messages
    except (CodecError, MibError, ValueError) as exc:
        raise GatewayError("unencodable", str(exc)) from exc


def frame_message(protocol: str, msg: AnyMessage) -> bytes:
    if protocol == "snap":
        body = snap_encode(msg)
        return struct.pack(">I", len(body)) + body
    if protocol == "telm":
        return telm_encode(msg).encode("ascii")
    return cell_encode(msg).encode("ascii")


def decode_frame(protocol: str, raw: bytes) -> AnyMessage:
    if protocol == "snap":
        return snap_decode(raw)
    if protocol == "telm":
        return telm_decode(raw.decode("ascii", errors="replace"))
    return cell_decode(raw.decode("ascii", errors="replace"))


class FrameReader:
    """Incremental reframer for one stream: feed bytes, pop whole frames."""

    def __init__(self, protocol: str):
        self.protocol = protocol
        self._buf = b""

    def feed(self, data: bytes) -> list[bytes]:
        self._buf += data
        frames = []
        while True:
            frame = self._pop()
            if frame is None:
                return frames
            frames.append(frame)

    def _pop(self) -> Optional[bytes]:
        if self.protocol == "snap":
            if len(self._buf) < 4:
                return None
            length = struct.unpack(">I", self._buf[:4])[0]
            if length > MAX_FRAME:
                raise GatewayError("bad-frame", f"length {length}")
            if len(self._buf) < 4 + length:
                return None
            frame, self._buf = self._buf[4:4 + length], self._buf[4 + length:]
            return frame
        idx = self._buf.find(b"\n")
        if idx < 0:
            if len(self._buf) > MAX_FRAME:
                raise GatewayError("bad-frame", "unterminated line")
            return None
        frame, self._buf = self._buf[:idx + 1], self._buf[idx + 1:]
        return frame


class TcpTransport:
    """Synchronous request/response link to one network's relay endpoint.

    Connection errors and timeouts retry twice with 250 ms spacing before
    surfacing as TransportDown / timeout. Each retry reconnects; the served
    side treats every connection independently.
    """

    RETRIES = 2
    RETRY_DELAY = 0.25

    def __init__(self, entry: RouteEntry, timeout: float = 2.0):
        self.entry = entry
        self.timeout = timeout
        self._sock: Optional[socket.socket] = None
        self._reader = FrameReader(entry.protocol)
        self._lock = threading.Lock()

    def _connect(self) -> socket.socket:
        if self._sock is None:
            self._sock = socket.create_connection(
                (self.entry.host, self.entry.port), timeout=self.timeout)
            self._reader = FrameReader(self.entry.protocol)
        return self._sock

    def _reset(self):
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
            self._sock = None

    def exchange(self, frame: bytes) -> bytes:
        with self._lock:
            last: Exception = TransportDown(self.entry.address)
            for attempt in range(1 + self.RETRIES):
                if attempt:
                    time.sleep(self.RETRY_DELAY)
                try:
                    sock = self._connect()
                    sock.sendall(frame)
                    while True:
                        data = sock.recv(65536)
                        if not data:
                            raise ConnectionError("peer closed")
                        frames = self._reader.feed(data)
                        if frames:
                            return frames[0]
                except socket.timeout:
                    last = GatewayError("timeout", self.entry.address)
                    self._reset()
                except OSError as exc:
                    last = TransportDown(f"{self.entry.address}: {exc}")
                    self._reset()
            raise last

    def close(self):
        with self._lock:
            self._reset()


class TrapListener:
    """Quiet connection that only ever reads: the served side pushes traps
    to clients that have sent nothing."""

    def __init__(self, entry: RouteEntry, timeout: float = 0.5):
        self.entry = entry
        self.timeout = timeout
        self._sock: Optional[socket.socket] = None
        self._reader = FrameReader(entry.protocol)
        self.closed = False

    def poll(self) -> list[bytes]:
        """Collect any pushed frames; returns [] on idle timeout."""
        if self.closed:
            return []
        try:
            if self._sock is None:
                self._sock = socket.create_connection(
                    (self.entry.host, self.entry.port), timeout=self.timeout)
                self._reader = FrameReader(self.entry.protocol)
            data = self._sock.recv(65536)
            if not data:
                self._drop()
                return []
            return self._reader.feed(data)
        except socket.timeout:
            return []
        except OSError:
            self._drop()
            return []

    def _drop(self):
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
            self._sock = None

    def close(self):
        self.closed = True
        self._drop()


def _rule_subjects(rules: RuleTable, protocol: str
                   ) -> dict[str, list[tuple[str, str, str]]]:
    """subject -> [(full_name, class, property)] for pollable data rules."""
    subjects: dict[str, list[tuple[str, str, str]]] = {}
    for rule in rules.rules:
        if rule.protocol != protocol or rule.direction == "from_generic":
            continue
        if rule.cim_class == "Alarm":
            continue  # alarm columns arrive as indications, never polled
        _, subject = _split_subject(protocol, rule.native_name)
        if not subject:
            continue
        subjects.setdefault(subject, []).append(
            (rule.native_name, rule.cim_class, rule.cim_property))
    return subjects


def _name_order(protocol: str):
    if protocol == "snap":
        return lambda name: oid_parse(name).arcs
    return lambda name: name


def _has_prefix(name: str, prefix: str, sep: str) -> bool:
    if name == prefix or prefix == "":
        return True
    if prefix.endswith(sep):
        return name.startswith(prefix)
    return name.startswith(prefix + sep)


class Gateway:
    """Pipeline, route table, and the central instance store."""

    def __init__(self, routes: RouteTable, rules: RuleTable, schema: Schema,
                 transport_factory: Optional[Callable[[RouteEntry], object]] = None,
                 on_indication: Optional[Callable[[GenericMessage], None]] = None,
                 on_fault: Optional[Callable[[str, str, str], None]] = None):
        self.routes = routes
        self.rules = rules
        self.schema = schema
        self.stats = PipelineStats()
        self.instances: dict[tuple[str, str], CimInstance] = {}
        self.on_indication = on_indication
        self.on_fault = on_fault or (lambda network, subject, cause: None)
        self._factory = transport_factory or TcpTransport
        self._transports: dict[str, object] = {}
        self._lock = threading.RLock()
        self._generic_corr = 0
        self._native_corr: dict[str, int] = {}
        self.sim_clock = 0.0
        self.last_poll: dict[str, float] = {}

    # correlator allocation

    def next_correlator(self) -> int:
        with self._lock:
            self._generic_corr += 1
            return self._generic_corr

    def _native_correlator(self, network: str, protocol: str) -> int:
        limit = {"snap": 2**32, "telm": 2**31, "cell": 2**16}[protocol]
        with self._lock:
            nxt = self._native_corr.get(network, 0) + 1
            if nxt >= limit:
                nxt = 1
            self._native_corr[network] = nxt
            return nxt

    def transport(self, network: str):
        entry = self.routes.get(network)
        with self._lock:
            if network not in self._transports:
                self._transports[network] = self._factory(entry)
            return self._transports[network]

    def close(self):
        with self._lock:
            for transport in self._transports.values():
                transport.close()
            self._transports.clear()

    # the five stages

    def accept(self, raw: bytes, network: str) -> tuple[bytes, RouteEntry]:
        entry = self.routes.get(network)  # raises unknown-network
        with self._lock:
            self.stats.accepted += 1
        return raw, entry

    def extract(self, raw: bytes, entry: RouteEntry) -> AnyMessage:
        try:
            msg = decode_frame(entry.protocol, raw)
        except CodecError:
            with self._lock:
                self.stats.errored += 1
            raise
        with self._lock:
            self.stats.extracted += 1
        return msg

    def translate(self, msg: AnyMessage, entry: RouteEntry) -> GenericMessage:
        try:
            generic, notes = translate_to_generic(msg, entry.network, self.rules,
                                                  self.schema)
        except GatewayError:
            with self._lock:
                self.stats.errored += 1
            raise
        for name in notes:
            self.on_fault(entry.network, generic.origin.agent, f"no-rule:{name}")
        with self._lock:
            if generic.items or not notes:
                self.stats.translated += 1
            else:
                self.stats.errored += 1
        self._observe_clock(generic)
        return generic

    def rebuild_outbound(self, generic: GenericMessage, entry: RouteEntry
                         ) -> list[AnyMessage]:
        draft, notes = translate_from_generic(generic, entry.protocol, self.rules)
        for name in notes:
            self.on_fault(entry.network, generic.origin.agent, f"no-rule:{name}")
        if notes and not draft.items and generic.items:
            with self._lock:
                self.stats.errored += 1
            raise GatewayError("no-rule", ",".join(notes))
        messages = rebuild(
            draft, lambda: self._native_correlator(entry.network, entry.protocol))
        with self._lock:
            self.stats.rebuilt += len(messages)
        return messages

    def dispatch(self, msg: AnyMessage, entry: RouteEntry) -> bytes:
        transport = self.transport(entry.network)
        frame = frame_message(entry.protocol, msg)
        try:
            response = transport.exchange(frame)
        except GatewayError:
            with self._lock:
                self.stats.errored += 1
            raise
        with self._lock:
            self.stats.dispatched += 1
        return response

    # composite flows

    def ingest_frame(self, raw: bytes, network: str) -> Optional[GenericMessage]:
        """Inbound path: accept -> extract -> translate -> store/notify."""
        raw, entry = self.accept(raw, network)
        msg = self.extract(raw, entry)
        generic = self.translate(msg, entry)
        if generic.kind == INDICATION:
            if self.on_indication is not None:
                self.on_indication(generic)
        else:
            self._store(generic)
        return generic

    def execute(self, generic: GenericMessage) -> GenericMessage:
        """Outbound request flow; returns the translated response."""
        entry = self.routes.get(generic.origin.network)
        with self._lock:
            self.stats.accepted += 1  # manager-side entry into the pipeline
        messages = self.rebuild_outbound(generic, entry)
        merged: Optional[GenericMessage] = None
        for msg in messages:
            raw = self.dispatch(msg, entry)
            raw, _ = self.accept(raw, entry.network)
            response = self.extract(raw, entry)
            translated = self.translate(response, entry)
            wire_corr = _wire_correlator(msg)
            if translated.kind != INDICATION and translated.correlator != wire_corr:
                with self._lock:
                    self.stats.errored += 1
                raise GatewayError("correlator-mismatch",
                                   f"{translated.correlator} != {wire_corr}")
            if merged is None:
                merged = translated
                merged.correlator = generic.correlator
                if generic.kind == WRITE_REQUEST:
                    merged.kind = WRITE_RESPONSE
            else:
                merged.items.extend(translated.items)
                if _agent_status(merged.status) == STATUS_OK:
                    merged.status = translated.status
        assert merged is not None
        return merged

    # instance store

    def _observe_clock(self, generic: GenericMessage):
        ticks = [v.value for _, prop, v in generic.items
                 if prop == "observedTicks" and isinstance(v, TimeTicksVal)]
        if ticks:
            with self._lock:
                self.sim_clock = max(self.sim_clock, max(ticks) / 100.0)

    def _store(self, generic: GenericMessage) -> list[CimInstance]:
        by_class: dict[str, dict[str, ObjectValue]] = {}
        for cls, prop, value in generic.items:
            if value is not None:
                by_class.setdefault(cls, {})[prop] = value
        stored = []
        with self._lock:
            for cls_name, props in by_class.items():
                cls = self.schema.get(cls_name)
                if cls is None:
                    continue
                key_val = props.get(cls.key)
                if not isinstance(key_val, OctetsVal):
                    continue  # unidentifiable fragment
                key = key_val.text()
                inst = self.instances.get((cls_name, key))
                if inst is None:
                    inst = CimInstance(cls_name, {})
                    self.instances[(cls_name, key)] = inst
                inst.properties.update(props)
                inst.origin = generic.origin
                inst.observed_at = self.sim_clock
                stored.append(inst)
        return stored

    def enumerate_instances(self, class_name: str,
                            network: Optional[str] = None) -> list[CimInstance]:
        with self._lock:
            found = [inst for (cls, _), inst in sorted(self.instances.items())
                     if cls == class_name]
        if network is not None:
            found = [inst for inst in found
                     if inst.origin and inst.origin.network == network]
        return found

    def get_instance(self, class_name: str, key: str) -> Optional[CimInstance]:
        with self._lock:
            return self.instances.get((class_name, key))

    # manager operations

    def poll_cycle(self) -> list[CimInstance]:
        """One pass over every routed network; per-subject failures become
        fault callbacks, never abort the cycle."""
        updated = []
        for network in self.routes.networks():
            entry = self.routes.get(network)
            subjects = _rule_subjects(self.rules, entry.protocol)
            for subject in sorted(subjects):
                items = [(cls, prop, None) for _, cls, prop in subjects[subject]]
                generic = GenericMessage(
                    READ_REQUEST, self.next_correlator(),
                    Origin(network, subject, entry.protocol), items)
                try:
                    response = self.execute(generic)
                except GatewayError as exc:
                    self.on_fault(network, subject,
                                  "agent-unreachable" if exc.code in
                                  ("timeout", "transport-down") else exc.code)
                    continue
                has_values = any(v is not None for _, _, v in response.items)
                if not has_values and _agent_status(response.status) != STATUS_OK:
                    self.on_fault(network, subject, "agent-unreachable")
                    continue
                updated.extend(self._store(response))
            with self._lock:
                self.last_poll[network] = self.sim_clock
        return updated

    def modify_instance(self, class_name: str, key: str, prop: str,
                        value: ObjectValue) -> CimInstance:
        inst = self.get_instance(class_name, key)
        if inst is None or inst.origin is None:
            raise GatewayError("no-instance", f"{class_name}.{key}")
        generic = GenericMessage(WRITE_REQUEST, self.next_correlator(),
                                 inst.origin, [(class_name, prop, value)])
        response = self.execute(generic)
        status = _agent_status(response.status)
        if status != STATUS_OK:
            raise GatewayError("write-rejected", status)
        # write responses echo only the written property, so update in place
        with self._lock:
            for cls, echoed_prop, echoed in response.items:
                if cls == class_name and echoed is not None:
                    inst.properties[echoed_prop] = echoed
        return self.get_instance(class_name, key)

    # native-name operations (direct manager access, no rule translation)

    def native_request(self, network: str, write: bool,
                       items: list[tuple[str, Optional[ObjectValue]]]
                       ) -> list[tuple[str, Optional[ObjectValue], str]]:
        """Read or write explicit native names; returns (name, value, status)."""
        entry = self.routes.get(network)
        grouped: dict[str, list[tuple[str, Optional[ObjectValue]]]] = {}
        for name, value in items:
            column, subject = _split_subject(entry.protocol, name)
            grouped.setdefault(subject, []).append((column, value))
        results = []
        kind = WRITE_REQUEST if write else READ_REQUEST
        for subject in sorted(grouped):
            draft = NativeDraft(entry.protocol, kind, subject, 0, grouped[subject])
            with self._lock:
                self.stats.accepted += 1
            messages = rebuild(
                draft, lambda: self._native_correlator(network, entry.protocol))
            with self._lock:
                self.stats.rebuilt += len(messages)
            for msg in messages:
                raw = self.dispatch(msg, entry)
                raw, _ = self.accept(raw, entry.network)
                response = self.extract(raw, entry)
                results.extend(self._native_response_items(subject, response))
        return results

    def _native_response_items(self, subject: str, response: AnyMessage
                               ) -> list[tuple[str, Optional[ObjectValue], str]]:
        out: list[tuple[str, Optional[ObjectValue], str]] = []
        if isinstance(response, SnapMessage):
            status = _SNAP_STATUS.get(response.error_code, "Malformed")
            for oid, value in response.varbinds:
                out.append((oid.text(), value,
                            STATUS_OK if value is not None else status))
            return out
        status = STATUS_OK
        rows: list[tuple[str, Optional[ObjectValue]]] = []
        if isinstance(response, TelmMessage):
            for name, value in response.attrs:
                if name == "err":
                    status = value.text() if isinstance(value, OctetsVal) else "Malformed"
                else:
                    rows.append((f"{response.path}/{name}", value))
        elif isinstance(response, CellRecord):
            for key, raw in response.pairs:
                if key == "err":
                    status = raw
                else:
                    rows.append((f"{response.imsi}/{key}",
                                 self._type_cell_value(response.imsi, key, raw)))
        for name, value in rows:
            out.append((name, value, STATUS_OK if value is not None else status))
        if not rows and status != STATUS_OK:
            out.append((subject, None, status))
        return out

    def _type_cell_value(self, imsi: str, key: str, raw: str
                         ) -> Optional[ObjectValue]:
        """Record fields are untyped text; recover the kind from the rule
        table when one names this field, else carry the text as octets."""
        rule = self.rules.to_generic("cell", f"{imsi}/{key}")
        if rule is not None:
            prop = self.schema.require(rule.cim_class).property(rule.cim_property)
            try:
                return coerce_raw(prop.kind, raw)
            except CellError:
                return None
        return OctetsVal.of_text(raw)

    def walk_network(self, network: str, prefix: str = ""
                     ) -> list[tuple[str, Optional[ObjectValue], str]]:
        """Read every rule-known data object on the network, name-ordered
        (true oid order where names are oids)."""
        entry = self.routes.get(network)
        subjects = _rule_subjects(self.rules, entry.protocol)
        sep = "." if entry.protocol == "snap" else "/"
        names = [name for group in subjects.values() for name, _, _ in group
                 if _has_prefix(name, prefix, sep)]
        names.sort(key=_name_order(entry.protocol))
        results = self.native_request(network, False, [(n, None) for n in names])
        order = {name: i for i, name in enumerate(names)}
        results.sort(key=lambda item: order.get(item[0], len(order)))
        # a walk lists what is there; registered-but-dark rows stay out
        return [r for r in results if r[2] == STATUS_OK]


def _wire_correlator(msg: AnyMessage) -> Optional[int]:
    if isinstance(msg, SnapMessage):
        return msg.request_id
    if isinstance(msg, TelmMessage):
        return msg.tag
    if isinstance(msg, CellRecord):
        return msg.seq
    return None
