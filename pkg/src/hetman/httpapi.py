"""Management plane over HTTP.

`Manager` composes the gateway with the five management engines and runs the
background collection threads (poll cycle, trap listeners, periodic backup).
`serve_api` exposes it to clients: CIM-XML on /cimom, JSON everywhere else.
The API is the only externally reachable mutation path, and every mutating
route passes an access check before any gateway traffic happens.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import re
import secrets
import threading
import time
import urllib.parse
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Callable, Optional

from .cim import (
    CimError,
    CimInstance,
    RuleTable,
    Schema,
    cim_to_xml,
    instances_to_xml,
)
from .fcaps import (
    AcctEngine,
    ConfigEngine,
    DEFAULT_BACKUP_PERIOD,
    FaultEngine,
    FcapsError,
    PerfEngine,
    PerfSample,
    SecEngine,
    parse_access,
    parse_principals,
)
from .gateway import Gateway, GatewayError, RouteEntry, RouteTable, TrapListener
from .mib import ObjectValue, OctetsVal, TimeTicksVal, ValueParseError, value_parse

log = logging.getLogger("hetman.api")

DEFAULT_SESSION_TTL = 3600.0
DEFAULT_POLL_PERIOD = 5.0
MAX_BODY = 1 << 20

# the always-on desk credentials; real deployments pass principal files
FALLBACK_PRINCIPALS = "admin|admin\n"
FALLBACK_ACCESS = "".join(f"admin|{action}|*\n" for action in
                          ("read", "write", "ack", "backup", "admin"))


class ApiError(Exception):
    def __init__(self, status: int, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.status = status
        self.code = code
        self.detail = detail


def default_security() -> SecEngine:
    return SecEngine(parse_principals(FALLBACK_PRINCIPALS),
                     parse_access(FALLBACK_ACCESS))


@dataclass
class ApiSession:
    principal: str
    token: str
    issued_at: float
    expires_at: float


class SessionTable:
    """Opaque bearer tokens with a TTL, one principal each."""

    def __init__(self, sec: SecEngine, ttl: float = DEFAULT_SESSION_TTL,
                 clock: Callable[[], float] = time.time):
        self.sec = sec
        self.ttl = ttl
        self.clock = clock
        self._sessions: dict[str, ApiSession] = {}
        self._lock = threading.Lock()

    def login(self, principal: str, secret: str) -> ApiSession:
        if not self.sec.login(principal, secret):
            raise ApiError(401, "bad-credentials", principal)
        now = self.clock()
        session = ApiSession(principal, secrets.token_hex(16), now, now + self.ttl)
        with self._lock:
            self._sessions[session.token] = session
        return session

    def principal_of(self, token: Optional[str]) -> str:
        if not token:
            raise ApiError(401, "no-token")
        now = self.clock()
        with self._lock:
            session = self._sessions.get(token)
            if session is None:
                raise ApiError(401, "unknown-token")
            if now >= session.expires_at:
                del self._sessions[token]
                raise ApiError(401, "expired-token")
        return session.principal


class Manager:
    """Gateway plus engines; one instance backs one `hetman gw` process."""

    def __init__(self, routes: RouteTable, rules: RuleTable, schema: Schema,
                 sec: SecEngine, snap_dir: Path,
                 poll_period: float = DEFAULT_POLL_PERIOD,
                 backup_period: float = DEFAULT_BACKUP_PERIOD,
                 session_ttl: float = DEFAULT_SESSION_TTL,
                 transport_factory: Optional[Callable[[RouteEntry], object]] = None):
        self.faults = FaultEngine()
        self.perf = PerfEngine()
        self.acct = AcctEngine()
        self.sec = sec
        self.sessions = SessionTable(sec, session_ttl)
        self.gateway = Gateway(routes, rules, schema, transport_factory,
                               on_indication=self._on_indication,
                               on_fault=self._on_fault)
        self.config = ConfigEngine(self.gateway, snap_dir, backup_period)
        self.poll_period = poll_period
        self.poll_faults: list[tuple[float, str, str, str]] = []
        self._wire = threading.RLock()  # one request/response exchange at a time
        self._perf_seen: dict[tuple[str, str], float] = {}
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._listeners: list[TrapListener] = []

    # gateway callbacks

    def _on_indication(self, generic) -> None:
        self.faults.ingest(generic, now=self.gateway.sim_clock)

    def _on_fault(self, network: str, subject: str, cause: str) -> None:
        self.poll_faults.append((self.gateway.sim_clock, network, subject, cause))
        del self.poll_faults[:-256]

    # collection

    def poll_once(self) -> list[CimInstance]:
        started = time.monotonic()
        with self._wire:
            updated = self.gateway.poll_cycle()
        elapsed_ms = (time.monotonic() - started) * 1000.0
        now = self.gateway.sim_clock
        for inst in updated:
            self._sample_instance(inst, now)
        self._ingest_sample(PerfSample("gw", "response_time_ms", elapsed_ms, now))
        return updated

    def _sample_instance(self, inst: CimInstance, now: float) -> None:
        ident = inst.properties.get("id")
        if not isinstance(ident, OctetsVal):
            return
        source = ident.text()
        ticks = inst.properties.get("observedTicks")
        at = ticks.value / 100.0 if isinstance(ticks, TimeTicksVal) else now
        permille = inst.properties.get("utilizationPermille",
                                       inst.properties.get("utilization"))
        if permille is not None and hasattr(permille, "value"):
            self._ingest_sample(PerfSample(
                source, "utilization", min(permille.value, 1000) / 1000.0, at))
        errors = inst.properties.get("errorCount")
        if errors is not None and hasattr(errors, "value"):
            self._ingest_sample(PerfSample(
                source, "error_count", float(errors.value), at))

    def _ingest_sample(self, sample: PerfSample) -> None:
        # polling a frozen network re-reads the same instant; keep one sample
        key = (sample.source, sample.metric)
        last = self._perf_seen.get(key)
        if last is not None and sample.at <= last:
            return
        self._perf_seen[key] = sample.at
        self.perf.ingest(sample)

    def ingest_trap(self, raw: bytes, network: str) -> None:
        try:
            self.gateway.ingest_frame(raw, network)
        except GatewayError as exc:
            log.debug("trap frame dropped (%s): %s", network, exc)

    # background threads

    def start(self) -> None:
        self._threads.append(threading.Thread(
            target=self._poll_loop, name="hetman-poll", daemon=True))
        for network in self.gateway.routes.networks():
            entry = self.gateway.routes.get(network)
            listener = TrapListener(entry)
            self._listeners.append(listener)
            self._threads.append(threading.Thread(
                target=self._trap_loop, args=(listener, network),
                name=f"hetman-traps-{network}", daemon=True))
        if self.config.period > 0:
            self._threads.append(threading.Thread(
                target=self._backup_loop, name="hetman-backup", daemon=True))
        for thread in self._threads:
            thread.start()

    def _poll_loop(self) -> None:
        while not self._stop.is_set():
            try:
                self.poll_once()
            except Exception:
                log.exception("poll cycle failed")
            self._stop.wait(self.poll_period)

    def _trap_loop(self, listener: TrapListener, network: str) -> None:
        while not self._stop.is_set():
            try:
                for raw in listener.poll():
                    self.ingest_trap(raw, network)
            except Exception:
                log.exception("trap listener failed (%s)", network)
                self._stop.wait(1.0)

    def _backup_loop(self) -> None:
        while not self._stop.wait(self.config.period):
            for network in self.gateway.routes.networks():
                try:
                    with self._wire:
                        self.config.backup(network)
                except FcapsError as exc:
                    log.warning("periodic backup of %s failed: %s", network, exc)

    def close(self) -> None:
        self._stop.set()
        for thread in self._threads:
            thread.join(timeout=5.0)
        for listener in self._listeners:
            listener.close()
        self.gateway.close()

    # serialized gateway operations

    def modify_instance(self, class_name: str, key: str, prop: str,
                        value: ObjectValue) -> CimInstance:
        with self._wire:
            return self.gateway.modify_instance(class_name, key, prop, value)

    def native_request(self, network: str, write: bool, items) -> list:
        with self._wire:
            return self.gateway.native_request(network, write, items)

    def walk_network(self, network: str, prefix: str = "") -> list:
        with self._wire:
            return self.gateway.walk_network(network, prefix)

    def backup(self, network: str):
        with self._wire:
            return self.config.backup(network)

    def restore(self, network: str, snapshot_id: int) -> list[tuple[str, str]]:
        snapshot = self.config.load(network, snapshot_id)
        with self._wire:
            return self.config.restore(network, snapshot)

    # read models

    def views(self, readable: Callable[[str], bool]) -> list[dict]:
        summaries = []
        for network in self.gateway.routes.networks():
            if not readable(network):
                continue
            entry = self.gateway.routes.get(network)
            nodes = attached = 0
            for class_name in sorted(self.gateway.schema.classes):
                for inst in self.gateway.enumerate_instances(class_name, network):
                    nodes += 1
                    value = inst.properties.get("attachment")
                    if isinstance(value, OctetsVal) and value.text():
                        attached += 1
            summaries.append({
                "network": network,
                "protocol": entry.protocol,
                "nodes": nodes,
                "attached": attached,
                "open_alarms": self.faults.open_count(network),
                "last_poll": self.gateway.last_poll.get(network),
            })
        return summaries

    def state_digest(self) -> dict:
        """Canonical snapshot of managed state, for before/after diffing."""
        instances = {}
        for class_name in sorted(self.gateway.schema.classes):
            for inst in self.gateway.enumerate_instances(class_name):
                key = f"{class_name}|{inst.key_value(self.gateway.schema)}"
                instances[key] = {
                    name: value.canonical()
                    for name, value in sorted(inst.properties.items())
                }
        alarms = [a.as_dict() for a in self.faults.alarms()]
        return {"instances": instances, "alarms": alarms}


# request handling


_ROUTES: list[tuple[str, re.Pattern, str]] = [
    ("POST", re.compile(r"^/login$"), "login"),
    ("POST", re.compile(r"^/cimom$"), "cimom"),
    ("GET", re.compile(r"^/views$"), "views"),
    ("GET", re.compile(r"^/alarms$"), "alarms"),
    ("POST", re.compile(r"^/alarms/(?P<alarm_id>\d+)/(?P<verb>ack|resolve)$"),
     "alarm_transition"),
    ("GET", re.compile(r"^/perf$"), "perf"),
    ("GET", re.compile(r"^/stats/pipeline$"), "pipeline_stats"),
    ("GET", re.compile(r"^/config/(?P<network>[^/]+)$"), "config_list"),
    ("POST", re.compile(r"^/config/(?P<network>[^/]+)/backup$"), "config_backup"),
    ("POST", re.compile(r"^/config/(?P<network>[^/]+)/restore$"), "config_restore"),
    ("GET", re.compile(r"^/state$"), "state"),
    ("GET", re.compile(r"^/mib/(?P<network>[^/]+)$"), "mib_walk"),
    ("POST", re.compile(r"^/mib/(?P<network>[^/]+)$"), "mib_request"),
]


def _error_status(exc: Exception) -> tuple[int, str, str]:
    if isinstance(exc, ApiError):
        return exc.status, exc.code, exc.detail
    if isinstance(exc, GatewayError):
        if exc.code in ("transport-down", "timeout"):
            return 502, exc.code, exc.detail
        if exc.code in ("unknown-network", "no-instance"):
            return 404, exc.code, exc.detail
        return 400, exc.code, exc.detail
    if isinstance(exc, CimError):
        status = 404 if exc.code == "unknown-class" else 400
        return status, exc.code, exc.detail
    if isinstance(exc, FcapsError):
        status = {"NoSuchAlarm": 404, "IllegalTransition": 409,
                  "NetworkUnreachable": 502, "bad-snapshot": 404,
                  "bad-sample": 404}.get(exc.code, 400)
        return status, exc.code, exc.detail
    if isinstance(exc, ValueParseError):
        return 400, "bad-value", str(exc)
    raise exc


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "hetman"

    # mute the default stderr chatter; keep it reachable for debugging
    def log_message(self, fmt, *args):
        log.debug("%s %s", self.address_string(), fmt % args)

    @property
    def manager(self) -> Manager:
        return self.server.manager

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def _dispatch(self, method: str) -> None:
        parsed = urllib.parse.urlsplit(self.path)
        self.query = {k: v[-1] for k, v in
                      urllib.parse.parse_qs(parsed.query).items()}
        path = parsed.path
        try:
            if method == "GET" and (path == "/" or path.startswith("/console")):
                self._console(path)
                return
            path_known = False
            for want_method, pattern, name in _ROUTES:
                match = pattern.match(path)
                if not match:
                    continue
                path_known = True
                if method == want_method:
                    getattr(self, f"_op_{name}")(**match.groupdict())
                    return
            if path_known:
                raise ApiError(405, "bad-method", f"{method} {path}")
            raise ApiError(404, "no-route", path)
        except Exception as exc:  # every failure leaves as a typed payload
            try:
                status, code, detail = _error_status(exc)
            except Exception:
                log.exception("unhandled error on %s %s", method, path)
                status, code, detail = 500, "internal", type(exc).__name__
            self._send_json(status, {"error": code, "detail": detail})

    # plumbing

    def _body(self) -> bytes:
        length = int(self.headers.get("Content-Length") or 0)
        if length < 0 or length > MAX_BODY:
            raise ApiError(400, "bad-length", str(length))
        return self.rfile.read(length) if length else b""

    def _json_body(self) -> dict:
        raw = self._body()
        if not raw:
            return {}
        try:
            parsed = json.loads(raw)
        except ValueError as exc:
            raise ApiError(400, "bad-json", str(exc))
        if not isinstance(parsed, dict):
            raise ApiError(400, "bad-json", "object body expected")
        return parsed

    def _send(self, status: int, payload: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def _send_json(self, status: int, obj) -> None:
        payload = json.dumps(obj, sort_keys=True).encode("utf-8")
        self._send(status, payload, "application/json; charset=utf-8")

    def _send_xml(self, status: int, text: str) -> None:
        self._send(status, text.encode("utf-8"), "application/xml; charset=utf-8")

    def _principal(self) -> str:
        return self.manager.sessions.principal_of(
            self.headers.get("X-Hetman-Token"))

    def _allow(self, principal: str, action: str, resource: str) -> None:
        decision = self.manager.sec.check(principal, action, resource)
        if not decision.allowed:
            raise ApiError(403, "denied",
                           f"{action} on {resource}: {decision.reason}")

    def _can_read(self, principal: str) -> Callable[[str], bool]:
        return lambda resource: self.manager.sec.check(
            principal, "read", resource).allowed

    # operations

    def _op_login(self) -> None:
        body = self._json_body()
        principal = body.get("principal")
        secret = body.get("secret")
        if not isinstance(principal, str) or not isinstance(secret, str):
            raise ApiError(400, "bad-login", "principal and secret required")
        session = self.manager.sessions.login(principal, secret)
        self._send_json(200, {"token": session.token,
                              "principal": session.principal,
                              "expires_at": session.expires_at})

    def _op_views(self) -> None:
        principal = self._principal()
        self._send_json(200, self.manager.views(self._can_read(principal)))

    def _op_alarms(self) -> None:
        principal = self._principal()
        readable = self._can_read(principal)
        network = self.query.get("network")
        state = self.query.get("state")
        found = [a.as_dict() for a in self.manager.faults.alarms(network, state)
                 if readable(a.network)]
        limit = self.query.get("limit")
        if limit is not None:
            if not limit.isdigit():
                raise ApiError(400, "bad-limit", limit)
            found = found[:int(limit)]
        self._send_json(200, found)

    def _op_alarm_transition(self, alarm_id: str, verb: str) -> None:
        principal = self._principal()
        alarm = self.manager.faults.get(int(alarm_id))
        self._allow(principal, "ack", alarm.network)
        at = self.manager.gateway.sim_clock
        if verb == "ack":
            alarm = self.manager.faults.ack(alarm.alarm_id, at)
        else:
            alarm = self.manager.faults.resolve(alarm.alarm_id, at)
        self._send_json(200, alarm.as_dict())

    def _op_perf(self) -> None:
        principal = self._principal()
        self._allow(principal, "read", "gw")
        source = self.query.get("source")
        metric = self.query.get("metric")
        window = self.query.get("window")
        if not source or not metric or not window:
            raise ApiError(400, "bad-query", "source, metric, window required")
        try:
            start_text, _, end_text = window.partition("..")
            start, end = float(start_text), float(end_text)
        except ValueError:
            raise ApiError(400, "bad-window", window)
        result = {"source": source, "metric": metric, "window": [start, end]}
        try:
            result.update(self.manager.perf.stats(source, metric, start, end))
        except FcapsError as exc:
            if exc.code != "NoSamples":
                raise
            result.update({"count": 0, "mean": None, "min": None, "max": None})
        try:
            result["trend_per_hour"] = self.manager.perf.trend(
                source, metric, start, end)
        except FcapsError:
            result["trend_per_hour"] = None
        self._send_json(200, result)

    def _op_pipeline_stats(self) -> None:
        principal = self._principal()
        self._allow(principal, "read", "gw")
        self._send_json(200, self.manager.gateway.stats.as_dict())

    def _op_state(self) -> None:
        self._principal()  # authenticated, but deliberately permission-free
        self._send_json(200, self.manager.state_digest())

    def _op_config_list(self, network: str) -> None:
        principal = self._principal()
        self.manager.gateway.routes.get(network)
        self._allow(principal, "read", network)
        self._send_json(200, {"network": network,
                              "snapshots": self.manager.config.list_snapshots(network)})

    def _op_config_backup(self, network: str) -> None:
        principal = self._principal()
        self.manager.gateway.routes.get(network)
        self._allow(principal, "backup", network)
        snapshot = self.manager.backup(network)
        self._send_json(200, {"network": network,
                              "snapshot_id": snapshot.snapshot_id,
                              "taken_at": snapshot.taken_at,
                              "entries": len(snapshot.entries),
                              "path": str(self.manager.config.path_of(
                                  network, snapshot.snapshot_id))})

    def _op_config_restore(self, network: str) -> None:
        principal = self._principal()
        self.manager.gateway.routes.get(network)
        self._allow(principal, "backup", network)
        body = self._json_body()
        snapshot_id = body.get("snapshot_id")
        if not isinstance(snapshot_id, int):
            raise ApiError(400, "bad-snapshot-id", repr(snapshot_id))
        report = self.manager.restore(network, snapshot_id)
        self._send_json(200, {"network": network, "snapshot_id": snapshot_id,
                              "report": [[name, outcome]
                                         for name, outcome in report]})

    def _op_mib_walk(self, network: str) -> None:
        principal = self._principal()
        self.manager.gateway.routes.get(network)
        self._allow(principal, "read", network)
        prefix = self.query.get("prefix", "")
        rows = self.manager.walk_network(network, prefix)
        self._send_json(200, {"network": network,
                              "rows": [[name, value.canonical(), status]
                                       for name, value, status in rows]})

    def _op_mib_request(self, network: str) -> None:
        principal = self._principal()
        self.manager.gateway.routes.get(network)
        body = self._json_body()
        op = body.get("op")
        if op not in ("get", "set"):
            raise ApiError(400, "bad-op", repr(op))
        self._allow(principal, "write" if op == "set" else "read", network)
        raw_items = body.get("items")
        if (not isinstance(raw_items, list) or not raw_items
                or not all(isinstance(i, list) and len(i) == 2 for i in raw_items)):
            raise ApiError(400, "bad-items", "[[name, canonical|null], ...]")
        items = []
        for name, text in raw_items:
            if not isinstance(name, str):
                raise ApiError(400, "bad-items", repr(name))
            if op == "set":
                if not isinstance(text, str):
                    raise ApiError(400, "bad-items", f"{name}: value required")
                items.append((name, value_parse(text)))
            else:
                items.append((name, None))
        rows = self.manager.native_request(network, op == "set", items)
        self._send_json(200, {"network": network,
                              "rows": [[name,
                                        None if value is None else value.canonical(),
                                        status]
                                       for name, value, status in rows]})

    # CIM-XML

    def _op_cimom(self) -> None:
        principal = self._principal()
        if (self.headers.get("CIMOperation") or "").strip() != "MethodCall":
            raise ApiError(400, "bad-cim-call", "CIMOperation: MethodCall required")
        op, params = self._parse_cimom(self._body())
        schema = self.manager.gateway.schema
        if op == "EnumerateInstances":
            cls = schema.require(self._param(params, "CLASS")).name
            network = params.get("NETWORK")
            if network is not None:
                self.manager.gateway.routes.get(network)
            readable = self._can_read(principal)
            found = [inst for inst in
                     self.manager.gateway.enumerate_instances(cls, network)
                     if inst.origin is not None and readable(inst.origin.network)]
            self._send_xml(200, instances_to_xml(found, schema))
            return
        if op == "GetInstance":
            cls = schema.require(self._param(params, "CLASS")).name
            key = self._param(params, "KEY")
            inst = self.manager.gateway.get_instance(cls, key)
            if inst is None:
                raise ApiError(404, "no-instance", f"{cls}.{key}")
            if inst.origin is not None:
                self._allow(principal, "read", inst.origin.network)
            self._send_xml(200, cim_to_xml(inst, schema))
            return
        if op == "ModifyInstance":
            cls = schema.require(self._param(params, "CLASS")).name
            key = self._param(params, "KEY")
            prop = self._param(params, "PROPERTY")
            value = value_parse(self._param(params, "VALUE"))
            inst = self.manager.gateway.get_instance(cls, key)
            if inst is None or inst.origin is None:
                raise ApiError(404, "no-instance", f"{cls}.{key}")
            self._allow(principal, "write", inst.origin.network)
            try:
                updated = self.manager.modify_instance(cls, key, prop, value)
            except GatewayError as exc:
                if exc.code != "write-rejected":
                    raise
                # delivery worked and the agent said no; that is a result
                self._send_xml(200, "<CIM><ERROR CODE=\"write-rejected\" "
                                    f"DETAIL=\"{exc.detail}\"/></CIM>")
                return
            self._send_xml(200, cim_to_xml(updated, schema))
            return
        raise ApiError(400, "bad-operation", op)

    @staticmethod
    def _param(params: dict[str, str], name: str) -> str:
        value = params.get(name)
        if not value:
            raise ApiError(400, "missing-param", name)
        return value

    @staticmethod
    def _parse_cimom(body: bytes) -> tuple[str, dict[str, str]]:
        try:
            root = ET.fromstring(body.decode("utf-8"))
        except (ET.ParseError, UnicodeDecodeError) as exc:
            raise ApiError(400, "malformed-xml", str(exc))
        operation = root.find("OPERATION") if root.tag == "CIM" else None
        if operation is None or not operation.get("NAME"):
            raise ApiError(400, "malformed-xml", "CIM/OPERATION[@NAME] required")
        params: dict[str, str] = {}
        for param in operation.findall("PARAM"):
            name = param.get("NAME")
            if not name:
                raise ApiError(400, "malformed-xml", "PARAM without NAME")
            params[name] = param.text or ""
        return operation.get("NAME"), params

    # static console

    def _console(self, path: str) -> None:
        root = self.server.console_dir
        if root is None:
            raise ApiError(404, "no-console", "served without --console-dir")
        if path == "/" or path == "/console":
            self.send_response(302)
            self.send_header("Location", "/console/")
            self.send_header("Content-Length", "0")
            self.end_headers()
            return
        rel = path[len("/console/"):] or "index.html"
        target = (root / rel).resolve()
        if not str(target).startswith(str(root.resolve()) + "/") \
                and target != root.resolve():
            raise ApiError(404, "no-file", rel)
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            raise ApiError(404, "no-file", rel)
        content_type = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
        self._send(200, target.read_bytes(), content_type)


class ApiServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address: tuple[str, int], manager: Manager,
                 console_dir: Optional[Path] = None):
        super().__init__(address, _Handler)
        self.manager = manager
        self.console_dir = console_dir


def serve_api(manager: Manager, host: str = "127.0.0.1", port: int = 0,
              console_dir: Optional[Path] = None) -> ApiServer:
    """Bind and start serving on a background thread; caller owns shutdown."""
    server = ApiServer((host, port), manager, console_dir)
    thread = threading.Thread(target=server.serve_forever,
                              name="hetman-http", daemon=True)
    thread.start()
    return server
