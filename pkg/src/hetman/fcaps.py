"""The five management functions over the gateway's generic stream: alarms,
config snapshots, usage billing, performance series, and access control.

Each engine owns its state behind a lock and exposes plain-data results, so
the HTTP layer can serve queries while the poll loop keeps ingesting.
"""

from __future__ import annotations

import fnmatch
import math
import statistics
import threading
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Optional

from .gateway import INDICATION, Gateway, GatewayError, GenericMessage, _split_subject
from .mib import ObjectValue, OctetsVal, TimeTicksVal, ValueParseError, value_parse
from .protocols import SEVERITIES

CORRELATION_WINDOW = 30.0  # simulated seconds
DEFAULT_BACKUP_PERIOD = 60.0

_SEVERITY_RANK = {name: rank for rank, name in enumerate(SEVERITIES)}


class FcapsError(Exception):
    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code
        self.detail = detail


class ManagementLayer(Enum):
    ELEMENT = "Element"
    NETWORK = "Network"
    SERVICE = "Service"
    BUSINESS = "Business"


# fault management


@dataclass
class Alarm:
    alarm_id: int
    network: str
    agent: str
    severity: str
    cause: str
    state: str = "Raised"
    raised_at: float = 0.0
    acked_at: Optional[float] = None
    resolved_at: Optional[float] = None
    duplicate_count: int = 1
    flagged: bool = False  # cause was missing and substituted
    members: list[tuple[float, str]] = field(default_factory=list, repr=False)

    def as_dict(self) -> dict:
        return {
            "alarm_id": self.alarm_id,
            "network": self.network,
            "agent": self.agent,
            "severity": self.severity,
            "cause": self.cause,
            "state": self.state,
            "raised_at": self.raised_at,
            "acked_at": self.acked_at,
            "resolved_at": self.resolved_at,
            "duplicate_count": self.duplicate_count,
            "flagged": self.flagged,
        }


class FaultEngine:
    """Alarm lifecycle with duplicate correlation.

    Correlation groups traps of one (network, agent, cause) whose timestamps
    chain with gaps of at most the window, among alarms not yet Resolved.
    Grouping is a function of the timestamp set alone, so ingest order never
    changes the outcome: a trap that lands between two open alarms merges
    them into the earlier one. Severity is the highest seen in the group.
    """

    def __init__(self):
        self._alarms: dict[int, Alarm] = {}
        self._next_id = 1
        self._lock = threading.Lock()

    def raise_event(self, network: str, agent: str, severity: str, cause: str,
                    at: float, flagged: bool = False) -> Alarm:
        if severity not in _SEVERITY_RANK:
            raise FcapsError("bad-indication", f"severity {severity!r}")
        with self._lock:
            hits = [a for a in self._alarms.values()
                    if (a.network, a.agent, a.cause) == (network, agent, cause)
                    and a.state != "Resolved"
                    and min(abs(at - t) for t, _ in a.members) <= CORRELATION_WINDOW]
            if not hits:
                alarm = Alarm(self._next_id, network, agent, severity, cause,
                              raised_at=at, flagged=flagged,
                              members=[(at, severity)])
                self._alarms[self._next_id] = alarm
                self._next_id += 1
                return alarm
            hits.sort(key=lambda a: (a.raised_at, a.alarm_id))
            primary = hits[0]
            for other in hits[1:]:  # this trap bridges previously distinct groups
                primary.members.extend(other.members)
                primary.flagged = primary.flagged or other.flagged
                del self._alarms[other.alarm_id]
            primary.members.append((at, severity))
            primary.members.sort()
            primary.flagged = primary.flagged or flagged
            primary.duplicate_count = len(primary.members)
            primary.raised_at = primary.members[0][0]
            primary.severity = max((sev for _, sev in primary.members),
                                   key=_SEVERITY_RANK.get)
            return primary

    def ingest(self, ind: GenericMessage, now: float = 0.0) -> Alarm:
        """Fold one gateway indication into the alarm set."""
        if ind.kind != INDICATION:
            raise FcapsError("bad-indication", ind.kind)
        by_prop = {prop: value for cls, prop, value in ind.items
                   if cls == "Alarm" and value is not None}
        cause_val = by_prop.get("cause")
        flagged = not isinstance(cause_val, OctetsVal)
        cause = cause_val.text() if isinstance(cause_val, OctetsVal) else "unknown"
        sev_val = by_prop.get("severity")
        severity = sev_val.text() if isinstance(sev_val, OctetsVal) else "minor"
        if severity not in _SEVERITY_RANK:
            severity = "minor"
        source_val = by_prop.get("source")
        agent = source_val.text() if isinstance(source_val, OctetsVal) else ind.origin.agent
        ticks = by_prop.get("observedTicks")
        at = ticks.value / 100.0 if isinstance(ticks, TimeTicksVal) else now
        return self.raise_event(ind.origin.network, agent, severity, cause, at,
                                flagged=flagged)

    def get(self, alarm_id: int) -> Alarm:
        with self._lock:
            try:
                return self._alarms[alarm_id]
            except KeyError:
                raise FcapsError("NoSuchAlarm", str(alarm_id))

    def ack(self, alarm_id: int, at: float) -> Alarm:
        with self._lock:
            alarm = self._alarms.get(alarm_id)
            if alarm is None:
                raise FcapsError("NoSuchAlarm", str(alarm_id))
            if alarm.state != "Raised":
                raise FcapsError("IllegalTransition", f"ack from {alarm.state}")
            alarm.state = "Acknowledged"
            alarm.acked_at = max(at, alarm.raised_at)
            return alarm

    def resolve(self, alarm_id: int, at: float) -> Alarm:
        with self._lock:
            alarm = self._alarms.get(alarm_id)
            if alarm is None:
                raise FcapsError("NoSuchAlarm", str(alarm_id))
            if alarm.state not in ("Raised", "Acknowledged"):
                raise FcapsError("IllegalTransition", f"resolve from {alarm.state}")
            alarm.state = "Resolved"
            floor = alarm.acked_at if alarm.acked_at is not None else alarm.raised_at
            alarm.resolved_at = max(at, floor)
            return alarm

    def alarms(self, network: Optional[str] = None,
               state: Optional[str] = None) -> list[Alarm]:
        with self._lock:
            found = sorted(self._alarms.values(),
                           key=lambda a: (a.raised_at, a.alarm_id))
        if network is not None:
            found = [a for a in found if a.network == network]
        if state is not None:
            found = [a for a in found if a.state == state]
        return found

    def open_count(self, network: Optional[str] = None) -> int:
        return len([a for a in self.alarms(network) if a.state != "Resolved"])


# configuration management


@dataclass(frozen=True)
class ConfigSnapshot:
    snapshot_id: int
    network: str
    taken_at: float
    entries: tuple[tuple[str, ObjectValue], ...]  # sorted by native name

    def value_of(self, name: str) -> Optional[ObjectValue]:
        for entry_name, value in self.entries:
            if entry_name == name:
                return value
        return None

    def render(self) -> str:
        lines = [f"{name}|{value.canonical()}" for name, value in self.entries]
        return "\n".join(lines) + ("\n" if lines else "")


class ConfigEngine:
    """Snapshots of every writable object, taken over the wire and persisted
    as `<network>-<id>.cfg` under snap_dir."""

    def __init__(self, gateway: Gateway, snap_dir: Path,
                 period: float = DEFAULT_BACKUP_PERIOD):
        self.gateway = gateway
        self.snap_dir = Path(snap_dir)
        self.period = period
        self.snap_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._next_id = 1 + max(
            (sid for _, sid in self._scan()), default=0)

    def _scan(self) -> list[tuple[str, int]]:
        found = []
        for path in self.snap_dir.glob("*-*.cfg"):
            network, _, sid = path.stem.rpartition("-")
            if network and sid.isdigit():
                found.append((network, int(sid)))
        return found

    def writable_names(self, network: str) -> list[str]:
        entry = self.gateway.routes.get(network)
        names = []
        for rule in self.gateway.rules.rules:
            if rule.protocol != entry.protocol or rule.direction == "from_generic":
                continue
            prop = self.gateway.schema.require(rule.cim_class).property(rule.cim_property)
            if prop is None or not prop.writable:
                continue
            _, subject = _split_subject(entry.protocol, rule.native_name)
            if subject:
                names.append(rule.native_name)
        return sorted(names)

    def path_of(self, network: str, snapshot_id: int) -> Path:
        return self.snap_dir / f"{network}-{snapshot_id}.cfg"

    def backup(self, network: str) -> ConfigSnapshot:
        names = self.writable_names(network)
        try:
            rows = self.gateway.native_request(network, False,
                                               [(n, None) for n in names])
        except GatewayError as exc:
            raise FcapsError("NetworkUnreachable", str(exc)) from exc
        values = {name: value for name, value, status in rows
                  if status == "ok" and value is not None}
        entries = tuple((name, values[name]) for name in names if name in values)
        with self._lock:
            sid = self._next_id
            self._next_id += 1
        snapshot = ConfigSnapshot(sid, network, self.gateway.sim_clock, entries)
        self.path_of(network, sid).write_text(snapshot.render())
        return snapshot

    def load(self, network: str, snapshot_id: int) -> ConfigSnapshot:
        path = self.path_of(network, snapshot_id)
        if not path.exists():
            raise FcapsError("bad-snapshot", f"{network}-{snapshot_id}")
        entries = []
        for lineno, line in enumerate(path.read_text().splitlines(), 1):
            name, sep, text = line.partition("|")
            if not sep or not name:
                raise FcapsError("bad-snapshot", f"{path.name} line {lineno}")
            try:
                entries.append((name, value_parse(text)))
            except ValueParseError as exc:
                raise FcapsError("bad-snapshot",
                                 f"{path.name} line {lineno}: {exc}") from exc
        return ConfigSnapshot(snapshot_id, network, 0.0, tuple(entries))

    def list_snapshots(self, network: str) -> list[int]:
        return sorted(sid for net, sid in self._scan() if net == network)

    @staticmethod
    def diff(a: ConfigSnapshot, b: ConfigSnapshot
             ) -> list[tuple[str, Optional[ObjectValue], Optional[ObjectValue]]]:
        """Entries that changed between a and b, as (name, old, new)."""
        names = sorted({name for name, _ in a.entries} | {name for name, _ in b.entries})
        out = []
        for name in names:
            old, new = a.value_of(name), b.value_of(name)
            if old != new:
                out.append((name, old, new))
        return out

    def restore(self, network: str, snapshot: ConfigSnapshot
                ) -> list[tuple[str, str]]:
        """Write back snapshot entries that differ from the network's current
        values; returns (name, outcome) per entry."""
        names = [name for name, _ in snapshot.entries]
        try:
            rows = self.gateway.native_request(network, False,
                                               [(n, None) for n in names])
        except GatewayError as exc:
            raise FcapsError("NetworkUnreachable", str(exc)) from exc
        current = {name: value for name, value, status in rows if status == "ok"}
        report = []
        for name, wanted in snapshot.entries:
            if current.get(name) == wanted:
                report.append((name, "equal"))
                continue
            try:
                written = self.gateway.native_request(network, True, [(name, wanted)])
            except GatewayError as exc:
                report.append((name, f"failed:{exc.code}"))
                continue
            status = written[0][2] if written else "Malformed"
            report.append((name, "written" if status == "ok" else f"failed:{status}"))
        return report


# accounting management


@dataclass(frozen=True)
class UsageRecord:
    payer: str
    service: str
    quantity: Fraction
    period_start: Fraction
    period_end: Fraction

    def __post_init__(self):
        if not self.payer or not self.service:
            raise FcapsError("bad-record", "empty payer or service")
        if self.quantity < 0:
            raise FcapsError("bad-record", f"quantity {self.quantity}")
        if self.period_end < self.period_start:
            raise FcapsError("bad-record", "period ends before it starts")


@dataclass
class BillResult:
    ledger: dict[str, Fraction]
    unbilled: list[UsageRecord]


def _fraction(text: str, context: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise FcapsError(context, text) from exc


def parse_records(text: str) -> list[UsageRecord]:
    """`payer|service|quantity|start|end` lines, # comments allowed."""
    records = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("|")
        if len(parts) != 5:
            raise FcapsError("bad-record", f"line {lineno}: expected 5 fields")
        payer, service, quantity, start, end = parts
        records.append(UsageRecord(payer, service,
                                   _fraction(quantity, "bad-record"),
                                   _fraction(start, "bad-record"),
                                   _fraction(end, "bad-record")))
    return records


def parse_rates(text: str) -> dict[str, Fraction]:
    """`service|cost_per_unit` lines."""
    rates: dict[str, Fraction] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        service, sep, cost = line.partition("|")
        if not sep or not service:
            raise FcapsError("bad-rate", f"line {lineno}")
        rate = _fraction(cost, "bad-rate")
        if rate < 0 or service in rates:
            raise FcapsError("bad-rate", f"line {lineno}: {service}")
        rates[service] = rate
    return rates


def money_text(amount: Fraction) -> str:
    """Render to 2 decimals, half-up. Exact until this point."""
    cents = math.floor(amount * 100 + Fraction(1, 2))
    return f"{cents // 100}.{cents % 100:02d}"


class AcctEngine:
    def __init__(self):
        self._records: list[UsageRecord] = []
        self._lock = threading.Lock()

    def record(self, rec: UsageRecord) -> None:
        with self._lock:
            self._records.append(rec)

    def records(self) -> list[UsageRecord]:
        with self._lock:
            return list(self._records)

    def bill(self, start: Fraction, end: Fraction,
             rates: dict[str, Fraction]) -> BillResult:
        """Charge every record whose period intersects [start, end]; the
        whole quantity is billed, exactly, in rational arithmetic."""
        for service, rate in rates.items():
            if rate < 0:
                raise FcapsError("bad-rate", service)
        ledger: dict[str, Fraction] = {}
        unbilled = []
        for rec in self.records():
            if rec.period_end < start or rec.period_start > end:
                continue
            rate = rates.get(rec.service)
            if rate is None:
                unbilled.append(rec)
                continue
            ledger[rec.payer] = ledger.get(rec.payer, Fraction(0)) + rec.quantity * rate
        return BillResult(ledger, unbilled)


# performance management


METRICS = ("utilization", "error_count", "response_time_ms")


@dataclass(frozen=True)
class PerfSample:
    source: str
    metric: str
    value: float
    at: float

    def __post_init__(self):
        if self.metric not in METRICS:
            raise FcapsError("bad-sample", f"metric {self.metric!r}")
        if self.metric == "utilization" and not 0.0 <= self.value <= 1.0:
            raise FcapsError("bad-sample", f"utilization {self.value}")
        if self.metric == "error_count" and (self.value < 0 or self.value != int(self.value)):
            raise FcapsError("bad-sample", f"error_count {self.value}")
        if self.metric == "response_time_ms" and self.value < 0:
            raise FcapsError("bad-sample", f"response_time_ms {self.value}")


class PerfEngine:
    def __init__(self):
        self._series: dict[tuple[str, str], list[PerfSample]] = {}
        self._lock = threading.Lock()

    def ingest(self, sample: PerfSample) -> None:
        with self._lock:
            self._series.setdefault((sample.source, sample.metric), []).append(sample)

    def sources(self) -> list[tuple[str, str]]:
        with self._lock:
            return sorted(self._series)

    def _window(self, source: str, metric: str, start: float,
                end: float) -> list[PerfSample]:
        if metric not in METRICS:
            raise FcapsError("bad-sample", f"metric {metric!r}")
        with self._lock:
            series = list(self._series.get((source, metric), ()))
        return [s for s in series if start <= s.at <= end]

    def stats(self, source: str, metric: str, start: float, end: float) -> dict:
        samples = self._window(source, metric, start, end)
        if not samples:
            raise FcapsError("NoSamples", f"{source}/{metric}")
        values = [s.value for s in samples]
        return {"mean": sum(values) / len(values), "min": min(values),
                "max": max(values), "count": len(values)}

    def trend(self, source: str, metric: str, start: float, end: float) -> float:
        """Least-squares slope of value against time, per hour."""
        samples = self._window(source, metric, start, end)
        if len(samples) < 2:
            raise FcapsError("InsufficientSamples", f"{source}/{metric}")
        try:
            fit = statistics.linear_regression([s.at for s in samples],
                                               [s.value for s in samples])
        except statistics.StatisticsError as exc:
            raise FcapsError("InsufficientSamples", str(exc)) from exc
        return fit.slope * 3600.0


# security management


ACTIONS = ("read", "write", "ack", "backup", "admin")


@dataclass(frozen=True)
class Principal:
    name: str
    token: str

    def __post_init__(self):
        if not self.name or not self.token:
            raise FcapsError("bad-principal", self.name)


@dataclass(frozen=True)
class AccessRule:
    principal: str
    action: str
    resource_glob: str

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise FcapsError("bad-access", f"action {self.action!r}")
        if not self.principal or not self.resource_glob:
            raise FcapsError("bad-access", "empty field")


@dataclass(frozen=True)
class Decision:
    allowed: bool
    reason: str = ""


def parse_principals(text: str) -> list[Principal]:
    """`name|token` lines."""
    principals = []
    seen = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        name, sep, token = line.partition("|")
        if not sep or name in seen:
            raise FcapsError("bad-principal", f"line {lineno}")
        seen.add(name)
        principals.append(Principal(name, token))
    return principals


def parse_access(text: str) -> list[AccessRule]:
    """`principal|action|resource_glob` lines; an empty file denies everything."""
    rules = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("|")
        if len(parts) != 3:
            raise FcapsError("bad-access", f"line {lineno}: expected 3 fields")
        rules.append(AccessRule(*parts))
    return rules


class SecEngine:
    """Deny-by-default access control over named principals."""

    def __init__(self, principals: list[Principal], rules: list[AccessRule]):
        self._principals = {p.name: p for p in principals}
        self._rules = list(rules)

    def login(self, name: str, token: str) -> bool:
        principal = self._principals.get(name)
        return principal is not None and principal.token == token

    def check(self, principal: str, action: str, resource: str) -> Decision:
        if principal not in self._principals:
            return Decision(False, "no-principal")
        for rule in self._rules:
            if (rule.principal == principal and rule.action == action
                    and fnmatch.fnmatchcase(resource, rule.resource_glob)):
                return Decision(True)
        return Decision(False, "no-rule")
