"""Deterministic discrete-time testbed: mobile and fixed nodes in a plane,
radio coverage, attachment, embedded per-network agents, fault injection.

Every random draw comes from a per-node generator seeded with
`{seed}:{node_id}`, so trajectories are independent of the node roster and
two runs with equal scenario, seed and fault schedule produce byte-identical
event logs. Wall time never enters the model; `serve` paces steps externally.

Network homing is static: dual-mode phones after the first live on the
cellular network (CELL), the first phone doubles as the mobile gateway and is
managed as a fixed element (TELM), laptops and access points form the WLAN
(SNAP), and the remaining infrastructure is wired (TELM).
"""

from __future__ import annotations

import math
import random
import socket
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, IO, Iterable, Optional

from .cim import MappingRule, RuleTable, default_schema
from .gateway import FrameReader, decode_frame, frame_message
from .mib import (
    Access,
    CounterVal,
    FcapsCategory,
    GaugeVal,
    IntegerVal,
    MibError,
    MibStore,
    ObjectDescriptor,
    ObjectValue,
    OctetsVal,
    Oid,
    TimeTicksVal,
    oid_parse,
)
from .protocols import CodecError
from .protocols.agent import TrapEvent, agent_serve, emit_trap
from .protocols.cell import CellRecord
from .protocols.snap import SnapMessage
from .protocols.telm import TelmMessage

ARENA = (2000.0, 2000.0)
CBS_RADIUS = 10000.0
WAP_RADIUS = 100.0
MAX_SPEED = 20.0
REHEAD_PROBABILITY = 0.1
DRAIN_RANGE = (0.005, 0.02)  # battery percent per second
LINKDOWN_DEFAULT = 60.0

KINDS = ("CellPhone", "Laptop", "PC", "InternetGateway",
         "CellBaseStation", "AccessPoint")
MODES = ("SingleWlan", "SingleCell", "Lan", "DualMode")
FAULT_KINDS = ("link-down", "battery-dead", "agent-crash")

_PREFIX = {"CellPhone": "phone", "Laptop": "laptop", "PC": "pc",
           "InternetGateway": "ig", "CellBaseStation": "cbs",
           "AccessPoint": "wap"}
_MOBILE = frozenset({"CellPhone", "Laptop"})
_REQUIRED_MODE = {"CellPhone": "DualMode", "Laptop": "SingleWlan"}
_FIXED_RADIUS = {"CellBaseStation": CBS_RADIUS, "AccessPoint": WAP_RADIUS}

DEFAULT_SCENARIO = """\
# roster: kind|mode|count|radius|speed_min..speed_max
CellPhone|DualMode|6||0..20
Laptop|SingleWlan|5||0..20
PC|Lan|1||0..0
InternetGateway|Lan|1||0..0
CellBaseStation|Lan|1|10000|0..0
AccessPoint|Lan|3|100|0..0
"""

# column tables: (snap column oid, cim property, value kind, telm attr[, cell key])
_TERMINAL_COLS = (
    ("1.1", "id", "s", "t_id", "id"),
    ("1.2", "batteryPercent", "i", "t_batt", "batt"),
    ("1.3", "attachment", "s", "t_att", "att"),
    ("1.4", "utilizationPermille", "g", "t_util", "util"),
    ("1.5", "errorCount", "c", "t_err", "errs"),  # "err" is the status pair
    ("1.6", "observedTicks", "t", "t_ts", "ts"),
    ("1.8", "adminLabel", "s", "t_label", "label"),
)
_NETIF_COLS = (
    ("2.1", "id", "s", "n_id", None),
    ("2.2", "utilization", "g", "n_util", None),
    ("2.3", "errorCount", "c", "n_err", None),
    ("2.4", "uptimeTicks", "t", "n_up", None),
    ("2.6", "observedTicks", "t", "n_ts", None),
    ("2.8", "adminLabel", "s", "n_label", None),
)
_ALARM_COLS = (
    ("0.1", "severity", "s", "sev", "sev"),
    ("0.2", "cause", "s", "cause", "cause"),
    ("0.3", "source", "s", None, "src"),  # a TELM event's path names the source
    ("0.4", "observedTicks", "t", "ts", "ats"),
)
_CLASS_COLS = {"Terminal": _TERMINAL_COLS, "NetInterface": _NETIF_COLS}
_PERF_PROPS = frozenset({"batteryPercent", "utilizationPermille", "utilization",
                         "errorCount", "observedTicks", "uptimeTicks"})


class SimError(Exception):
    """Simulation failure with a stable machine-readable code."""

    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code
        self.detail = detail


@dataclass(frozen=True)
class NodeSpec:
    node_id: str
    kind: str
    mode: str
    speed_range: tuple[float, float]
    coverage_radius: Optional[float]
    network: str
    protocol: str
    mobile_gateway: bool = False
    imsi: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SimError("bad-scenario", f"kind {self.kind!r}")
        if self.mode not in MODES:
            raise SimError("bad-scenario", f"mode {self.mode!r}")
        required = _REQUIRED_MODE.get(self.kind)
        if required and self.mode != required:
            raise SimError("bad-scenario", f"{self.kind} must be {required}")
        lo, hi = self.speed_range
        if not (0.0 <= lo <= hi):
            raise SimError("bad-scenario", f"speed range {self.speed_range}")
        if self.kind in _MOBILE and hi > MAX_SPEED:
            raise SimError("bad-scenario", f"speed above {MAX_SPEED} m/s")
        fixed = _FIXED_RADIUS.get(self.kind)
        if fixed is not None and self.coverage_radius != fixed:
            raise SimError("bad-scenario",
                           f"{self.kind} coverage must be {fixed:g} m")
        if fixed is None and self.coverage_radius is not None:
            raise SimError("bad-scenario", f"{self.kind} has no coverage")

    @property
    def cim_class(self) -> str:
        return "Terminal" if self.kind in _MOBILE else "NetInterface"

    @property
    def mobile(self) -> bool:
        return self.kind in _MOBILE


@dataclass(frozen=True)
class ScenarioConfig:
    nodes: tuple[NodeSpec, ...]
    arena: tuple[float, float] = ARENA
    seed: int = 0
    tick: float = 1.0

    def __post_init__(self):
        if not (0 <= self.seed < 2 ** 64):
            raise SimError("bad-scenario", f"seed {self.seed}")
        if self.tick <= 0:
            raise SimError("bad-scenario", f"tick {self.tick}")
        if self.arena[0] <= 0 or self.arena[1] <= 0:
            raise SimError("bad-scenario", f"arena {self.arena}")
        ids = [n.node_id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise SimError("bad-scenario", "duplicate node id")

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for node in self.nodes:
            out[node.kind] = out.get(node.kind, 0) + 1
        return out


@dataclass
class Position:
    x: float
    y: float


@dataclass
class SimClock:
    """Step counter scaled by the tick size; multiplication avoids drift."""

    tick: float = 1.0
    steps: int = 0

    @property
    def now(self) -> float:
        return self.steps * self.tick

    def advance(self) -> float:
        self.steps += 1
        return self.now


def _home(kind: str, index: int) -> tuple[str, str, bool, Optional[str]]:
    """(network, protocol, mobile_gateway, imsi) for the index-th node of kind."""
    if kind == "CellPhone":
        if index == 0:
            return ("lan0", "telm", True, None)
        return ("cell0", "cell", False, f"00101{index:010d}")
    if kind in ("Laptop", "AccessPoint"):
        return ("wlan0", "snap", False, None)
    return ("lan0", "telm", False, None)


def parse_scenario(text: str, seed: int = 0, tick: float = 1.0) -> ScenarioConfig:
    """Roster lines `kind|mode|count|radius?|speed_min..speed_max`."""
    nodes: list[NodeSpec] = []
    per_kind: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("|")
        if len(parts) == 4:
            parts.insert(3, "")
        if len(parts) != 5:
            raise SimError("bad-scenario", f"line {lineno}: expected 4-5 fields")
        kind, mode, count_text, radius_text, speeds = parts
        if not count_text.isdigit():
            raise SimError("bad-scenario", f"line {lineno}: count {count_text!r}")
        radius = None
        if radius_text:
            try:
                radius = float(radius_text)
            except ValueError:
                raise SimError("bad-scenario",
                               f"line {lineno}: radius {radius_text!r}")
        if radius is None:
            radius = _FIXED_RADIUS.get(kind)
        lo_text, sep, hi_text = speeds.partition("..")
        if not sep:
            raise SimError("bad-scenario", f"line {lineno}: speeds {speeds!r}")
        try:
            speed_range = (float(lo_text), float(hi_text))
        except ValueError:
            raise SimError("bad-scenario", f"line {lineno}: speeds {speeds!r}")
        for _ in range(int(count_text)):
            index = per_kind.get(kind, 0)
            per_kind[kind] = index + 1
            network, protocol, mgw, imsi = _home(kind, index)
            nodes.append(NodeSpec(
                f"{_PREFIX.get(kind, kind)}-{index}", kind, mode, speed_range,
                radius, network, protocol, mobile_gateway=mgw, imsi=imsi))
    if not nodes:
        raise SimError("bad-scenario", "empty roster")
    return ScenarioConfig(tuple(nodes), ARENA, seed, tick)


def scenario_default(seed: int = 0, tick: float = 1.0) -> ScenarioConfig:
    return parse_scenario(DEFAULT_SCENARIO, seed, tick)


def coverage(pos: Position,
             points: Iterable[tuple[str, Position, float]]) -> list[str]:
    """Ids of attachment points whose disc contains pos, sorted.

    Membership is distance(pos, point) <= radius, computed in squared form
    on both sides so callers can reproduce decisions bit-for-bit.
    """
    out = []
    for point_id, point, radius in points:
        d2 = (pos.x - point.x) ** 2 + (pos.y - point.y) ** 2
        if d2 <= radius * radius:
            out.append(point_id)
    return sorted(out)


def attach(mode: str, pos: Position,
           waps: Iterable[tuple[str, Position, float]],
           bases: Iterable[tuple[str, Position, float]]) -> Optional[str]:
    """Pick the attachment point: WLAN preferred for dual-mode nodes, the
    nearest covering point wins, ties break on id. Lan nodes are wired."""
    if mode == "Lan":
        return "lan"

    def nearest(points):
        best = None
        for point_id, point, radius in points:
            d2 = (pos.x - point.x) ** 2 + (pos.y - point.y) ** 2
            if d2 <= radius * radius and (best is None or (d2, point_id) < best):
                best = (d2, point_id)
        return best[1] if best else None

    if mode in ("SingleWlan", "DualMode"):
        hit = nearest(waps)
        if hit is not None:
            return hit
        if mode == "SingleWlan":
            return None
    return nearest(bases)


@dataclass(frozen=True)
class FaultOrder:
    at: float
    target: str
    kind: str
    duration: Optional[float] = None

    def __post_init__(self):
        if self.kind not in FAULT_KINDS:
            raise SimError("bad-fault", f"kind {self.kind!r}")
        if self.at < 0:
            raise SimError("bad-fault", f"time {self.at}")
        if self.duration is not None and self.duration <= 0:
            raise SimError("bad-fault", f"duration {self.duration}")


def parse_faults(text: str) -> list[FaultOrder]:
    """Schedule lines `t|target|kind` or `t|target|kind|duration`."""
    orders = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("|")
        if len(parts) not in (3, 4):
            raise SimError("bad-fault", f"line {lineno}: expected 3-4 fields")
        try:
            at = float(parts[0])
            duration = float(parts[3]) if len(parts) == 4 else None
        except ValueError:
            raise SimError("bad-fault", f"line {lineno}: bad number")
        orders.append(FaultOrder(at, parts[1], parts[2], duration))
    return orders


@dataclass
class _NodeState:
    spec: NodeSpec
    rng: random.Random
    pos: Position
    heading: float = 0.0
    speed: float = 0.0
    drain: float = 0.0
    util: int = 0
    errors: int = 0
    label: str = ""
    attached: Optional[str] = None
    alive: bool = True
    dead_forced: bool = False
    crashed_until: Optional[float] = None
    linkdown_until: Optional[float] = None
    trap_seq: int = 0
    subject: str = ""
    row: int = 0
    oids: dict[str, Oid] = field(default_factory=dict)

    def battery(self, now: float) -> Optional[float]:
        if not self.spec.mobile:
            return None
        if self.dead_forced:
            return 0.0
        return max(0.0, 100.0 - self.drain * now)

    def crashed(self, now: float) -> bool:
        return self.crashed_until is not None and now < self.crashed_until

    def radio_down(self, now: float) -> bool:
        return self.linkdown_until is not None and now < self.linkdown_until


class Simulation:
    """Step-driven world state plus one MibStore per managed network.

    Stores mutate only under their network lock; the serving layer takes the
    same lock per request, so agents and the stepper never interleave reads
    with partial publishes.
    """

    def __init__(self, scenario: ScenarioConfig,
                 event_sink: Optional[IO[str]] = None,
                 trace_sink: Optional[IO[str]] = None,
                 faults: Iterable[FaultOrder] = ()):
        self.scenario = scenario
        self.clock = SimClock(scenario.tick)
        self.schema = default_schema()
        self._event_sink = event_sink
        self._trace_sink = trace_sink
        self._trap_sinks: list[Callable[[str, bytes], None]] = []
        self.events: list[str] = []

        self.nodes: dict[str, _NodeState] = {}
        self.stores: dict[str, MibStore] = {}
        self.locks: dict[str, threading.Lock] = {}
        self._subject_node: dict[tuple[str, str], str] = {}
        self._rows: dict[str, int] = {}

        for spec in scenario.nodes:
            rng = random.Random(f"{scenario.seed}:{spec.node_id}")
            self.nodes[spec.node_id] = _NodeState(spec, rng, Position(0.0, 0.0))
            if spec.network not in self.stores:
                self.stores[spec.network] = MibStore()
                self.locks[spec.network] = threading.Lock()

        self._place_fixed()
        self._place_mobile()
        for state in self.nodes.values():
            self._init_draws(state)
            self._register(state)
        self.rules = self._build_rules()

        self._faults: list[FaultOrder] = []
        self._fault_idx = 0
        for order in faults:
            self.inject(order.at, order.target, order.kind, order.duration)

        for state in self.nodes.values():
            if state.spec.mobile_gateway:
                self._event(state.spec.node_id, "role", "mobile-gateway")
        self._settle()
        self._trace_all()

    # construction helpers

    def _place_fixed(self):
        w, h = self.scenario.arena
        fixed_spots = {
            "CellBaseStation": [Position(w / 2, h / 2)],
            "AccessPoint": [Position(w / 4, h / 4), Position(w / 2, 3 * h / 4),
                            Position(3 * w / 4, h / 4)],
            "PC": [Position(w / 2 - 50.0, h / 2)],
            "InternetGateway": [Position(w / 2 + 50.0, h / 2)],
        }
        counters: dict[str, int] = {}
        for state in self.nodes.values():
            kind = state.spec.kind
            if state.spec.mobile:
                continue
            index = counters.get(kind, 0)
            counters[kind] = index + 1
            spots = fixed_spots.get(kind, [])
            if index < len(spots):
                spot = spots[index]
                state.pos = Position(spot.x, spot.y)
            else:  # beyond the standard layout: seeded uniform placement
                state.pos = Position(state.rng.uniform(0, w),
                                     state.rng.uniform(0, h))

    def _place_mobile(self):
        w, h = self.scenario.arena
        waps = [s for s in self.nodes.values()
                if s.spec.kind == "AccessPoint"]
        laptop_index = 0
        for state in self.nodes.values():
            if not state.spec.mobile:
                continue
            if state.spec.kind == "Laptop" and waps:
                # start inside WLAN coverage so the network is managed at t=0
                anchor = waps[laptop_index % len(waps)].pos
                laptop_index += 1
                angle = state.rng.uniform(0, 2 * math.pi)
                dist = state.rng.uniform(0, 0.8 * WAP_RADIUS)
                x = min(max(anchor.x + dist * math.cos(angle), 0.0), w)
                y = min(max(anchor.y + dist * math.sin(angle), 0.0), h)
                state.pos = Position(x, y)
            else:
                state.pos = Position(state.rng.uniform(0, w),
                                     state.rng.uniform(0, h))

    def _init_draws(self, state: _NodeState):
        if state.spec.mobile:
            state.heading = state.rng.uniform(0, 2 * math.pi)
            state.speed = state.rng.uniform(*state.spec.speed_range)
            state.drain = state.rng.uniform(*DRAIN_RANGE)
        state.util = state.rng.randint(0, 1000)
        state.label = state.spec.node_id

    def _register(self, state: _NodeState):
        spec = state.spec
        store = self.stores[spec.network]
        row = self._rows.get(spec.network, 0) + 1
        self._rows[spec.network] = row
        state.row = row
        if spec.protocol == "snap":
            state.subject = str(row)
        elif spec.protocol == "cell":
            state.subject = spec.imsi or spec.node_id
        else:
            state.subject = spec.node_id
        self._subject_node[(spec.network, state.subject)] = spec.node_id

        for arc, prop, kind, telm_attr, cell_key in _CLASS_COLS[spec.cim_class]:
            if spec.protocol == "snap":
                name = f"{arc}.{row}"
            elif spec.protocol == "telm":
                name = f"{spec.node_id}/{telm_attr}"
            else:
                if cell_key is None:
                    continue
                name = f"{spec.imsi}/{cell_key}"
            oid = oid_parse(f"{arc}.{row}")
            access = Access.RW if prop == "adminLabel" else Access.RO
            category = (FcapsCategory.PERFORMANCE if prop in _PERF_PROPS
                        else FcapsCategory.CONFIGURATION)
            store.register(ObjectDescriptor(oid, name, kind, access, category))
            state.oids[prop] = oid

    def _build_rules(self) -> RuleTable:
        rules: list[MappingRule] = []
        seen_protocols = set()
        for state in self.nodes.values():
            spec = state.spec
            seen_protocols.add(spec.protocol)
            cols = list(_CLASS_COLS[spec.cim_class]) + list(_ALARM_COLS)
            for arc, prop, _, telm_attr, cell_key in cols:
                cls = spec.cim_class if not arc.startswith("0.") else "Alarm"
                if spec.protocol == "snap":
                    name = f"{arc}.{state.row}"
                elif spec.protocol == "telm":
                    if telm_attr is None:
                        continue
                    name = f"{spec.node_id}/{telm_attr}"
                else:
                    if cell_key is None:
                        continue
                    name = f"{spec.imsi}/{cell_key}"
                rules.append(MappingRule(spec.protocol, name, cls, prop,
                                         "to_generic"))
        # column rules rebuild outbound natives; one per class x protocol
        for protocol in sorted(seen_protocols):
            tables = [("Terminal", _TERMINAL_COLS), ("NetInterface", _NETIF_COLS),
                      ("Alarm", _ALARM_COLS)]
            for cls, cols in tables:
                for arc, prop, _, telm_attr, cell_key in cols:
                    if protocol == "snap":
                        column = arc
                    elif protocol == "telm":
                        if telm_attr is None:
                            continue
                        column = telm_attr
                    else:
                        if cell_key is None:
                            continue
                        column = cell_key
                    rules.append(MappingRule(protocol, column, cls, prop,
                                             "from_generic"))
        return RuleTable(rules, self.schema)

    # fault scheduling

    def inject(self, at: float, target: str, kind: str,
               duration: Optional[float] = None) -> FaultOrder:
        if target not in self.nodes:
            raise SimError("NoSuchTarget", target)
        if at < self.clock.now:
            raise SimError("bad-fault", f"{kind} at {at}: already past")
        order = FaultOrder(at, target, kind, duration)
        self._faults.append(order)
        # stable-sort only the pending tail; equal times keep file order
        tail = self._faults[self._fault_idx:]
        tail.sort(key=lambda o: o.at)
        self._faults[self._fault_idx:] = tail
        return order

    def add_trap_sink(self, sink: Callable[[str, bytes], None]) -> None:
        self._trap_sinks.append(sink)

    # stepping

    def step(self) -> None:
        now = self.clock.advance()
        while self._fault_idx < len(self._faults) \
                and self._faults[self._fault_idx].at <= now:
            self._apply_fault(self._faults[self._fault_idx], now)
            self._fault_idx += 1
        for state in self.nodes.values():
            if state.spec.mobile and state.alive:
                self._move(state)
        for state in self.nodes.values():
            self._update_telemetry(state, now)
        self._settle()
        self._trace_all()

    def run(self, ticks: int) -> None:
        for _ in range(ticks):
            self.step()

    def _apply_fault(self, order: FaultOrder, now: float):
        state = self.nodes[order.target]
        detail = order.kind
        if order.duration is not None:
            detail += f",{order.duration:g}"
        self._event(order.target, "fault", detail)
        if order.kind == "link-down":
            state.linkdown_until = now + (order.duration or LINKDOWN_DEFAULT)
            self._trap(state, "major", "link-down", now)
        elif order.kind == "battery-dead":
            if state.spec.mobile and state.alive:
                state.dead_forced = True
                state.alive = False
                self._trap(state, "critical", "battery-dead", now)
        else:  # agent-crash: silent, shows up as poll timeouts
            horizon = math.inf if order.duration is None else now + order.duration
            state.crashed_until = horizon

    def _move(self, state: _NodeState):
        rng = state.rng
        if rng.random() < REHEAD_PROBABILITY:
            state.heading = rng.uniform(0, 2 * math.pi)
            state.speed = rng.uniform(*state.spec.speed_range)
        if state.speed == 0.0:
            return
        w, h = self.scenario.arena
        step = state.speed * self.scenario.tick
        dx = math.cos(state.heading) * step
        dy = math.sin(state.heading) * step
        x, y = state.pos.x + dx, state.pos.y + dy
        flip_x = flip_y = False
        while not 0.0 <= x <= w:
            x = -x if x < 0 else 2 * w - x
            flip_x = not flip_x
        while not 0.0 <= y <= h:
            y = -y if y < 0 else 2 * h - y
            flip_y = not flip_y
        state.pos = Position(x, y)
        if flip_x or flip_y:
            state.heading = math.atan2(-dy if flip_y else dy,
                                       -dx if flip_x else dx)

    def _update_telemetry(self, state: _NodeState, now: float):
        if not state.alive:
            return
        battery = state.battery(now)
        if battery == 0.0:
            state.alive = False
            self._trap(state, "critical", "battery-dead", now)
            return
        rng = state.rng
        state.util = min(1000, max(0, state.util + rng.randint(-50, 50)))
        if rng.random() < 0.02:
            state.errors += 1

    def _infra_points(self, now: float) -> tuple[list, list]:
        """(waps, bases) currently radiating: alive with the link up."""
        waps, bases = [], []
        for state in self.nodes.values():
            radius = state.spec.coverage_radius
            if radius is None or not state.alive or state.radio_down(now):
                continue
            entry = (state.spec.node_id, state.pos, radius)
            if state.spec.kind == "AccessPoint":
                waps.append(entry)
            else:
                bases.append(entry)
        return waps, bases

    def _settle(self):
        """Recompute attachments, log changes, publish or unpublish."""
        now = self.clock.now
        waps, bases = self._infra_points(now)
        for state in self.nodes.values():
            if not state.alive or state.radio_down(now):
                point = None
            else:
                point = attach(state.spec.mode, state.pos, waps, bases)
            if point != state.attached:
                if point is None:
                    self._event(state.spec.node_id, "detach", "-")
                else:
                    self._event(state.spec.node_id, "attach", point)
            state.attached = point
            with self.locks[state.spec.network]:
                if point is None:
                    self._unpublish(state)
                elif not state.crashed(now):
                    self._publish(state, now)

    def coverage_of(self, pos: Position) -> list[str]:
        waps, bases = self._infra_points(self.clock.now)
        return coverage(pos, waps + bases)

    # store publishing; callers hold the network lock

    def _sync_label(self, state: _NodeState, store: MibStore):
        try:
            value = store.get(state.oids["adminLabel"])
        except MibError:
            return
        if isinstance(value, OctetsVal):
            state.label = value.text()

    def _publish(self, state: _NodeState, now: float):
        store = self.stores[state.spec.network]
        self._sync_label(state, store)
        ticks = TimeTicksVal(int(round(now * 100)))
        battery = state.battery(now)
        values: dict[str, ObjectValue] = {
            "id": OctetsVal.of_text(state.spec.node_id),
            "attachment": OctetsVal.of_text(state.attached or ""),
            "errorCount": CounterVal(state.errors),
            "observedTicks": ticks,
            "adminLabel": OctetsVal.of_text(state.label),
        }
        if state.spec.cim_class == "Terminal":
            values["batteryPercent"] = IntegerVal(int(battery or 0))
            values["utilizationPermille"] = GaugeVal(state.util)
        else:
            values["utilization"] = GaugeVal(state.util)
            values["uptimeTicks"] = ticks
        for prop, oid in state.oids.items():
            if prop in values:
                store.set(oid, values[prop], force=True)

    def _unpublish(self, state: _NodeState):
        store = self.stores[state.spec.network]
        self._sync_label(state, store)
        for oid in state.oids.values():
            try:
                store.unset(oid)
            except MibError:
                pass

    # events, traps, traces

    def _event(self, node_id: str, event: str, detail: str):
        line = f"{self.clock.now:.2f}|{node_id}|{event}|{detail}"
        self.events.append(line)
        if self._event_sink is not None:
            self._event_sink.write(line + "\n")
            self._event_sink.flush()

    def _trap(self, state: _NodeState, severity: str, cause: str, now: float):
        self._event(state.spec.node_id, "trap", f"{cause},{severity}")
        state.trap_seq = (state.trap_seq % 0xFFFF) + 1
        event = TrapEvent(state.spec.node_id, state.subject, severity, cause, now)
        message = emit_trap(event, state.spec.protocol, seq=state.trap_seq)
        frame = frame_message(state.spec.protocol, message)
        for sink in self._trap_sinks:
            sink(state.spec.network, frame)

    def _trace_all(self):
        if self._trace_sink is None:
            return
        now = self.clock.now
        waps, bases = self._infra_points(now)
        for state in self.nodes.values():
            cov = ",".join(coverage(state.pos, waps + bases)) or "-"
            att = state.attached or "-"
            self._trace_sink.write(
                f"{now:.2f}|{state.spec.node_id}|pos|"
                f"x={state.pos.x!r};y={state.pos.y!r};att={att};cov={cov}\n")
        self._trace_sink.flush()

    # agent serving, shared by in-process tests and the TCP layer

    def request_subjects(self, message) -> set[str]:
        if isinstance(message, SnapMessage):
            return {str(oid.arcs[-1]) for oid, _ in message.varbinds
                    if len(oid.arcs) >= 2}
        if isinstance(message, TelmMessage):
            return {message.path}
        if isinstance(message, CellRecord):
            return {message.imsi}
        return set()

    def swallowed(self, network: str, message) -> bool:
        now = self.clock.now
        for subject in self.request_subjects(message):
            node_id = self._subject_node.get((network, subject))
            if node_id is not None and self.nodes[node_id].crashed(now):
                return True
        return False

    def serve(self, network: str, message):
        """Answer one decoded request, or None when a crashed agent eats it."""
        if self.swallowed(network, message):
            return None
        with self.locks[network]:
            return agent_serve(self.stores[network], message)


def sim_dump(sim: Simulation) -> dict:
    """Scenario and world snapshot as plain JSON-ready data."""
    scenario = sim.scenario
    nodes = []
    for state in sim.nodes.values():
        spec = state.spec
        nodes.append({
            "id": spec.node_id,
            "kind": spec.kind,
            "mode": spec.mode,
            "network": spec.network,
            "protocol": spec.protocol,
            "subject": state.subject,
            "x": state.pos.x,
            "y": state.pos.y,
            "coverage_radius": spec.coverage_radius,
            "speed_range": list(spec.speed_range),
            "mobile_gateway": spec.mobile_gateway,
            "imsi": spec.imsi,
            "battery": state.battery(sim.clock.now),
            "drain_rate": state.drain if spec.mobile else None,
            "attachment": state.attached,
        })
    return {
        "arena": list(scenario.arena),
        "seed": scenario.seed,
        "tick": scenario.tick,
        "now": sim.clock.now,
        "counts": scenario.counts(),
        "networks": {network: protocol for network, protocol in sorted(
            {(s.spec.network, s.spec.protocol) for s in sim.nodes.values()})},
        "nodes": nodes,
    }


class NetworkServer:
    """TCP front for one network's agents.

    Connections that send requests get request/response service; connections
    that stay quiet are treated as trap listeners and receive pushed frames.
    """

    def __init__(self, sim: Simulation, network: str,
                 host: str = "127.0.0.1", port: int = 0):
        self.sim = sim
        self.network = network
        self.protocol = next(s.spec.protocol for s in sim.nodes.values()
                             if s.spec.network == network)
        self._listener = socket.create_server((host, port))
        self.host, self.port = self._listener.getsockname()[:2]
        self._conns: list[_Connection] = []
        self._lock = threading.Lock()
        self._closed = False
        self._thread = threading.Thread(target=self._accept_loop, daemon=True)

    def start(self):
        self._thread.start()

    def _accept_loop(self):
        while not self._closed:
            try:
                sock, _ = self._listener.accept()
            except OSError:
                return
            conn = _Connection(self, sock)
            with self._lock:
                self._conns = [c for c in self._conns if not c.closed]
                self._conns.append(conn)
            conn.start()

    def push(self, frame: bytes):
        with self._lock:
            conns = list(self._conns)
        for conn in conns:
            conn.offer(frame)

    def close(self):
        self._closed = True
        try:
            self._listener.close()
        except OSError:
            pass
        with self._lock:
            conns = list(self._conns)
        for conn in conns:
            conn.close()


class _Connection(threading.Thread):
    def __init__(self, server: NetworkServer, sock: socket.socket):
        super().__init__(daemon=True)
        self.server = server
        self.sock = sock
        self.sock.settimeout(0.2)
        self.reader = FrameReader(server.protocol)
        self.quiet = True  # flips on first inbound byte; quiet conns get traps
        self.closed = False
        self._outbox: list[bytes] = []
        self._lock = threading.Lock()

    def offer(self, frame: bytes):
        with self._lock:
            if not self.quiet or self.closed:
                return
            self._outbox.append(frame)

    def _flush(self):
        with self._lock:
            pending, self._outbox = self._outbox, []
        for frame in pending:
            self.sock.sendall(frame)

    def run(self):
        try:
            while not self.closed and not self.server._closed:
                try:
                    self._flush()
                    data = self.sock.recv(65536)
                except socket.timeout:
                    continue
                except OSError:
                    break
                if not data:
                    break
                with self._lock:
                    self.quiet = False
                    self._outbox.clear()
                for payload in self.reader.feed(data):
                    self._answer(payload)
        finally:
            self.close()

    def _answer(self, payload: bytes):
        try:
            message = decode_frame(self.server.protocol, payload)
        except CodecError:
            return  # agents drop unparseable frames
        reply = self.server.sim.serve(self.server.network, message)
        if reply is None:
            return
        try:
            self.sock.sendall(frame_message(self.server.protocol, reply))
        except OSError:
            self.close()

    def close(self):
        self.closed = True
        try:
            self.sock.close()
        except OSError:
            pass


def serve(sim: Simulation, host: str = "127.0.0.1") -> dict[str, NetworkServer]:
    """Bind one server per network and wire trap push-out. Ports are
    ephemeral; read them back via routes_text."""
    servers = {network: NetworkServer(sim, network, host)
               for network in sorted(sim.stores)}
    for server in servers.values():
        server.start()
    sim.add_trap_sink(lambda network, frame: servers[network].push(frame))
    return servers


def routes_text(servers: dict[str, NetworkServer]) -> str:
    lines = [f"{name}|{server.protocol}|{server.host}:{server.port}"
             for name, server in sorted(servers.items())]
    return "\n".join(lines) + "\n"


def run_paced(sim: Simulation, ticks: Optional[int], rate: float,
              stop: threading.Event) -> None:
    """Step at `rate` ticks per wall second until done or stopped. A tick
    budget of None steps forever; 0 serves a frozen world."""
    period = 1.0 / rate
    next_at = time.monotonic()
    done = 0
    while not stop.is_set() and (ticks is None or done < ticks):
        sim.step()
        done += 1
        next_at += period
        delay = next_at - time.monotonic()
        if delay > 0:
            stop.wait(delay)
