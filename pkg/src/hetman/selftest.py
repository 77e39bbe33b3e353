"""Randomized self-checks behind `hetman check`.

Each check regenerates a seeded workload and verifies one contract against
an independent reference: codec roundtrips plus fuzz totality, translation
roundtrips over the default scenario's rule table, and get_next iteration
against brute-force enumeration. Results are JSON-ready dicts with an `ok`
flag and a capped failure list, so a scripted caller can both gate on the
exit status and inspect what went wrong.
"""

from __future__ import annotations

import random
import string
import time
from dataclasses import replace
from typing import Callable, Optional

from .gateway import (
    INDICATION,
    READ_REQUEST,
    READ_RESPONSE,
    STATUS_OK,
    WRITE_REQUEST,
    _split_subject,
    decode_frame,
    rebuild,
    translate_from_generic,
    translate_to_generic,
)
from .mib import (
    Access,
    CounterVal,
    EndOfMib,
    FcapsCategory,
    GaugeVal,
    IntegerVal,
    MibStore,
    ObjectDescriptor,
    ObjectValue,
    OctetsVal,
    Oid,
    OidVal,
    TimeTicksVal,
    U32_MAX,
    VALUE_KINDS,
    oid_parse,
)
from .netsim import Simulation, scenario_default
from .protocols import CodecError
from .protocols.cell import CellRecord, cell_decode, cell_encode, render_raw
from .protocols.snap import (
    OP_GET,
    OP_RESPONSE,
    OP_SET,
    OP_TRAP,
    OPS,
    SnapMessage,
    snap_decode,
    snap_encode,
)
from .protocols.telm import TelmMessage, VERBS, telm_decode, telm_encode

FAILURE_CAP = 10
FUZZ_MAX_LEN = 4096

_TOKEN = string.ascii_letters + string.digits + "_.-"
_NAME = string.ascii_letters + string.digits + "_"
_ERROR_STATUSES = ("NoSuchObject", "ReadOnly", "WrongType", "Malformed")


# random message material


def _text(rng: random.Random, alphabet: str, lo: int = 1, hi: int = 10) -> str:
    return "".join(rng.choice(alphabet) for _ in range(rng.randrange(lo, hi)))


def _rand_oid(rng: random.Random, max_arcs: int = 6) -> Oid:
    return Oid(tuple(rng.randrange(0, 2 ** 16)
                     for _ in range(rng.randrange(1, max_arcs + 1))))


def _rand_value(rng: random.Random) -> ObjectValue:
    pick = rng.randrange(6)
    if pick == 0:
        return IntegerVal(rng.randrange(-(2 ** 63), 2 ** 63))
    if pick == 1:
        return CounterVal(rng.randrange(0, U32_MAX + 1))
    if pick == 2:
        return GaugeVal(rng.randrange(0, U32_MAX + 1))
    if pick == 3:
        return OctetsVal(rng.randbytes(rng.randrange(0, 40)))
    if pick == 4:
        return OidVal(_rand_oid(rng))
    return TimeTicksVal(rng.randrange(0, U32_MAX + 1))


def _value_of_kind(rng: random.Random, kind: str) -> ObjectValue:
    """A value of the given kind whose text rendering is canonical."""
    if kind == "i":
        return IntegerVal(rng.randrange(-(2 ** 31), 2 ** 31))
    if kind == "c":
        return CounterVal(rng.randrange(0, U32_MAX + 1))
    if kind == "g":
        return GaugeVal(rng.randrange(0, U32_MAX + 1))
    if kind == "t":
        return TimeTicksVal(rng.randrange(0, U32_MAX + 1))
    if kind == "o":
        return OidVal(_rand_oid(rng))
    return OctetsVal.of_text(_text(rng, _NAME + ".-", 1, 13))


def _rand_snap(rng: random.Random) -> SnapMessage:
    varbinds = []
    for _ in range(rng.randrange(0, 12)):
        value = None if rng.random() < 0.3 else _rand_value(rng)
        varbinds.append((_rand_oid(rng), value))
    return SnapMessage(rng.choice(OPS), rng.randrange(0, 2 ** 32),
                       rng.randrange(0, 5), varbinds)


def _rand_telm(rng: random.Random) -> TelmMessage:
    path = "/".join(_text(rng, _TOKEN) for _ in range(rng.randrange(1, 5)))
    attrs = []
    for _ in range(rng.randrange(0, 6)):
        value = None if rng.random() < 0.25 else _rand_value(rng)
        attrs.append((_text(rng, _NAME), value))
    return TelmMessage(rng.choice(VERBS), path, rng.randrange(0, 2 ** 32), attrs)


def _rand_cell(rng: random.Random) -> CellRecord:
    imsi = "".join(rng.choice(string.digits) for _ in range(15))
    pairs = []
    for _ in range(rng.randrange(0, 6)):
        raw = _text(rng, _NAME + ".:- ", 0, 12).strip()
        pairs.append((_text(rng, _NAME), raw))
    return CellRecord(rng.choice(("POLL", "REPORT", "CMD", "ALERT")), imsi,
                      rng.randrange(0, 2 ** 16), pairs)


def _fuzz_case(rng: random.Random, pool: list[bytes]) -> bytes:
    mode = rng.randrange(3)
    if mode == 0 or not pool:
        return rng.randbytes(rng.randrange(0, FUZZ_MAX_LEN + 1))
    data = bytearray(rng.choice(pool)[:FUZZ_MAX_LEN])
    if mode == 1 and data:
        for _ in range(rng.randrange(1, 6)):
            data[rng.randrange(len(data))] = rng.randrange(256)
        return bytes(data)
    cut = rng.randrange(0, len(data) + 1)
    return bytes(data[:cut]) + rng.randbytes(rng.randrange(0, 8))


def _note(failures: list[dict], **fields) -> None:
    if len(failures) < FAILURE_CAP:
        failures.append(fields)


def check_codecs(roundtrips: int = 10_000, fuzz: int = 100_000,
                 seed: int = 0) -> dict:
    """decode(encode(m)) identity on valid messages; structured errors on junk."""
    rng = random.Random(f"{seed}:codecs")
    started = time.monotonic()
    failures: list[dict] = []
    codecs: dict[str, tuple[Callable, Callable, Callable]] = {
        "snap": (_rand_snap, snap_encode, snap_decode),
        "telm": (_rand_telm, telm_encode, telm_decode),
        "cell": (_rand_cell, cell_encode, cell_decode),
    }

    pool: dict[str, list[bytes]] = {name: [] for name in codecs}
    for protocol, (gen, encode, decode) in codecs.items():
        for case in range(roundtrips):
            msg = gen(rng)
            try:
                encoded = encode(msg)
                again = decode(encoded)
            except Exception as exc:
                _note(failures, check="roundtrip", protocol=protocol, case=case,
                      reason=f"{type(exc).__name__}: {exc}",
                      message=repr(msg)[:200])
                continue
            if again != msg:
                _note(failures, check="roundtrip", protocol=protocol, case=case,
                      reason="decode(encode(m)) != m", message=repr(msg)[:200])
            if len(pool[protocol]) < 64:
                raw = encoded if isinstance(encoded, bytes) else encoded.encode("ascii")
                pool[protocol].append(raw)

    decoded = rejected = 0
    names = sorted(codecs)
    for case in range(fuzz):
        protocol = names[case % len(names)]
        raw = _fuzz_case(rng, pool[protocol])
        try:
            decode_frame(protocol, raw)
            decoded += 1
        except CodecError:
            rejected += 1
        except Exception as exc:  # anything unstructured is the defect
            _note(failures, check="fuzz", protocol=protocol, case=case,
                  reason=f"{type(exc).__name__}: {exc}", payload=raw[:40].hex())

    return {"check": "codecs", "ok": not failures,
            "roundtrips": {name: roundtrips for name in names},
            "fuzz": {"cases": fuzz, "decoded": decoded, "rejected": rejected},
            "seconds": round(time.monotonic() - started, 3),
            "failures": failures}


# translation roundtrip over the default scenario's rule table


def _rule_groups(sim: Simulation) -> dict[str, dict[str, dict[str, list]]]:
    """protocol -> subject -> {data|alarm: [(full native name, value kind)]}"""
    groups: dict[str, dict[str, dict[str, list]]] = {}
    for rule in sim.rules.rules:
        if rule.direction != "to_generic":
            continue
        _, subject = _split_subject(rule.protocol, rule.native_name)
        kind = sim.schema.require(rule.cim_class).property(rule.cim_property).kind
        slot = groups.setdefault(rule.protocol, {}).setdefault(
            subject, {"data": [], "alarm": []})
        bucket = "alarm" if rule.cim_class == "Alarm" else "data"
        slot[bucket].append((rule.native_name, kind))
    return groups


def _wire_message(rng: random.Random, protocol: str, subject: str,
                  columns: dict[str, list]):
    shape = rng.choice((READ_REQUEST, WRITE_REQUEST, READ_RESPONSE, INDICATION))
    bucket = columns["alarm"] if shape == INDICATION else columns["data"]
    picked = rng.sample(bucket, rng.randrange(1, len(bucket) + 1))
    status = STATUS_OK
    if shape == READ_RESPONSE and rng.random() < 0.3:
        status = rng.choice(_ERROR_STATUSES)

    def value_for(kind: str) -> Optional[ObjectValue]:
        if shape == READ_REQUEST:
            return None
        if shape == READ_RESPONSE and rng.random() < 0.2:
            return None
        return _value_of_kind(rng, kind)

    correlator = rng.randrange(1, 2 ** 16)
    if protocol == "snap":
        op = {READ_REQUEST: OP_GET, WRITE_REQUEST: OP_SET,
              READ_RESPONSE: OP_RESPONSE, INDICATION: OP_TRAP}[shape]
        code = {STATUS_OK: 0, "NoSuchObject": 1, "ReadOnly": 2,
                "WrongType": 3, "Malformed": 4}[status]
        varbinds = [(oid_parse(name), value_for(kind)) for name, kind in picked]
        return SnapMessage(op, correlator, code, varbinds)
    if protocol == "telm":
        verb = {READ_REQUEST: "GET", WRITE_REQUEST: "SET",
                READ_RESPONSE: "RESP", INDICATION: "EVT"}[shape]
        attrs = [(name.rpartition("/")[2], value_for(kind))
                 for name, kind in picked]
        if status != STATUS_OK:
            attrs.append(("err", OctetsVal.of_text(status)))
        return TelmMessage(verb, subject, correlator, attrs)
    kind_name = {READ_REQUEST: "POLL", WRITE_REQUEST: "CMD",
                 READ_RESPONSE: "REPORT", INDICATION: "ALERT"}[shape]
    pairs = []
    for name, kind in picked:
        value = _value_of_kind(rng, kind) if shape != READ_REQUEST else None
        pairs.append((name.rpartition("/")[2],
                      "" if value is None else render_raw(value)))
    if status != STATUS_OK:
        pairs.append(("err", status))
    return CellRecord(kind_name, subject, correlator, pairs)


def _scrub_indication(msg):
    """Indications correlate as 0 after a roundtrip; compare modulo that."""
    if isinstance(msg, SnapMessage) and msg.op == OP_TRAP:
        return replace(msg, request_id=0)
    if isinstance(msg, TelmMessage) and msg.verb == "EVT":
        return replace(msg, tag=0)
    if isinstance(msg, CellRecord) and msg.kind == "ALERT":
        return replace(msg, seq=0)
    return msg


def check_translation(cases: int = 1_000, seed: int = 0) -> dict:
    """rebuild(translate(m)) == m for fully mapped messages, any protocol."""
    rng = random.Random(f"{seed}:translation")
    started = time.monotonic()
    failures: list[dict] = []
    sim = Simulation(scenario_default(seed=seed))
    groups = _rule_groups(sim)

    counts: dict[str, int] = {}
    for protocol in sorted(groups):
        subjects = sorted(groups[protocol])
        counts[protocol] = cases
        for case in range(cases):
            subject = rng.choice(subjects)
            msg = _wire_message(rng, protocol, subject, groups[protocol][subject])
            try:
                generic, notes = translate_to_generic(
                    msg, f"{protocol}-check", sim.rules, sim.schema)
                if notes:
                    _note(failures, protocol=protocol, case=case,
                          reason=f"unmapped inbound: {notes}",
                          message=repr(msg)[:200])
                    continue
                draft, notes = translate_from_generic(generic, protocol, sim.rules)
                if notes:
                    _note(failures, protocol=protocol, case=case,
                          reason=f"unmapped outbound: {notes}",
                          message=repr(msg)[:200])
                    continue
                wire = rebuild(draft)
            except Exception as exc:
                _note(failures, protocol=protocol, case=case,
                      reason=f"{type(exc).__name__}: {exc}",
                      message=repr(msg)[:200])
                continue
            if len(wire) != 1:
                _note(failures, protocol=protocol, case=case,
                      reason=f"rebuilt into {len(wire)} messages",
                      message=repr(msg)[:200])
            elif _scrub_indication(wire[0]) != _scrub_indication(msg):
                _note(failures, protocol=protocol, case=case,
                      reason="rebuilt message differs",
                      message=repr(msg)[:200], rebuilt=repr(wire[0])[:200])

    return {"check": "translation", "ok": not failures, "cases": counts,
            "seconds": round(time.monotonic() - started, 3),
            "failures": failures}


# get_next against brute-force enumeration


def _random_store(rng: random.Random, entries: int) -> tuple[MibStore, list]:
    store = MibStore()
    arcs: set[tuple[int, ...]] = set()
    while len(arcs) < entries:
        arcs.add(_rand_oid(rng).arcs)
    assigned = []
    for index, key in enumerate(sorted(arcs)):
        kind = rng.choice(sorted(VALUE_KINDS))
        store.register(ObjectDescriptor(Oid(key), f"n{index}", kind,
                                        Access.RW, FcapsCategory.CONFIGURATION))
        if rng.random() < 0.7:
            value = _value_of_kind(rng, kind)
            store.set(Oid(key), value, force=True)
            assigned.append((key, value))
    return store, assigned


def check_walk(stores: int = 100, max_entries: int = 10_000,
               seed: int = 0) -> dict:
    """Walk and get_next agree with sorted brute-force enumeration."""
    rng = random.Random(f"{seed}:walk")
    started = time.monotonic()
    failures: list[dict] = []
    total_entries = total_probes = 0

    for index in range(stores):
        if index == 0:
            entries = max_entries
        elif index == 1:
            entries = 0
        else:  # log-uniform sizes keep the totals sane but still hit big stores
            entries = int(max_entries ** rng.random())
        store, assigned = _random_store(rng, entries)
        total_entries += entries
        expected = [key for key, _ in assigned]

        walked = [(oid.arcs, value) for oid, value in store.walk()]
        if walked != assigned:
            _note(failures, store=index, reason="walk order diverges",
                  entries=entries, assigned=len(assigned))
            continue

        bad_chain = False
        for pos, (key, _) in enumerate(assigned):
            try:
                next_oid, next_value = store.get_next(Oid(key))
            except EndOfMib:
                if pos != len(assigned) - 1:
                    _note(failures, store=index, reason="early EndOfMib",
                          at=Oid(key).text())
                    bad_chain = True
                    break
                continue
            if pos == len(assigned) - 1 or (next_oid.arcs, next_value) != assigned[pos + 1]:
                _note(failures, store=index, reason="bad successor",
                      at=Oid(key).text(), got=next_oid.text())
                bad_chain = True
                break
        if bad_chain:
            continue

        for _ in range(20):
            probe = _rand_oid(rng)
            # linear reference scan; the sorted list is the oracle's only index
            reference = next((pair for pair in assigned if pair[0] > probe.arcs),
                             None)
            total_probes += 1
            try:
                got = store.get_next(probe)
            except EndOfMib:
                got = None
            if got is not None:
                got = (got[0].arcs, got[1])
            if got != reference:
                _note(failures, store=index, reason="probe successor differs",
                      probe=probe.text())

    return {"check": "walk", "ok": not failures, "stores": stores,
            "entries": total_entries, "probes": total_probes,
            "seconds": round(time.monotonic() - started, 3),
            "failures": failures}


CHECKS: dict[str, Callable[..., dict]] = {
    "codecs": check_codecs,
    "translation": check_translation,
    "walk": check_walk,
}
