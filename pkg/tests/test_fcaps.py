"""Management engines against explicit oracles: a session-grouping model for
alarm correlation, a 3-state machine for the alarm lifecycle, brute-force
rational summation for billing, and closed-form least squares for trends."""

from __future__ import annotations

import random
from fractions import Fraction

import pytest

from hetman.cim import Origin
from hetman.fcaps import (
    ACTIONS,
    CORRELATION_WINDOW,
    AccessRule,
    AcctEngine,
    Alarm,
    ConfigEngine,
    ConfigSnapshot,
    Decision,
    FaultEngine,
    FcapsError,
    ManagementLayer,
    PerfEngine,
    PerfSample,
    Principal,
    SecEngine,
    UsageRecord,
    money_text,
    parse_access,
    parse_principals,
    parse_rates,
    parse_records,
)
from hetman.gateway import INDICATION, GenericMessage, TransportDown
from hetman.mib import IntegerVal, OctetsVal, TimeTicksVal, oid_parse

from netfix import make_gateway

_RANK = {"minor": 0, "major": 1, "critical": 2}


# fault management


def test_first_trap_raises_new_alarm():
    eng = FaultEngine()
    alarm = eng.raise_event("wlan0", "laptop-1", "major", "link-down", 10.0)
    assert alarm.state == "Raised"
    assert alarm.duplicate_count == 1
    assert alarm.raised_at == 10.0
    assert alarm.alarm_id == 1


def test_duplicates_within_window_fold_into_one():
    eng = FaultEngine()
    for at in (10.0, 20.0, 30.0):
        alarm = eng.raise_event("wlan0", "laptop-1", "major", "link-down", at)
    assert alarm.duplicate_count == 3
    assert len(eng.alarms()) == 1

    # same cause from a different agent is a different problem
    other = eng.raise_event("wlan0", "laptop-2", "major", "link-down", 21.0)
    assert other.alarm_id != alarm.alarm_id
    assert len(eng.alarms()) == 2


def test_correlation_chains_beyond_one_window():
    eng = FaultEngine()
    for at in (0.0, 25.0, 50.0, 75.0):  # each within 30 of the previous
        alarm = eng.raise_event("lan0", "pc-0", "minor", "battery-dead", at)
    assert alarm.duplicate_count == 4
    # a 31-second silence starts a new alarm
    fresh = eng.raise_event("lan0", "pc-0", "minor", "battery-dead", 106.1)
    assert fresh.duplicate_count == 1
    assert len(eng.alarms()) == 2


def test_late_trap_bridges_and_merges_groups():
    eng = FaultEngine()
    first = eng.raise_event("wlan0", "laptop-1", "minor", "link-down", 0.0)
    second = eng.raise_event("wlan0", "laptop-1", "critical", "link-down", 40.0)
    assert first.alarm_id != second.alarm_id
    merged = eng.raise_event("wlan0", "laptop-1", "major", "link-down", 20.0)
    assert merged.alarm_id == first.alarm_id
    assert merged.duplicate_count == 3
    assert merged.raised_at == 0.0
    assert merged.severity == "critical"  # highest seen in the group
    with pytest.raises(FcapsError) as err:
        eng.get(second.alarm_id)
    assert err.value.code == "NoSuchAlarm"


def test_resolved_alarms_do_not_correlate():
    eng = FaultEngine()
    alarm = eng.raise_event("wlan0", "laptop-1", "major", "link-down", 10.0)
    eng.resolve(alarm.alarm_id, 11.0)
    again = eng.raise_event("wlan0", "laptop-1", "major", "link-down", 12.0)
    assert again.alarm_id != alarm.alarm_id
    assert again.duplicate_count == 1


def _sessions(events: list[tuple[float, str]]) -> list[tuple[float, int, str]]:
    """Independent grouping model: sort, chain while gaps stay within the
    window; report (raised_at, count, max severity) per chain."""
    groups: list[list[tuple[float, str]]] = []
    for event in sorted(events):
        if groups and event[0] - groups[-1][-1][0] <= CORRELATION_WINDOW:
            groups[-1].append(event)
        else:
            groups.append([event])
    return [(g[0][0], len(g), max((s for _, s in g), key=_RANK.get)) for g in groups]


def test_correlation_is_ingest_order_independent():
    rng = random.Random(30)
    keys = [("wlan0", "laptop-1", "link-down"), ("wlan0", "laptop-2", "link-down"),
            ("cell0", "phone-3", "battery-dead")]
    for _ in range(60):
        traps = []
        for key in keys:
            for _ in range(rng.randrange(0, 8)):
                at = round(rng.uniform(0, 200), 2)
                severity = rng.choice(["minor", "major", "critical"])
                traps.append((key, at, severity))
        expected = set()
        for key in keys:
            events = [(at, sev) for k, at, sev in traps if k == key]
            for raised_at, count, severity in _sessions(events):
                expected.add(key + (raised_at, count, severity))

        rng.shuffle(traps)
        eng = FaultEngine()
        for (network, agent, cause), at, severity in traps:
            eng.raise_event(network, agent, severity, cause, at)
        got = {(a.network, a.agent, a.cause, a.raised_at, a.duplicate_count,
                a.severity) for a in eng.alarms()}
        assert got == expected


def test_lifecycle_against_state_machine():
    legal = {("Raised", "ack"): "Acknowledged",
             ("Raised", "resolve"): "Resolved",
             ("Acknowledged", "resolve"): "Resolved"}
    rng = random.Random(31)
    eng = FaultEngine()
    ids = []
    model = {}
    for i in range(12):  # distinct causes keep the alarms independent
        alarm = eng.raise_event("lan0", "pc-0", "minor", f"cause-{i}", float(i * 100))
        ids.append(alarm.alarm_id)
        model[alarm.alarm_id] = "Raised"
    for _ in range(300):
        alarm_id = rng.choice(ids)
        op = rng.choice(["ack", "resolve"])
        at = rng.uniform(0, 2000)
        want = legal.get((model[alarm_id], op))
        apply_op = eng.ack if op == "ack" else eng.resolve
        if want is None:
            with pytest.raises(FcapsError) as err:
                apply_op(alarm_id, at)
            assert err.value.code == "IllegalTransition"
        else:
            alarm = apply_op(alarm_id, at)
            model[alarm_id] = want
            assert alarm.state == want
        alarm = eng.get(alarm_id)
        if alarm.acked_at is not None:
            assert alarm.raised_at <= alarm.acked_at
        if alarm.resolved_at is not None:
            assert alarm.resolved_at >= (alarm.acked_at or alarm.raised_at)


def test_ack_and_resolve_timestamps_clamp_monotone():
    eng = FaultEngine()
    alarm = eng.raise_event("wlan0", "laptop-1", "major", "link-down", 50.0)
    acked = eng.ack(alarm.alarm_id, 10.0)  # clock lagging behind the trap
    assert acked.acked_at == 50.0
    resolved = eng.resolve(alarm.alarm_id, 20.0)
    assert resolved.resolved_at == 50.0
    with pytest.raises(FcapsError) as err:
        eng.ack(alarm.alarm_id, 60.0)
    assert err.value.code == "IllegalTransition"
    with pytest.raises(FcapsError) as err:
        eng.resolve(999, 0.0)
    assert err.value.code == "NoSuchAlarm"


def _indication(items, network="wlan0", agent="2"):
    return GenericMessage(INDICATION, 0, Origin(network, agent, "snap"), items)


def test_ingest_indication_fields():
    eng = FaultEngine()
    alarm = eng.ingest(_indication([
        ("Alarm", "severity", OctetsVal.of_text("critical")),
        ("Alarm", "cause", OctetsVal.of_text("link-down")),
        ("Alarm", "source", OctetsVal.of_text("laptop-1")),
        ("Alarm", "observedTicks", TimeTicksVal(1250)),
    ]))
    assert alarm.network == "wlan0"
    assert alarm.agent == "laptop-1"  # the named source, not the wire subject
    assert alarm.severity == "critical"
    assert alarm.raised_at == 12.5
    assert not alarm.flagged


def test_ingest_without_cause_is_flagged_unknown():
    eng = FaultEngine()
    alarm = eng.ingest(_indication([
        ("Alarm", "severity", OctetsVal.of_text("major")),
        ("Alarm", "observedTicks", TimeTicksVal(100)),
    ]))
    assert alarm.cause == "unknown"
    assert alarm.flagged
    # no ticks either: the supplied clock stands in
    other = eng.ingest(_indication([], agent="3"), now=7.0)
    assert other.raised_at == 7.0
    assert other.severity == "minor"
    with pytest.raises(FcapsError):
        eng.ingest(GenericMessage("ReadRequest", 1,
                                  Origin("wlan0", "2", "snap"), []))


def test_alarm_filters_and_open_count():
    eng = FaultEngine()
    a1 = eng.raise_event("wlan0", "laptop-1", "major", "link-down", 1.0)
    eng.raise_event("lan0", "pc-0", "minor", "battery-dead", 2.0)
    eng.resolve(a1.alarm_id, 3.0)
    assert [a.network for a in eng.alarms()] == ["wlan0", "lan0"]
    assert len(eng.alarms(network="lan0")) == 1
    assert len(eng.alarms(state="Resolved")) == 1
    assert eng.open_count() == 1
    assert eng.open_count("wlan0") == 0


# configuration management


def test_backup_captures_writable_objects(tmp_path):
    gw, stores, _, _ = make_gateway()
    eng = ConfigEngine(gw, tmp_path)
    assert eng.writable_names("wlan0") == ["1.8.1", "1.8.2"]
    snap = eng.backup("wlan0")
    assert snap.snapshot_id == 1
    assert snap.entries == (
        ("1.8.1", stores["wlan0"].get(oid_parse("1.8.1"))),
        ("1.8.2", stores["wlan0"].get(oid_parse("1.8.2"))),
    )
    path = tmp_path / "wlan0-1.cfg"
    assert path.exists()
    assert path.read_text() == snap.render()
    assert ConfigEngine.diff(snap, snap) == []
    loaded = eng.load("wlan0", 1)
    assert loaded.entries == snap.entries


def test_diff_lists_exactly_the_changed_entry(tmp_path):
    gw, stores, _, _ = make_gateway()
    eng = ConfigEngine(gw, tmp_path)
    before = eng.backup("wlan0")
    stores["wlan0"].set(oid_parse("1.8.1"), OctetsVal.of_text("drift"), force=True)
    after = eng.backup("wlan0")
    assert ConfigEngine.diff(before, after) == [
        ("1.8.1", OctetsVal.of_text("lab-a"), OctetsVal.of_text("drift"))]


def test_restore_rewrites_drifted_values(tmp_path):
    gw, stores, _, _ = make_gateway()
    eng = ConfigEngine(gw, tmp_path)
    golden = eng.backup("wlan0")
    stores["wlan0"].set(oid_parse("1.8.1"), OctetsVal.of_text("drift"), force=True)
    report = eng.restore("wlan0", golden)
    assert report == [("1.8.1", "written"), ("1.8.2", "equal")]
    assert stores["wlan0"].get(oid_parse("1.8.1")) == OctetsVal.of_text("lab-a")
    # fixpoint: a fresh backup shows no drift against the golden snapshot
    assert ConfigEngine.diff(golden, eng.backup("wlan0")) == []


def test_restore_reports_failed_entries(tmp_path):
    gw, _, _, _ = make_gateway()
    eng = ConfigEngine(gw, tmp_path)
    snapshot = ConfigSnapshot(99, "wlan0", 0.0, (
        ("1.2.1", IntegerVal(50)),   # read-only on the agent
        ("9.9.9", IntegerVal(1)),    # not an object at all
    ))
    report = eng.restore("wlan0", snapshot)
    assert report == [("1.2.1", "failed:ReadOnly"), ("9.9.9", "failed:NoSuchObject")]


def test_backup_unreachable_network(tmp_path):
    class DeadTransport:
        def __init__(self, entry):
            self.entry = entry

        def exchange(self, frame):
            raise TransportDown(self.entry.address)

        def close(self):
            pass

    gw, _, _, _ = make_gateway(factory=DeadTransport)
    eng = ConfigEngine(gw, tmp_path)
    with pytest.raises(FcapsError) as err:
        eng.backup("wlan0")
    assert err.value.code == "NetworkUnreachable"


def test_snapshot_ids_survive_restart(tmp_path):
    gw, _, _, _ = make_gateway()
    eng = ConfigEngine(gw, tmp_path)
    eng.backup("wlan0")
    eng.backup("lan0")
    again = ConfigEngine(gw, tmp_path)
    snap = again.backup("wlan0")
    assert snap.snapshot_id == 3
    assert again.list_snapshots("wlan0") == [1, 3]
    with pytest.raises(FcapsError) as err:
        again.load("wlan0", 7)
    assert err.value.code == "bad-snapshot"


# accounting management


def test_minutes_times_rate():
    eng = AcctEngine()
    eng.record(UsageRecord("alice", "voice", Fraction(120), Fraction(0), Fraction(10)))
    result = eng.bill(Fraction(0), Fraction(100), {"voice": Fraction(5, 100)})
    assert result.ledger == {"alice": Fraction(6)}
    assert money_text(result.ledger["alice"]) == "6.00"
    assert result.unbilled == []


def test_empty_period_and_intersection_edges():
    eng = AcctEngine()
    rec = UsageRecord("bob", "data", Fraction(5), Fraction(10), Fraction(20))
    eng.record(rec)
    rates = {"data": Fraction(1)}
    assert eng.bill(Fraction(30), Fraction(40), rates).ledger == {}
    # closed-interval touch at either end still counts
    assert eng.bill(Fraction(20), Fraction(30), rates).ledger == {"bob": Fraction(5)}
    assert eng.bill(Fraction(0), Fraction(10), rates).ledger == {"bob": Fraction(5)}


def test_unknown_service_is_listed_not_zeroed():
    eng = AcctEngine()
    known = UsageRecord("alice", "voice", Fraction(1), Fraction(0), Fraction(1))
    stray = UsageRecord("alice", "fax", Fraction(1), Fraction(0), Fraction(1))
    eng.record(known)
    eng.record(stray)
    result = eng.bill(Fraction(0), Fraction(10), {"voice": Fraction(2)})
    assert result.ledger == {"alice": Fraction(2)}
    assert result.unbilled == [stray]


def test_billing_matches_brute_force_oracle_exactly():
    rng = random.Random(7)
    services = ["voice", "data", "sms", "fax"]  # fax stays unrated
    rates = {"voice": Fraction(5, 100), "data": Fraction(1, 1024),
             "sms": Fraction(1, 10)}
    eng = AcctEngine()
    records = []
    for _ in range(200):
        start = Fraction(rng.randrange(0, 100))
        rec = UsageRecord(
            rng.choice(["alice", "bob", "carol"]),
            rng.choice(services),
            Fraction(rng.randrange(0, 10000), rng.randrange(1, 100)),
            start,
            start + Fraction(rng.randrange(0, 50)),
        )
        records.append(rec)
        eng.record(rec)

    lo, hi = Fraction(30), Fraction(70)
    expected: dict[str, Fraction] = {}
    expected_unbilled = []
    for rec in records:
        if rec.period_end < lo or rec.period_start > hi:
            continue
        if rec.service not in rates:
            expected_unbilled.append(rec)
            continue
        expected[rec.payer] = expected.get(rec.payer, Fraction(0)) \
            + rec.quantity * rates[rec.service]

    result = eng.bill(lo, hi, rates)
    assert result.ledger == expected  # exact rational equality, no drift
    assert result.unbilled == expected_unbilled


def test_money_rendering_half_up():
    assert money_text(Fraction(0)) == "0.00"
    assert money_text(Fraction(1, 200)) == "0.01"      # 0.005 rounds up
    assert money_text(Fraction(2675, 1000)) == "2.68"  # no float artifacts
    assert money_text(Fraction(1, 3)) == "0.33"
    assert money_text(Fraction(5, 2)) == "2.50"
    assert money_text(Fraction(1999, 1000)) == "2.00"


def test_parse_records_and_rates():
    records = parse_records(
        "# usage\n"
        "alice|voice|120|0|10\n"
        "bob|data|3/2|5.5|6\n"
    )
    assert records[1].quantity == Fraction(3, 2)
    assert records[1].period_start == Fraction(11, 2)
    rates = parse_rates("voice|0.05\ndata|1/1024\n")
    assert rates == {"voice": Fraction(1, 20), "data": Fraction(1, 1024)}

    bad_records = ["a|b|1|0", "a|b|x|0|1", "a|b|-1|0|1", "a|b|1|5|4", "|b|1|0|1"]
    for text in bad_records:
        with pytest.raises(FcapsError) as err:
            parse_records(text)
        assert err.value.code == "bad-record", text
    for text in ["voice|-1", "voice|0.05\nvoice|0.06", "voice|x", "|0.05"]:
        with pytest.raises(FcapsError) as err:
            parse_rates(text)
        assert err.value.code == "bad-rate", text


# performance management


def test_stats_over_window():
    eng = PerfEngine()
    for at, value in ((1.0, 0.2), (2.0, 0.4), (3.0, 0.6), (99.0, 1.0)):
        eng.ingest(PerfSample("laptop-1", "utilization", value, at))
    stats = eng.stats("laptop-1", "utilization", 0.0, 10.0)
    assert stats["count"] == 3
    assert stats["mean"] == pytest.approx(0.4)
    assert stats["min"] == 0.2
    assert stats["max"] == 0.6
    # window bounds are inclusive
    assert eng.stats("laptop-1", "utilization", 99.0, 99.0)["count"] == 1
    with pytest.raises(FcapsError) as err:
        eng.stats("laptop-1", "utilization", 200.0, 300.0)
    assert err.value.code == "NoSamples"


def test_trend_constant_series_is_flat():
    eng = PerfEngine()
    for at in range(10):
        eng.ingest(PerfSample("pc-0", "response_time_ms", 12.5, float(at)))
    assert eng.trend("pc-0", "response_time_ms", 0.0, 100.0) == pytest.approx(0.0, abs=1e-12)


def test_trend_matches_closed_form_least_squares():
    rng = random.Random(8)
    eng = PerfEngine()
    xs = sorted(rng.sample(range(100000), 120))
    xs = [x / 10.0 for x in xs]
    ys = [rng.uniform(0, 500) for _ in xs]
    for x, y in zip(xs, ys):
        eng.ingest(PerfSample("pc-0", "response_time_ms", y, x))
    mx = sum(xs) / len(xs)
    my = sum(ys) / len(ys)
    slope = sum((x - mx) * (y - my) for x, y in zip(xs, ys)) \
        / sum((x - mx) ** 2 for x in xs)
    got = eng.trend("pc-0", "response_time_ms", 0.0, 1e6)
    assert got == pytest.approx(slope * 3600.0, rel=1e-9)


def test_trend_needs_two_spread_samples():
    eng = PerfEngine()
    with pytest.raises(FcapsError) as err:
        eng.trend("pc-0", "utilization", 0.0, 10.0)
    assert err.value.code == "InsufficientSamples"
    eng.ingest(PerfSample("pc-0", "utilization", 0.5, 1.0))
    with pytest.raises(FcapsError):
        eng.trend("pc-0", "utilization", 0.0, 10.0)
    eng.ingest(PerfSample("pc-0", "utilization", 0.7, 1.0))  # same instant
    with pytest.raises(FcapsError) as err:
        eng.trend("pc-0", "utilization", 0.0, 10.0)
    assert err.value.code == "InsufficientSamples"


def test_sample_validation():
    cases = [
        ("utilization", 1.5),
        ("utilization", -0.1),
        ("error_count", 2.5),
        ("error_count", -1.0),
        ("response_time_ms", -4.0),
        ("bogus", 1.0),
    ]
    for metric, value in cases:
        with pytest.raises(FcapsError) as err:
            PerfSample("x", metric, value, 0.0)
        assert err.value.code == "bad-sample", (metric, value)
    PerfSample("x", "error_count", 3.0, 0.0)  # integral is fine


# security management


def test_deny_by_default():
    eng = SecEngine([Principal("alice", "t1")], [])
    for action in ACTIONS:
        decision = eng.check("alice", action, "lan0")
        assert decision == Decision(False, "no-rule")
    assert eng.check("mallory", "read", "lan0") == Decision(False, "no-principal")


def test_rule_matching():
    eng = SecEngine(
        [Principal("alice", "t1"), Principal("ops", "t2")],
        [AccessRule("alice", "write", "lan0"),
         AccessRule("alice", "read", "*"),
         AccessRule("ops", "backup", "wlan*")],
    )
    assert eng.check("alice", "write", "lan0").allowed
    assert eng.check("alice", "read", "cell0").allowed
    assert eng.check("alice", "write", "wlan0") == Decision(False, "no-rule")
    assert eng.check("ops", "backup", "wlan0").allowed
    assert eng.check("ops", "backup", "lan0") == Decision(False, "no-rule")
    # action match is literal: read does not grant write and admin implies nothing
    assert not eng.check("ops", "read", "wlan0").allowed


def test_login_and_parsing():
    principals = parse_principals("alice|t1\nops|t2\n")
    eng = SecEngine(principals, parse_access("alice|read|*\n# note\n"))
    assert eng.login("alice", "t1")
    assert not eng.login("alice", "wrong")
    assert not eng.login("nobody", "t1")
    assert eng.check("alice", "read", "anything").allowed

    with pytest.raises(FcapsError):
        parse_principals("alice|t1\nalice|t2")
    with pytest.raises(FcapsError):
        parse_principals("alice")
    for text in ["alice|fly|*", "alice|read", "|read|*", "alice|read|"]:
        with pytest.raises(FcapsError) as err:
            parse_access(text)
        assert err.value.code == "bad-access", text


def test_management_layers_are_the_four():
    assert {layer.value for layer in ManagementLayer} == {
        "Element", "Network", "Service", "Business"}


def test_alarm_dict_shape():
    alarm = Alarm(4, "wlan0", "laptop-1", "major", "link-down",
                  raised_at=1.0, members=[(1.0, "major")])
    assert alarm.as_dict() == {
        "alarm_id": 4, "network": "wlan0", "agent": "laptop-1",
        "severity": "major", "cause": "link-down", "state": "Raised",
        "raised_at": 1.0, "acked_at": None, "resolved_at": None,
        "duplicate_count": 1, "flagged": False,
    }
