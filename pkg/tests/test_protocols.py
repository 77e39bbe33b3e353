"""Codec contracts: frozen wire bytes, roundtrips, fuzz totality, agent serving."""

from __future__ import annotations

import random

import pytest

from hetman.mib import (
    Access,
    FcapsCategory,
    IntegerVal,
    MibStore,
    ObjectDescriptor,
    OctetsVal,
    Oid,
    oid_parse,
)
from hetman.protocols import CellError, CodecError, SnapError, TelmError
from hetman.protocols.agent import TrapEvent, agent_serve, emit_trap
from hetman.protocols.cell import CellRecord, cell_decode, cell_encode, coerce_raw, render_raw
from hetman.protocols.snap import (
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
    snap_decode,
    snap_encode,
)
from hetman.protocols.telm import TelmMessage, telm_decode, telm_encode

from genmsg import mutated_frame, rand_cell, rand_snap, rand_telm

# Hand-assembled from the frame grammar: header (magic, version, op=Get,
# request_id=1, error=0, count=1) then one varbind for oid 1.1 with a
# zero-length Null value.
GET_1_1_FRAME = bytes.fromhex(
    "534e" "01" "01" "00000001" "00" "0001"
    "0002" "00000001" "00000001" "00" "0000"
)

EMPTY_RESPONSE_FRAME = bytes.fromhex("534e" "01" "03" "00000000" "00" "0000")


def test_snap_frozen_get_frame():
    msg = SnapMessage(OP_GET, 1, ERR_OK, [(oid_parse("1.1"), None)])
    assert snap_encode(msg) == GET_1_1_FRAME
    back = snap_decode(GET_1_1_FRAME)
    assert back == msg
    assert len(GET_1_1_FRAME) == 11 + 13


def test_snap_frozen_empty_response():
    msg = SnapMessage(OP_RESPONSE, 0)
    assert snap_encode(msg) == EMPTY_RESPONSE_FRAME
    assert len(EMPTY_RESPONSE_FRAME) == 11


def test_snap_decode_rejections():
    assert isinstance(snap_encode(SnapMessage(OP_GET, 1)), bytes)
    with pytest.raises(SnapError) as err:
        snap_decode(b"\x00\x00" + GET_1_1_FRAME[2:])
    assert err.value.code == "bad-magic"
    with pytest.raises(SnapError) as err:
        snap_decode(bytes([0x53, 0x4E, 0x02]) + GET_1_1_FRAME[3:])
    assert err.value.code == "bad-version"
    with pytest.raises(SnapError) as err:
        snap_decode(GET_1_1_FRAME[:-3])
    assert err.value.code == "truncated"
    with pytest.raises(SnapError) as err:
        snap_decode(GET_1_1_FRAME + b"\x00")
    assert err.value.code == "trailing-bytes"
    with pytest.raises(SnapError) as err:
        snap_decode(GET_1_1_FRAME[:21] + b"\x09" + GET_1_1_FRAME[22:])
    assert err.value.code == "bad-tag"
    too_many = bytes.fromhex("534e0101000000010000ff")
    with pytest.raises(SnapError) as err:
        snap_decode(too_many)
    assert err.value.code == "too-many-varbinds"


def test_snap_encode_limits():
    vbs = [(Oid((1, i)), None) for i in range(65)]
    with pytest.raises(SnapError) as err:
        snap_encode(SnapMessage(OP_GET, 1, 0, vbs))
    assert err.value.code == "too-many-varbinds"


def test_telm_frozen_get_line():
    line = telm_encode(TelmMessage("GET", "bsc1/trx2", 7))
    assert line == "TELM/1 GET bsc1/trx2;7\r\n"
    assert telm_decode(line) == TelmMessage("GET", "bsc1/trx2", 7, [])


def test_telm_value_forms():
    msg = TelmMessage("RESP", "pc-0", 3, [
        ("label", OctetsVal(b"critical")),
        ("raw", OctetsVal(b"wlan:wap-1")),
        ("num", IntegerVal(-4)),
        ("ask", None),
    ])
    line = telm_encode(msg)
    assert ";label=critical;" in line
    assert ";raw=s:776c616e3a7761702d31;" in line
    assert ";num=i:-4;" in line
    assert line.endswith(";ask=\r\n")
    assert telm_decode(line) == msg


def test_telm_decode_rejections():
    cases = [
        ("CELL|POLL|000000000000001|1|", "bad-verb"),
        ("TELM/2 GET a;1", "bad-verb"),
        ("TELM/1 PUT a;1", "bad-verb"),
        ("TELM/1 GET ;1", "bad-path"),
        ("TELM/1 GET a/b/c/d/e/f/g/h/i;1", "bad-path"),
        ("TELM/1 GET a", "missing-tag"),
        ("TELM/1 GET a;x", "missing-tag"),
        ("TELM/1 GET a;1;novalue", "bad-pair"),
        ("TELM/1 GET a;1;b@d=1", "bad-pair"),
        ("TELM/1 GET a;1;x=i:zz", "bad-pair"),
    ]
    for line, code in cases:
        with pytest.raises(TelmError) as err:
            telm_decode(line)
        assert err.value.code == code, line


def test_cell_frozen_record():
    rec = CellRecord("REPORT", "001010000000013", 9, [("batt", "77")])
    text = cell_encode(rec)
    assert text == "CELL|REPORT|001010000000013|9|batt:77\n"
    assert cell_decode(text) == rec


def test_cell_value_colon_and_empty_pairs():
    rec = CellRecord("REPORT", "001010000000001", 0, [("att", "wlan:wap-1")])
    assert cell_decode(cell_encode(rec)) == rec
    empty = CellRecord("POLL", "001010000000001", 65535, [])
    assert cell_encode(empty) == "CELL|POLL|001010000000001|65535|\n"
    assert cell_decode(cell_encode(empty)) == empty


def test_cell_decode_rejections():
    cases = [
        ("TELM/1 GET a;1", "bad-kind"),
        ("CELL|NOPE|001010000000001|1|", "bad-kind"),
        ("CELL|POLL|12345|1|", "bad-id"),
        ("CELL|POLL|00101000000000a|1|", "bad-id"),
        ("CELL|POLL|001010000000001|99999|", "malformed"),
        ("CELL|POLL|001010000000001|1|x", "malformed"),
        ("CELL|POLL|001010000000001|1", "malformed"),
        ("CELL|POLL|001010000000001|1|a:1|extra", "malformed"),
    ]
    for text, code in cases:
        with pytest.raises(CellError) as err:
            cell_decode(text)
        assert err.value.code == code, text


def test_cell_oversize():
    rec = CellRecord("REPORT", "0" * 15, 1, [("k", "v" * 500)])
    with pytest.raises(CellError) as err:
        cell_encode(rec)
    assert err.value.code == "oversize"


def test_roundtrip_all_protocols():
    rng = random.Random(70451)
    for _ in range(2000):
        snap = rand_snap(rng)
        assert snap_decode(snap_encode(snap)) == snap
        telm = rand_telm(rng)
        assert telm_decode(telm_encode(telm)) == telm
        cell = rand_cell(rng)
        assert cell_decode(cell_encode(cell)) == cell


def test_fuzz_decoders_total():
    rng = random.Random(90210)
    for i in range(10000):
        blob = mutated_frame(rng, snap_encode(rand_snap(rng)))
        try:
            snap_decode(blob)
        except CodecError:
            pass
        text = blob.decode("utf-8", errors="replace")
        try:
            telm_decode(text)
        except CodecError:
            pass
        try:
            cell_decode(text)
        except CodecError:
            pass


def _store_with(*entries):
    store = MibStore()
    for oid_text, name, kind, access, value in entries:
        store.register(ObjectDescriptor(oid_parse(oid_text), name, kind, access,
                                        FcapsCategory.CONFIGURATION))
        if value is not None:
            store.set(oid_parse(oid_text), value, force=True)
    return store


def test_agent_serve_snap_get_set():
    store = _store_with(
        ("1.2.0", "batt", "i", Access.RO, IntegerVal(88)),
        ("1.8.0", "label", "s", Access.RW, OctetsVal(b"x")),
    )
    resp = agent_serve(store, SnapMessage(OP_GET, 5, 0, [(oid_parse("1.2.0"), None)]))
    assert (resp.op, resp.request_id, resp.error_code) == (OP_RESPONSE, 5, ERR_OK)
    assert resp.varbinds == [(oid_parse("1.2.0"), IntegerVal(88))]

    resp = agent_serve(store, SnapMessage(OP_GET, 6, 0, [(oid_parse("9.9"), None)]))
    assert resp.error_code == ERR_NO_SUCH_OBJECT
    assert resp.varbinds[0][1] is None

    resp = agent_serve(store, SnapMessage(OP_SET, 7, 0,
                                          [(oid_parse("1.2.0"), IntegerVal(1))]))
    assert resp.error_code == ERR_READ_ONLY

    resp = agent_serve(store, SnapMessage(OP_SET, 8, 0,
                                          [(oid_parse("1.8.0"), IntegerVal(1))]))
    assert resp.error_code == ERR_WRONG_TYPE

    resp = agent_serve(store, SnapMessage(OP_SET, 9, 0,
                                          [(oid_parse("1.8.0"), OctetsVal(b"new"))]))
    assert resp.error_code == ERR_OK
    assert store.get(oid_parse("1.8.0")) == OctetsVal(b"new")

    resp = agent_serve(store, SnapMessage(OP_TRAP, 1, 0, []))
    assert resp.error_code == ERR_MALFORMED


def test_agent_serve_telm():
    store = _store_with(
        ("2.1.0", "pc-0/n_id", "s", Access.RO, OctetsVal(b"pc-0")),
        ("2.4.0", "pc-0/n_util", "g", Access.RO, None),
        ("2.8.0", "pc-0/n_label", "s", Access.RW, OctetsVal(b"lab")),
    )
    resp = agent_serve(store, TelmMessage("GET", "pc-0", 7))
    assert resp.verb == "RESP" and resp.tag == 7 and resp.path == "pc-0"
    assert resp.attrs == [("n_id", OctetsVal(b"pc-0")), ("n_label", OctetsVal(b"lab"))]

    resp = agent_serve(store, TelmMessage("GET", "bsc1/trx2", 8))
    assert resp.attrs == [("err", OctetsVal(b"NoSuchObject"))]

    resp = agent_serve(store, TelmMessage("SET", "pc-0", 9,
                                          [("n_label", OctetsVal(b"zz"))]))
    assert resp.attrs == [("n_label", OctetsVal(b"zz"))]
    assert store.get(oid_parse("2.8.0")) == OctetsVal(b"zz")

    resp = agent_serve(store, TelmMessage("SET", "pc-0", 10,
                                          [("n_id", OctetsVal(b"no"))]))
    assert ("err", OctetsVal(b"ReadOnly")) in resp.attrs


def test_agent_serve_cell():
    imsi = "001010000000003"
    store = _store_with(
        (f"1.2.3", f"{imsi}/batt", "i", Access.RO, IntegerVal(77)),
        (f"1.8.3", f"{imsi}/label", "s", Access.RW, OctetsVal(b"old")),
    )
    resp = agent_serve(store, CellRecord("POLL", imsi, 4, []))
    assert resp.kind == "REPORT" and resp.seq == 4
    assert resp.pairs == [("batt", "77"), ("label", "old")]

    resp = agent_serve(store, CellRecord("POLL", "999990000000000", 5, []))
    assert resp.pairs == [("err", "NoSuchObject")]

    resp = agent_serve(store, CellRecord("CMD", imsi, 6, [("label", "fresh")]))
    assert resp.pairs == [("label", "fresh")]
    assert store.get(oid_parse("1.8.3")) == OctetsVal(b"fresh")

    resp = agent_serve(store, CellRecord("CMD", imsi, 7, [("batt", "10")]))
    assert resp.pairs == [("err", "ReadOnly")]


def test_raw_value_helpers():
    assert render_raw(IntegerVal(-3)) == "-3"
    assert render_raw(OctetsVal(b"ab")) == "ab"
    assert coerce_raw("i", "-3") == IntegerVal(-3)
    assert coerce_raw("g", "12").canonical() == "g:12"
    assert coerce_raw("s", "txt") == OctetsVal(b"txt")
    assert coerce_raw("o", "1.2").canonical() == "o:1.2"
    with pytest.raises(CellError):
        coerce_raw("i", "abc")
    with pytest.raises(CellError):
        coerce_raw("c", "-1")


def test_emit_trap_forms():
    snap_event = TrapEvent("laptop-2", "3", "critical", "link-down", 12.5)
    snap = emit_trap(snap_event, "snap")
    assert snap.op == OP_TRAP and snap.request_id == 0
    values = {oid.text(): val for oid, val in snap.varbinds}
    assert values["0.1.3"] == OctetsVal(b"critical")
    assert values["0.2.3"] == OctetsVal(b"link-down")
    assert values["0.3.3"] == OctetsVal(b"laptop-2")
    assert values["0.4.3"].value == 1250

    event = TrapEvent("phone-0", "phone-0", "critical", "link-down", 12.5)
    telm = emit_trap(event, "telm")
    line = telm_encode(telm)
    assert line.startswith("TELM/1 EVT phone-0;0;sev=critical;cause=link-down")

    cell_event = TrapEvent("phone-1", "001010000000001/att", "major", "battery-dead", 3.0)
    cell = emit_trap(cell_event, "cell", seq=2)
    assert cell.kind == "ALERT" and cell.imsi == "001010000000001" and cell.seq == 2
    pairs = dict(cell.pairs)
    assert pairs["sev"] == "major" and pairs["cause"] == "battery-dead"
    assert pairs["src"] == "phone-1" and pairs["ats"] == "300"

    with pytest.raises(ValueError):
        TrapEvent("x", "y", "fatal", "nope", 0.0)


def test_protocol_isolation():
    snap_frame = snap_encode(SnapMessage(OP_GET, 1))
    with pytest.raises(TelmError):
        telm_decode(snap_frame.decode("utf-8", errors="replace"))
    with pytest.raises(CellError) as err:
        cell_decode("TELM/1 GET a;1")
    assert err.value.code == "bad-kind"
    with pytest.raises(SnapError) as err:
        snap_decode(b"CELL|POLL|001010000000001|1|")
    assert err.value.code == "bad-magic"
