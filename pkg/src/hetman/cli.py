"""Command line front end.

Three commands host long-running processes: `sim` runs the simulated networks
with their embedded agents, `gw` runs the gateway and management plane against
routed agent addresses, and `demo` runs both in one process for desk use.
Everything else is either a thin HTTP client against a running `gw` or a
local computation (`bill`, `check`).

Exit codes are a contract for scripts: 0 success, 1 failed operation or
failed check, 2 usage or bad configuration, 3 denied, 4 not found,
5 transport trouble. With `--format json` every command writes exactly one
JSON document to stdout.
"""

from __future__ import annotations

import argparse
import json
import os
import signal
import sys
import threading
import urllib.error
import urllib.parse
import urllib.request
from fractions import Fraction
from pathlib import Path
from typing import Optional

from .cim import CimError, default_schema, parse_rules
from .fcaps import (
    AcctEngine,
    FcapsError,
    SecEngine,
    money_text,
    parse_access,
    parse_principals,
    parse_rates,
    parse_records,
)
from .gateway import GatewayError, parse_routes
from .httpapi import (
    DEFAULT_POLL_PERIOD,
    FALLBACK_ACCESS,
    FALLBACK_PRINCIPALS,
    Manager,
    serve_api,
)
from .mib import ValueParseError
from .netsim import (
    SimError,
    Simulation,
    parse_faults,
    parse_scenario,
    routes_text,
    run_paced,
    scenario_default,
    serve,
    sim_dump,
)
from .selftest import CHECKS

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_DENIED = 3
EXIT_MISSING = 4
EXIT_TRANSPORT = 5

DEFAULT_ADDR = "http://127.0.0.1:8422"
DEFAULT_TICKS = 300
DEFAULT_RATE = 10.0
REQUEST_TIMEOUT = 15.0

_HTTP_EXIT = {400: EXIT_USAGE, 401: EXIT_DENIED, 403: EXIT_DENIED,
              404: EXIT_MISSING, 405: EXIT_USAGE, 502: EXIT_TRANSPORT}


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


def _read(path: str, what: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise CliError(EXIT_USAGE, f"cannot read {what} {path}: {exc.strerror}")


def _emit(args, result, lines: list[str]) -> None:
    """One JSON document in json mode, human lines otherwise."""
    if args.format == "json":
        print(json.dumps(result, indent=2, sort_keys=True))
    else:
        for line in lines:
            print(line)
    sys.stdout.flush()


def _stop_event() -> threading.Event:
    stop = threading.Event()
    for sig in (signal.SIGTERM, signal.SIGINT):
        signal.signal(sig, lambda *_: stop.set())
    return stop


def _parse_listen(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise CliError(EXIT_USAGE, f"bad listen address {text!r}, want HOST:PORT")
    return host, int(port)


# HTTP client side


class ApiClient:
    """Session-per-invocation client; logs in lazily on first call."""

    def __init__(self, base: str, principal: str, secret: str):
        if "://" not in base:
            base = "http://" + base
        self.base = base.rstrip("/")
        self.principal = principal
        self.secret = secret
        self.token: Optional[str] = None

    def _raw(self, method: str, path: str, payload: Optional[bytes],
             content_type: str, token: Optional[str]):
        request = urllib.request.Request(self.base + path, data=payload,
                                         method=method)
        if payload is not None:
            request.add_header("Content-Type", content_type)
        if content_type.startswith("application/xml"):
            request.add_header("CIMOperation", "MethodCall")
        if token:
            request.add_header("X-Hetman-Token", token)
        try:
            with urllib.request.urlopen(request, timeout=REQUEST_TIMEOUT) as reply:
                return reply.status, reply.read(), reply.headers.get_content_type()
        except urllib.error.HTTPError as exc:
            body = exc.read()
            try:
                parsed = json.loads(body)
                message = f"{parsed.get('error')}: {parsed.get('detail') or ''}".rstrip(": ")
            except ValueError:
                message = f"http {exc.code}"
            raise CliError(_HTTP_EXIT.get(exc.code, EXIT_FAIL), message)
        except urllib.error.URLError as exc:
            raise CliError(EXIT_TRANSPORT, f"cannot reach {self.base}: {exc.reason}")

    def login(self) -> None:
        payload = json.dumps({"principal": self.principal,
                              "secret": self.secret}).encode()
        _, body, _ = self._raw("POST", "/login", payload, "application/json", None)
        self.token = json.loads(body)["token"]

    def call(self, method: str, path: str, body: Optional[dict] = None):
        if self.token is None:
            self.login()
        payload = None if body is None else json.dumps(body).encode()
        _, raw, _ = self._raw(method, path, payload, "application/json", self.token)
        return json.loads(raw)

    def call_xml(self, xml: str) -> str:
        if self.token is None:
            self.login()
        _, raw, _ = self._raw("POST", "/cimom", xml.encode(),
                              "application/xml", self.token)
        return raw.decode("utf-8")


def _client(args) -> ApiClient:
    return ApiClient(args.addr, args.principal, args.secret)


# simulator process


def cmd_sim(args) -> int:
    if args.scenario == "default":
        scenario = scenario_default(seed=args.seed, tick=args.tick)
    else:
        scenario = parse_scenario(_read(args.scenario, "scenario file"),
                                  seed=args.seed, tick=args.tick)
    faults = parse_faults(_read(args.faults, "fault schedule")) if args.faults else ()

    sinks = []
    event_sink = None
    if args.events:
        event_sink = open(args.events, "w")
        sinks.append(event_sink)
    elif args.format == "text" and not args.dump and not args.serve:
        event_sink = sys.stdout
    trace_sink = None
    if args.trace:
        trace_sink = open(args.trace, "w")
        sinks.append(trace_sink)

    try:
        sim = Simulation(scenario, event_sink=event_sink,
                         trace_sink=trace_sink, faults=faults)
        if not args.serve:
            ticks = DEFAULT_TICKS if args.ticks is None else args.ticks
            sim.run(ticks)
            result = sim_dump(sim) if args.dump else {
                "ticks": ticks,
                "now": sim.clock.now,
                "events": len(sim.events),
                "counts": scenario.counts(),
            }
            lines = [json.dumps(result, indent=2, sort_keys=True)] \
                if args.dump else []
            _emit(args, result, lines)
            print(f"ran {ticks} ticks to t={sim.clock.now:.2f}, "
                  f"{len(sim.events)} events", file=sys.stderr)
            return EXIT_OK

        servers = serve(sim)
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        routes_path = out_dir / "routes.txt"
        rules_path = out_dir / "rules.txt"
        routes_path.write_text(routes_text(servers))
        rules_path.write_text(sim.rules.dump())
        info = {
            "networks": {name: f"{srv.host}:{srv.port}"
                         for name, srv in sorted(servers.items())},
            "routes": str(routes_path),
            "rules": str(rules_path),
            "rate": args.rate,
            "ticks": args.ticks,
        }
        _emit(args, info, [f"serving {len(servers)} networks "
                           f"(routes in {routes_path}, rules in {rules_path})"]
              + [f"  {name} {addr}" for name, addr in info["networks"].items()])
        stop = _stop_event()
        try:
            run_paced(sim, args.ticks, args.rate, stop)
            stop.wait()  # tick budget done; keep serving until signaled
        finally:
            for server in servers.values():
                server.close()
        print(f"stopped at t={sim.clock.now:.2f}, {len(sim.events)} events",
              file=sys.stderr)
        return EXIT_OK
    finally:
        for sink in sinks:
            sink.close()


# gateway process


def _security(args) -> SecEngine:
    principals_text = (_read(args.principals, "principals file")
                       if args.principals else FALLBACK_PRINCIPALS)
    access_text = (_read(args.access, "access file")
                   if args.access else FALLBACK_ACCESS)
    return SecEngine(parse_principals(principals_text),
                     parse_access(access_text))


def cmd_gw(args) -> int:
    schema = default_schema()
    routes = parse_routes(_read(args.routes, "routes file"))
    rules = parse_rules(_read(args.rules, "rules file"), schema)
    host, port = _parse_listen(args.listen)
    manager = Manager(routes, rules, schema, _security(args),
                      Path(args.snap_dir), poll_period=args.poll_period,
                      backup_period=args.backup_period)
    console_dir = Path(args.console_dir) if args.console_dir else None
    if console_dir is not None and not console_dir.is_dir():
        raise CliError(EXIT_USAGE, f"console dir {console_dir} is not a directory")
    server = serve_api(manager, host, port, console_dir=console_dir)
    manager.start()
    bound = f"http://{server.server_address[0]}:{server.server_address[1]}"
    _emit(args, {"address": bound, "networks": routes.networks(),
                 "snap_dir": args.snap_dir},
          [f"listening on {bound} ({len(routes.networks())} networks)"])
    stop = _stop_event()
    try:
        stop.wait()
    finally:
        server.shutdown()
        server.server_close()
        manager.close()
    print("pipeline stats: "
          + json.dumps(manager.gateway.stats.as_dict(), sort_keys=True),
          file=sys.stderr)
    return EXIT_OK


def cmd_demo(args) -> int:
    sim = Simulation(scenario_default(seed=args.seed))
    servers = serve(sim)
    manager = Manager(parse_routes(routes_text(servers)), sim.rules, sim.schema,
                      _security(args), Path(args.snap_dir),
                      poll_period=args.poll_period)
    host, port = _parse_listen(args.listen)
    console_dir = Path(args.console_dir) if args.console_dir else None
    server = serve_api(manager, host, port, console_dir=console_dir)
    manager.start()
    stop = _stop_event()
    stepper = threading.Thread(target=run_paced, args=(sim, None, args.rate, stop),
                               daemon=True)
    stepper.start()
    bound = f"http://{server.server_address[0]}:{server.server_address[1]}"
    _emit(args, {"address": bound,
                 "networks": {name: f"{srv.host}:{srv.port}"
                              for name, srv in sorted(servers.items())}},
          [f"listening on {bound}, stepping {len(servers)} networks "
           f"at {args.rate:g} ticks/s"])
    try:
        stop.wait()
    finally:
        server.shutdown()
        server.server_close()
        manager.close()
        for network_server in servers.values():
            network_server.close()
    print("pipeline stats: "
          + json.dumps(manager.gateway.stats.as_dict(), sort_keys=True),
          file=sys.stderr)
    return EXIT_OK


# manager operations over HTTP


def _row_lines(rows) -> list[str]:
    lines = []
    for name, value, status in rows:
        text = "-" if value is None else value
        lines.append(f"{name} = {text}" + ("" if status == "ok" else f"  [{status}]"))
    return lines


def cmd_get(args) -> int:
    body = _client(args).call("POST", f"/mib/{args.network}",
                              {"op": "get", "items": [[n, None] for n in args.names]})
    _emit(args, body, _row_lines(body["rows"]))
    return EXIT_OK


def cmd_set(args) -> int:
    body = _client(args).call("POST", f"/mib/{args.network}",
                              {"op": "set", "items": [[args.name, args.value]]})
    _emit(args, body, _row_lines(body["rows"]))
    return EXIT_OK


def cmd_walk(args) -> int:
    query = f"?prefix={urllib.parse.quote(args.prefix)}" if args.prefix else ""
    body = _client(args).call("GET", f"/mib/{args.network}{query}")
    _emit(args, body, _row_lines(body["rows"]))
    return EXIT_OK


def _alarm_line(alarm: dict) -> str:
    return (f"#{alarm['alarm_id']} {alarm['state']:<12} {alarm['severity']:<8} "
            f"{alarm['network']}/{alarm['agent']} {alarm['cause']} "
            f"x{alarm['duplicate_count']} raised={alarm['raised_at']:.2f}")


def cmd_alarms(args) -> int:
    client = _client(args)
    if args.ack is not None or args.resolve is not None:
        alarm_id, verb = ((args.ack, "ack") if args.ack is not None
                          else (args.resolve, "resolve"))
        alarm = client.call("POST", f"/alarms/{alarm_id}/{verb}")
        _emit(args, alarm, [_alarm_line(alarm)])
        return EXIT_OK
    query = {}
    if args.network:
        query["network"] = args.network
    if args.state:
        query["state"] = args.state
    suffix = f"?{urllib.parse.urlencode(query)}" if query else ""
    alarms = client.call("GET", f"/alarms{suffix}")
    _emit(args, alarms, [_alarm_line(a) for a in alarms] or ["no alarms"])
    return EXIT_OK


def cmd_backup(args) -> int:
    client = _client(args)
    if args.list:
        body = client.call("GET", f"/config/{args.network}")
        _emit(args, body, ["snapshots: "
                           + (" ".join(str(s) for s in body["snapshots"]) or "-")])
        return EXIT_OK
    if args.restore is not None:
        body = client.call("POST", f"/config/{args.network}/restore",
                           {"snapshot_id": args.restore})
        _emit(args, body, [f"{name}: {outcome}" for name, outcome in body["report"]])
        return EXIT_OK
    body = client.call("POST", f"/config/{args.network}/backup")
    _emit(args, body, [f"snapshot {body['snapshot_id']}: {body['entries']} "
                       f"entries at {body['path']}"])
    return EXIT_OK


# local computations


def _period(text: str) -> tuple[Fraction, Fraction]:
    start_text, sep, end_text = text.partition("..")
    try:
        if not sep:
            raise ValueError(text)
        start, end = Fraction(start_text), Fraction(end_text)
    except (ValueError, ZeroDivisionError):
        raise CliError(EXIT_USAGE, f"bad period {text!r}, want START..END")
    if end < start:
        raise CliError(EXIT_USAGE, f"period {text!r} ends before it starts")
    return start, end


def cmd_bill(args) -> int:
    start, end = _period(args.period)
    rates = parse_rates(_read(args.rates, "rate table"))
    engine = AcctEngine()
    for record in parse_records(_read(args.records, "usage records")):
        engine.record(record)
    outcome = engine.bill(start, end, rates)
    result = {
        "period": [str(start), str(end)],
        "ledger": {payer: {"exact": str(total), "amount": money_text(total)}
                   for payer, total in outcome.ledger.items()},
        "unbilled": [{"payer": r.payer, "service": r.service,
                      "quantity": str(r.quantity)} for r in outcome.unbilled],
    }
    lines = [f"{payer:<20} {entry['amount']:>12}  (exact {entry['exact']})"
             for payer, entry in sorted(result["ledger"].items())]
    lines.append(f"unbilled records: {len(outcome.unbilled)}")
    _emit(args, result, lines)
    return EXIT_OK


_CHECK_KNOBS = {
    "codecs": ("roundtrips", "fuzz"),
    "translation": ("cases",),
    "walk": ("stores", "max_entries"),
}


def cmd_check(args) -> int:
    kwargs = {}
    if args.seed is not None:
        kwargs["seed"] = args.seed
    for knob in _CHECK_KNOBS[args.which]:
        value = getattr(args, knob)
        if value is not None:
            kwargs[knob] = value
    result = CHECKS[args.which](**kwargs)
    lines = [f"{args.which}: {'ok' if result['ok'] else 'FAILED'} "
             f"in {result['seconds']:.2f}s"]
    for key in ("roundtrips", "fuzz", "cases", "stores"):
        if key in result:
            lines.append(f"  {key}: {json.dumps(result[key], sort_keys=True)}")
    lines.extend(f"  failure: {failure}" for failure in result["failures"])
    _emit(args, result, lines)
    return EXIT_OK if result["ok"] else EXIT_FAIL


# wiring


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentParser(add_help=False)
    fmt.add_argument("--format", choices=("text", "json"), default="text",
                     help="output format (default text)")

    api = argparse.ArgumentParser(add_help=False, parents=[fmt])
    api.add_argument("--addr", default=os.environ.get("HETMAN_ADDR", DEFAULT_ADDR),
                     help="management API address (env HETMAN_ADDR)")
    api.add_argument("--principal",
                     default=os.environ.get("HETMAN_PRINCIPAL", "admin"))
    api.add_argument("--secret", default=os.environ.get("HETMAN_SECRET", "admin"))

    parser = argparse.ArgumentParser(
        prog="hetman", description="manage simulated heterogeneous networks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sim", parents=[fmt], help="run the network simulator")
    p.add_argument("--scenario", default="default",
                   help="roster file, or 'default' for the built-in scenario")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tick", type=float, default=1.0,
                   help="simulated seconds per tick")
    p.add_argument("--ticks", type=int, default=None,
                   help=f"tick budget (default {DEFAULT_TICKS}; unlimited with --serve)")
    p.add_argument("--faults", help="fault schedule file")
    p.add_argument("--events", help="write the event log to this file")
    p.add_argument("--trace", help="write per-tick node positions to this file")
    p.add_argument("--serve", action="store_true",
                   help="expose agents on TCP and step in real time")
    p.add_argument("--rate", type=float, default=DEFAULT_RATE,
                   help="ticks per second with --serve")
    p.add_argument("--out-dir", default="run",
                   help="where --serve writes routes.txt and rules.txt")
    p.add_argument("--dump", action="store_true",
                   help="print the world snapshot as JSON and exit")
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("gw", parents=[fmt], help="run the management gateway")
    p.add_argument("--routes", required=True, help="network|protocol|host:port lines")
    p.add_argument("--rules", required=True, help="mapping rule table file")
    p.add_argument("--listen", default="127.0.0.1:8422")
    p.add_argument("--poll-period", type=float, default=DEFAULT_POLL_PERIOD)
    p.add_argument("--backup-period", type=float, default=0.0,
                   help="periodic backup interval in seconds (0 disables)")
    p.add_argument("--principals", help="principal|secret lines")
    p.add_argument("--access", help="principal|action|resource lines")
    p.add_argument("--snap-dir", default="snapshots")
    p.add_argument("--console-dir", help="serve this directory under /console/")
    p.set_defaults(func=cmd_gw)

    p = sub.add_parser("demo", parents=[fmt],
                       help="simulator and gateway in one process")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rate", type=float, default=DEFAULT_RATE)
    p.add_argument("--listen", default="127.0.0.1:8422")
    p.add_argument("--poll-period", type=float, default=DEFAULT_POLL_PERIOD)
    p.add_argument("--principals")
    p.add_argument("--access")
    p.add_argument("--snap-dir", default="snapshots")
    p.add_argument("--console-dir")
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("get", parents=[api], help="read native objects")
    p.add_argument("network")
    p.add_argument("names", nargs="+", metavar="name")
    p.set_defaults(func=cmd_get)

    p = sub.add_parser("set", parents=[api], help="write one native object")
    p.add_argument("network")
    p.add_argument("name")
    p.add_argument("value", help="canonical form, e.g. i:42 or s:74657874")
    p.set_defaults(func=cmd_set)

    p = sub.add_parser("walk", parents=[api], help="list a network's store")
    p.add_argument("network")
    p.add_argument("--prefix", default="")
    p.set_defaults(func=cmd_walk)

    p = sub.add_parser("alarms", parents=[api], help="list or transition alarms")
    p.add_argument("--network")
    p.add_argument("--state", choices=("Raised", "Acknowledged", "Resolved"))
    action = p.add_mutually_exclusive_group()
    action.add_argument("--ack", type=int, metavar="ID")
    action.add_argument("--resolve", type=int, metavar="ID")
    p.set_defaults(func=cmd_alarms)

    p = sub.add_parser("backup", parents=[api],
                       help="snapshot or restore a network's configuration")
    p.add_argument("network")
    action = p.add_mutually_exclusive_group()
    action.add_argument("--restore", type=int, metavar="ID")
    action.add_argument("--list", action="store_true")
    p.set_defaults(func=cmd_backup)

    p = sub.add_parser("bill", parents=[fmt], help="price usage records")
    p.add_argument("--records", required=True, help="payer|service|qty|start|end lines")
    p.add_argument("--rates", required=True, help="service|cost_per_unit lines")
    p.add_argument("--period", required=True, metavar="START..END")
    p.set_defaults(func=cmd_bill)

    p = sub.add_parser("check", parents=[fmt], help="run a randomized self-check")
    p.add_argument("which", choices=sorted(CHECKS))
    p.add_argument("--seed", type=int)
    p.add_argument("--roundtrips", type=int)
    p.add_argument("--fuzz", type=int)
    p.add_argument("--cases", type=int)
    p.add_argument("--stores", type=int)
    p.add_argument("--max-entries", type=int)
    p.set_defaults(func=cmd_check)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"hetman: {exc.message}", file=sys.stderr)
        if args.format == "json":
            print(json.dumps({"error": exc.message}))
        return exc.code
    except (SimError, FcapsError, CimError, GatewayError, ValueParseError) as exc:
        print(f"hetman: {exc}", file=sys.stderr)
        if args.format == "json":
            print(json.dumps({"error": str(exc)}))
        return EXIT_USAGE
    except OSError as exc:
        print(f"hetman: {exc}", file=sys.stderr)
        if args.format == "json":
            print(json.dumps({"error": str(exc)}))
        return EXIT_USAGE
    except KeyboardInterrupt:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
