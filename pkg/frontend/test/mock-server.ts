/**
 * In-memory stand-in for the gateway's HTTP plane, at fetch level.
 *
 * Implements the same JSON and XML contracts the real server speaks so
 * the full client stack (ApiClient included) runs unmodified in tests.
 * State is mutable from tests to stage scenarios: alarms transition with
 * the server's legality rules, instance writes type-check like an agent,
 * and every request is logged for assertions on wire traffic.
 */

import type { Alarm, FetchLike, NetworkView } from "../src/api.js";

export interface MockInstance {
  className: string;
  key: string;
  network: string;
  agent: string;
  protocol: string;
  properties: Record<string, { type: string; text: string }>;
}

export interface LoggedRequest {
  method: string;
  url: string;
  headers: Record<string, string>;
  body: string;
}

function jsonResponse(status: number, payload: unknown): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

function xmlResponse(status: number, body: string): Response {
  return new Response(body, {
    status,
    headers: { "Content-Type": "application/xml" },
  });
}

function errorResponse(status: number, code: string, detail: string): Response {
  return jsonResponse(status, { error: code, detail });
}

function unescapeEntities(text: string): string {
  return text
    .split("&quot;").join('"')
    .split("&gt;").join(">")
    .split("&lt;").join("<")
    .split("&amp;").join("&");
}

function escapeEntities(text: string): string {
  return text
    .split("&").join("&amp;")
    .split("<").join("&lt;")
    .split(">").join("&gt;")
    .split('"').join("&quot;");
}

/** Decode one canonical typed value, as the agents would. */
function decodeCanonical(value: string): { kind: string; text: string } | null {
  const sep = value.indexOf(":");
  if (sep < 1) return null;
  const kind = value.slice(0, sep);
  const rest = value.slice(sep + 1);
  if (["i", "c", "g", "t"].includes(kind)) {
    if (!/^-?\d+$/.test(rest)) return null;
    return { kind, text: String(parseInt(rest, 10)) };
  }
  if (kind === "s") {
    if (!/^([0-9a-f]{2})*$/.test(rest)) return null;
    const bytes = new Uint8Array(rest.length / 2);
    for (let i = 0; i < bytes.length; i++) {
      bytes[i] = parseInt(rest.slice(i * 2, i * 2 + 2), 16);
    }
    return { kind, text: new TextDecoder().decode(bytes) };
  }
  if (kind === "o") return { kind, text: rest };
  return null;
}

export class MockPlane {
  views: NetworkView[] = [];
  alarms: Alarm[] = [];
  instances = new Map<string, MockInstance>();
  perfSamples: Record<string, number[]> = {};
  log: LoggedRequest[] = [];
  denyWrites = false;
  nextSnapshot = 7;
  secret = "adminpw";
  token = "tok-0001";

  readonly fetch: FetchLike = (url, init) => this.handle(url, init);

  addInstance(inst: MockInstance): void {
    this.instances.set(`${inst.className}|${inst.key}`, inst);
  }

  raisedCount(network: string): number {
    return this.alarms.filter(
      (a) => a.network === network && a.state !== "Resolved",
    ).length;
  }

  private async handle(url: string, init?: RequestInit): Promise<Response> {
    const method = init?.method ?? "GET";
    const headers: Record<string, string> = {};
    for (const [k, v] of Object.entries(init?.headers ?? {})) headers[k] = v as string;
    const body = typeof init?.body === "string" ? init.body : "";
    this.log.push({ method, url, headers, body });

    const [path, search] = url.split("?", 2);
    const query = new URLSearchParams(search ?? "");

    if (method === "POST" && path === "/login") {
      const creds = JSON.parse(body || "{}");
      if (creds.secret !== this.secret) {
        return errorResponse(401, "bad-credentials", String(creds.principal));
      }
      return jsonResponse(200, {
        token: this.token,
        principal: creds.principal,
        expires_at: 9999,
      });
    }
    if (headers["X-Hetman-Token"] !== this.token) {
      return errorResponse(401, "no-session", "login first");
    }

    if (method === "GET" && path === "/views") {
      return jsonResponse(200, this.views);
    }
    if (method === "GET" && path === "/alarms") {
      let found = this.alarms;
      const network = query.get("network");
      const state = query.get("state");
      if (network) found = found.filter((a) => a.network === network);
      if (state) found = found.filter((a) => a.state === state);
      return jsonResponse(200, found);
    }
    const transition = path.match(/^\/alarms\/(\d+)\/(ack|resolve)$/);
    if (method === "POST" && transition) {
      return this.transitionAlarm(Number(transition[1]), transition[2]);
    }
    if (method === "GET" && path === "/perf") {
      return this.perfStats(query);
    }
    const backup = path.match(/^\/config\/([^/]+)\/backup$/);
    if (method === "POST" && backup) {
      const network = decodeURIComponent(backup[1]);
      const entries = [...this.instances.values()].filter(
        (i) => i.network === network,
      ).length;
      return jsonResponse(200, {
        network,
        snapshot_id: this.nextSnapshot++,
        taken_at: 120.0,
        entries,
        path: `/tmp/${network}.cfg`,
      });
    }
    if (method === "POST" && path === "/cimom") {
      if (headers["CIMOperation"] !== "MethodCall") {
        return errorResponse(400, "bad-cim-call", "CIMOperation: MethodCall required");
      }
      return this.cimom(body);
    }
    return errorResponse(404, "no-route", `${method} ${path}`);
  }

  private transitionAlarm(alarmId: number, verb: string): Response {
    const alarm = this.alarms.find((a) => a.alarm_id === alarmId);
    if (!alarm) return errorResponse(404, "no-alarm", String(alarmId));
    if (verb === "ack") {
      if (alarm.state !== "Raised") {
        return errorResponse(409, "IllegalTransition", `${alarm.state} to Acknowledged`);
      }
      alarm.state = "Acknowledged";
      alarm.acked_at = 99.0;
    } else {
      if (alarm.state === "Resolved") {
        return errorResponse(409, "IllegalTransition", "Resolved to Resolved");
      }
      alarm.state = "Resolved";
      alarm.resolved_at = 100.0;
    }
    return jsonResponse(200, alarm);
  }

  private perfStats(query: URLSearchParams): Response {
    const source = query.get("source") ?? "";
    const metric = query.get("metric") ?? "";
    const window = query.get("window") ?? "";
    const [fromText, toText] = window.split("..", 2);
    const from = Number(fromText);
    const to = Number(toText);
    const values = this.perfSamples[`${source}/${metric}`] ?? [];
    const base = { source, metric, window: [from, to] };
    if (values.length === 0) {
      return jsonResponse(200, {
        ...base, count: 0, mean: null, min: null, max: null, trend_per_hour: null,
      });
    }
    const mean = values.reduce((a, b) => a + b, 0) / values.length;
    return jsonResponse(200, {
      ...base,
      count: values.length,
      mean,
      min: Math.min(...values),
      max: Math.max(...values),
      trend_per_hour: 0.0,
    });
  }

  private cimom(body: string): Response {
    const opMatch = body.match(/<OPERATION NAME="([^"]*)">/);
    if (!opMatch) return errorResponse(400, "malformed-xml", "no operation");
    const params: Record<string, string> = {};
    for (const param of body.matchAll(/<PARAM NAME="([^"]*)">([^<]*)<\/PARAM>/g)) {
      params[unescapeEntities(param[1])] = unescapeEntities(param[2]);
    }
    const op = opMatch[1];
    if (op === "EnumerateInstances") {
      const found = [...this.instances.values()].filter(
        (i) =>
          i.className === params.CLASS &&
          (!params.NETWORK || i.network === params.NETWORK),
      );
      const bodies = found.map((i) => this.instanceXml(i)).join("");
      return xmlResponse(200, `<CIM>${bodies}</CIM>`);
    }
    if (op === "GetInstance") {
      const inst = this.instances.get(`${params.CLASS}|${params.KEY}`);
      if (!inst) return errorResponse(404, "no-instance", `${params.CLASS}.${params.KEY}`);
      return xmlResponse(200, `<CIM>${this.instanceXml(inst)}</CIM>`);
    }
    if (op === "ModifyInstance") {
      const inst = this.instances.get(`${params.CLASS}|${params.KEY}`);
      if (!inst) return errorResponse(404, "no-instance", `${params.CLASS}.${params.KEY}`);
      if (this.denyWrites) {
        return errorResponse(403, "forbidden", `may not write ${inst.network}`);
      }
      const target = inst.properties[params.PROPERTY];
      if (!target) return errorResponse(400, "no-property", params.PROPERTY);
      const decoded = decodeCanonical(params.VALUE ?? "");
      if (!decoded) return errorResponse(400, "bad-value", params.VALUE ?? "");
      if (decoded.kind !== target.type) {
        return xmlResponse(
          200,
          `<CIM><ERROR CODE="write-rejected" DETAIL="WrongType: want ${target.type}"/></CIM>`,
        );
      }
      target.text = decoded.text;
      return xmlResponse(200, `<CIM>${this.instanceXml(inst)}</CIM>`);
    }
    return errorResponse(400, "bad-operation", op);
  }

  private instanceXml(inst: MockInstance): string {
    const props = Object.entries(inst.properties)
      .map(
        ([name, p]) =>
          `<PROPERTY NAME="${name}" TYPE="${p.type}">${escapeEntities(p.text)}</PROPERTY>`,
      )
      .join("");
    return (
      `<INSTANCE CLASSNAME="${inst.className}" NETWORK="${inst.network}" ` +
      `AGENT="${inst.agent}" PROTOCOL="${inst.protocol}" OBSERVED="1.0">` +
      `${props}</INSTANCE>`
    );
  }
}

export function defaultPlane(): MockPlane {
  const plane = new MockPlane();
  plane.views = [
    { network: "cell0", protocol: "cell", nodes: 6, attached: 5,
      open_alarms: 1, last_poll: 41.5 },
    { network: "lan0", protocol: "telm", nodes: 4, attached: 4,
      open_alarms: 0, last_poll: 40.0 },
    { network: "wlan0", protocol: "snap", nodes: 8, attached: 7,
      open_alarms: 1, last_poll: 42.0 },
  ];
  plane.alarms = [
    {
      alarm_id: 1, network: "wlan0", agent: "laptop-2", severity: "major",
      cause: "link-down", state: "Raised", raised_at: 12.0, acked_at: null,
      resolved_at: null, duplicate_count: 2, flagged: false,
    },
    {
      alarm_id: 2, network: "cell0", agent: "phone-3", severity: "minor",
      cause: "battery-low", state: "Acknowledged", raised_at: 30.0,
      acked_at: 33.0, resolved_at: null, duplicate_count: 1, flagged: false,
    },
  ];
  plane.addInstance({
    className: "Terminal", key: "laptop-1", network: "wlan0", agent: "laptop-1",
    protocol: "snap",
    properties: {
      label: { type: "s", text: "laptop-1" },
      "tx-power": { type: "i", text: "17" },
      attachment: { type: "s", text: "wap-0" },
    },
  });
  plane.perfSamples["wlan0/latency"] = [10, 20, 30];
  return plane;
}
