/**
 * Typed client for the gateway's HTTP plane.
 *
 * JSON endpoints are plain fetch + parse. Instance reads and writes go
 * through /cimom as XML method calls; the gateway's serializer emits a
 * fixed attribute order with entity-escaped text, and the narrow parser
 * here targets exactly that dialect rather than general XML.
 *
 * The fetch function is injected so tests can run the full client
 * against an in-memory server.
 */

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface Session {
  token: string;
  principal: string;
  expires_at: number;
}

export interface NetworkView {
  network: string;
  protocol: string;
  nodes: number;
  attached: number;
  open_alarms: number;
  last_poll: number | null;
}

export interface Alarm {
  alarm_id: number;
  network: string;
  agent: string;
  severity: string;
  cause: string;
  state: string;
  raised_at: number;
  acked_at: number | null;
  resolved_at: number | null;
  duplicate_count: number;
  flagged: boolean;
}

export interface PerfStats {
  source: string;
  metric: string;
  window: [number, number];
  count: number;
  mean: number | null;
  min: number | null;
  max: number | null;
  trend_per_hour: number | null;
}

export interface BackupResult {
  network: string;
  snapshot_id: number;
  taken_at: number;
  entries: number;
  path: string;
}

export interface Instance {
  className: string;
  network: string | null;
  agent: string | null;
  protocol: string | null;
  properties: Record<string, string>;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    public detail: string,
  ) {
    super(detail ? `${code}: ${detail}` : code);
    this.name = "ApiError";
  }
}

const XML_ESCAPES: Array<[string, string]> = [
  ["&", "&amp;"],
  ["<", "&lt;"],
  [">", "&gt;"],
  ['"', "&quot;"],
];

export function escapeXml(text: string): string {
  let out = text;
  for (const [raw, ent] of XML_ESCAPES) out = out.split(raw).join(ent);
  return out;
}

export function unescapeXml(text: string): string {
  let out = text;
  // reverse order so &amp; is restored last
  for (let i = XML_ESCAPES.length - 1; i >= 0; i--) {
    const [raw, ent] = XML_ESCAPES[i];
    out = out.split(ent).join(raw);
  }
  return out;
}

/** Build a /cimom method-call document. */
export function buildOperation(
  name: string,
  params: Record<string, string>,
): string {
  const parts = [`<CIM><OPERATION NAME="${escapeXml(name)}">`];
  for (const [param, value] of Object.entries(params)) {
    parts.push(`<PARAM NAME="${escapeXml(param)}">${escapeXml(value)}</PARAM>`);
  }
  parts.push("</OPERATION></CIM>");
  return parts.join("");
}

function attrOf(fragment: string, name: string): string | null {
  const match = fragment.match(new RegExp(`${name}="([^"]*)"`));
  return match ? unescapeXml(match[1]) : null;
}

/** Parse every INSTANCE element out of a /cimom response document. */
export function parseInstances(xml: string): Instance[] {
  const found: Instance[] = [];
  const pattern = /<INSTANCE ([^>]*)>(.*?)<\/INSTANCE>/gs;
  for (const match of xml.matchAll(pattern)) {
    const head = match[1];
    const properties: Record<string, string> = {};
    const propPattern = /<PROPERTY NAME="([^"]*)" TYPE="[^"]*">([^<]*)<\/PROPERTY>/g;
    for (const prop of match[2].matchAll(propPattern)) {
      properties[unescapeXml(prop[1])] = unescapeXml(prop[2]);
    }
    found.push({
      className: attrOf(head, "CLASSNAME") ?? "",
      network: attrOf(head, "NETWORK"),
      agent: attrOf(head, "AGENT"),
      protocol: attrOf(head, "PROTOCOL"),
      properties,
    });
  }
  return found;
}

function cimError(xml: string): ApiError | null {
  const match = xml.match(/<ERROR CODE="([^"]*)"(?: DETAIL="([^"]*)")?/);
  if (!match) return null;
  return new ApiError(200, unescapeXml(match[1]), unescapeXml(match[2] ?? ""));
}

/** Canonical octet-string form for a typed-in text value. */
export function octetsCanonical(text: string): string {
  const bytes = new TextEncoder().encode(text);
  let hex = "";
  for (const b of bytes) hex += b.toString(16).padStart(2, "0");
  return `s:${hex}`;
}

export class ApiClient {
  token: string | null = null;

  constructor(
    private base: string,
    private fetcher: FetchLike,
  ) {}

  async login(principal: string, secret: string): Promise<Session> {
    const session = (await this.request("POST", "/login", {
      json: { principal, secret },
    })) as Session;
    this.token = session.token;
    return session;
  }

  async views(): Promise<NetworkView[]> {
    return (await this.request("GET", "/views")) as NetworkView[];
  }

  async alarms(filter: { network?: string; state?: string } = {}): Promise<Alarm[]> {
    const query = new URLSearchParams();
    if (filter.network) query.set("network", filter.network);
    if (filter.state) query.set("state", filter.state);
    const suffix = query.toString() ? `?${query}` : "";
    return (await this.request("GET", `/alarms${suffix}`)) as Alarm[];
  }

  async ack(alarmId: number): Promise<Alarm> {
    return (await this.request("POST", `/alarms/${alarmId}/ack`)) as Alarm;
  }

  async resolve(alarmId: number): Promise<Alarm> {
    return (await this.request("POST", `/alarms/${alarmId}/resolve`)) as Alarm;
  }

  async perf(source: string, metric: string, from: number, to: number): Promise<PerfStats> {
    const query = new URLSearchParams({
      source,
      metric,
      window: `${from}..${to}`,
    });
    return (await this.request("GET", `/perf?${query}`)) as PerfStats;
  }

  async backup(network: string): Promise<BackupResult> {
    const path = `/config/${encodeURIComponent(network)}/backup`;
    return (await this.request("POST", path)) as BackupResult;
  }

  async enumerate(className: string, network?: string): Promise<Instance[]> {
    const params: Record<string, string> = { CLASS: className };
    if (network) params.NETWORK = network;
    const xml = await this.cimom(buildOperation("EnumerateInstances", params));
    return parseInstances(xml);
  }

  async instance(className: string, key: string): Promise<Instance> {
    const xml = await this.cimom(
      buildOperation("GetInstance", { CLASS: className, KEY: key }),
    );
    const found = parseInstances(xml);
    if (found.length !== 1) {
      throw new ApiError(200, "bad-response", `expected one instance, got ${found.length}`);
    }
    return found[0];
  }

  async modify(
    className: string,
    key: string,
    property: string,
    value: string,
  ): Promise<Instance> {
    const xml = await this.cimom(
      buildOperation("ModifyInstance", {
        CLASS: className,
        KEY: key,
        PROPERTY: property,
        VALUE: value,
      }),
    );
    const found = parseInstances(xml);
    if (found.length !== 1) {
      throw new ApiError(200, "bad-response", `expected one instance, got ${found.length}`);
    }
    return found[0];
  }

  private async cimom(body: string): Promise<string> {
    const text = (await this.request("POST", "/cimom", {
      xml: body,
    })) as string;
    const failure = cimError(text);
    if (failure) throw failure;
    return text;
  }

  private async request(
    method: string,
    path: string,
    opts: { json?: unknown; xml?: string } = {},
  ): Promise<unknown> {
    const headers: Record<string, string> = {};
    if (this.token) headers["X-Hetman-Token"] = this.token;
    let body: string | undefined;
    if (opts.json !== undefined) {
      headers["Content-Type"] = "application/json";
      body = JSON.stringify(opts.json);
    } else if (opts.xml !== undefined) {
      headers["Content-Type"] = "application/xml";
      headers["CIMOperation"] = "MethodCall";
      body = opts.xml;
    }
    let response: Response;
    try {
      response = await this.fetcher(this.base + path, { method, headers, body });
    } catch (err) {
      throw new ApiError(0, "unreachable", String(err));
    }
    const text = await response.text();
    if (response.status >= 400) {
      let code = `http-${response.status}`;
      let detail = text;
      try {
        const parsed = JSON.parse(text);
        if (parsed && typeof parsed.error === "string") {
          code = parsed.error;
          detail = typeof parsed.detail === "string" ? parsed.detail : "";
        }
      } catch {
        // non-JSON error body; keep the raw text as detail
      }
      throw new ApiError(response.status, code, detail);
    }
    const kind = response.headers.get("Content-Type") ?? "";
    if (kind.includes("xml")) return text;
    return text ? JSON.parse(text) : null;
  }
}
