/**
 * Console application state and behavior, free of any real DOM.
 *
 * The app owns a PageState, re-renders it through an injected surface on
 * every change, and refreshes through an injected scheduler. Each network
 * panel runs on its own timer so one stuck network never stalls the rest;
 * the server stays the single source of truth and every mutation is an
 * API call whose response (not the click) updates the page.
 */

import { ApiClient, ApiError } from "./api.js";
import type { Alarm, NetworkView } from "./api.js";
import { page } from "./render.js";
import type { PageState } from "./render.js";

export interface Scheduler {
  every(ms: number, fn: () => void): () => void;
}

export interface Surface {
  show(html: string): void;
}

export interface ConsoleOptions {
  panelInterval?: number;  // per-network view refresh
  alarmInterval?: number;  // alarm board refresh
  discoverInterval?: number; // route discovery sweep
}

const DEFAULT_PANEL_MS = 2000;
const DEFAULT_ALARM_MS = 2000;
const DEFAULT_DISCOVER_MS = 10000;

export class ConsoleApp {
  state: PageState;

  private panelTimers = new Map<string, () => void>();
  private cancels: Array<() => void> = [];
  private panelInterval: number;
  private alarmInterval: number;
  private discoverInterval: number;

  constructor(
    private api: ApiClient,
    private surface: Surface,
    private scheduler: Scheduler,
    principal: string,
    opts: ConsoleOptions = {},
  ) {
    this.panelInterval = opts.panelInterval ?? DEFAULT_PANEL_MS;
    this.alarmInterval = opts.alarmInterval ?? DEFAULT_ALARM_MS;
    this.discoverInterval = opts.discoverInterval ?? DEFAULT_DISCOVER_MS;
    this.state = {
      principal,
      panels: [],
      alarms: [],
      filter: { state: "", severity: "" },
      form: {
        className: "",
        key: "",
        property: "",
        value: "",
        message: "",
        current: null,
      },
      perfForm: { source: "", metric: "", from: "0", to: "3600" },
      perf: null,
      backupLast: null,
      notices: [],
    };
  }

  async start(): Promise<void> {
    await this.discover();
    await this.refreshAlarms();
    this.cancels.push(
      this.scheduler.every(this.discoverInterval, () => void this.discover()),
      this.scheduler.every(this.alarmInterval, () => void this.refreshAlarms()),
    );
    this.render();
  }

  stop(): void {
    for (const cancel of this.cancels) cancel();
    for (const cancel of this.panelTimers.values()) cancel();
    this.cancels = [];
    this.panelTimers.clear();
  }

  /** Fetch /views, adopt any new network, update every panel. */
  async discover(): Promise<void> {
    let views: NetworkView[];
    try {
      views = await this.api.views();
    } catch (err) {
      this.notice(`views refresh failed: ${describe(err)}`);
      return;
    }
    const seen = new Map(views.map((v) => [v.network, v]));
    for (const view of views) {
      if (!this.panelTimers.has(view.network)) {
        this.adoptPanel(view.network);
      }
    }
    for (const panel of this.state.panels) {
      const view = seen.get(panel.network);
      panel.view = view ?? panel.view;
      panel.unreachable = view === undefined;
    }
    this.render();
  }

  private adoptPanel(network: string): void {
    this.state.panels.push({ network, view: null, unreachable: false });
    this.state.panels.sort((a, b) => a.network.localeCompare(b.network));
    this.panelTimers.set(
      network,
      this.scheduler.every(this.panelInterval, () => void this.refreshPanel(network)),
    );
  }

  /** One panel's independent refresh; failure marks only that panel. */
  async refreshPanel(network: string): Promise<void> {
    const panel = this.state.panels.find((p) => p.network === network);
    if (!panel) return;
    try {
      const views = await this.api.views();
      const view = views.find((v) => v.network === network);
      panel.view = view ?? panel.view;
      panel.unreachable = view === undefined;
    } catch {
      panel.unreachable = true;
    }
    this.render();
  }

  async refreshAlarms(): Promise<void> {
    try {
      this.state.alarms = await this.api.alarms(
        this.state.filter.state ? { state: this.state.filter.state } : {},
      );
    } catch (err) {
      this.notice(`alarm refresh failed: ${describe(err)}`);
      return;
    }
    this.render();
  }

  async dispatch(action: string, payload: Record<string, string> = {}): Promise<void> {
    switch (action) {
      case "ack":
        await this.transition("ack", Number(payload.id));
        return;
      case "resolve":
        await this.transition("resolve", Number(payload.id));
        return;
      case "filter":
        this.state.filter = {
          state: payload.state ?? this.state.filter.state,
          severity: payload.severity ?? this.state.filter.severity,
        };
        await this.refreshAlarms();
        return;
      case "set":
        await this.setParameter(payload);
        return;
      case "load":
        await this.loadInstance(payload);
        return;
      case "perf":
        await this.loadPerf(payload);
        return;
      case "backup":
        await this.runBackup(payload.network ?? "");
        return;
      case "dismiss": {
        const index = Number(payload.index);
        this.state.notices = this.state.notices.filter((_, i) => i !== index);
        this.render();
        return;
      }
      default:
        this.notice(`unknown action ${action}`);
    }
  }

  private async transition(verb: "ack" | "resolve", alarmId: number): Promise<void> {
    try {
      const updated =
        verb === "ack" ? await this.api.ack(alarmId) : await this.api.resolve(alarmId);
      this.replaceAlarm(updated);
      this.render();
    } catch (err) {
      // a rejected transition is a notice, never a blocked board
      this.notice(`alarm ${alarmId} ${verb} failed: ${describe(err)}`);
    }
  }

  private replaceAlarm(updated: Alarm): void {
    const index = this.state.alarms.findIndex((a) => a.alarm_id === updated.alarm_id);
    if (index >= 0) this.state.alarms[index] = updated;
    else this.state.alarms.push(updated);
  }

  private async setParameter(payload: Record<string, string>): Promise<void> {
    const form = this.state.form;
    form.className = payload.className ?? form.className;
    form.key = payload.key ?? form.key;
    form.property = payload.property ?? form.property;
    form.value = payload.value ?? form.value;
    try {
      await this.api.modify(form.className, form.key, form.property, form.value);
      form.message = `wrote ${form.property}`;
      // read back through the API so the panel shows server truth
      form.current = await this.api.instance(form.className, form.key);
    } catch (err) {
      form.message = describe(err);
    }
    this.render();
  }

  private async loadInstance(payload: Record<string, string>): Promise<void> {
    const form = this.state.form;
    form.className = payload.className ?? form.className;
    form.key = payload.key ?? form.key;
    if (payload.property !== undefined) form.property = payload.property;
    try {
      form.current = await this.api.instance(form.className, form.key);
      form.message = "";
    } catch (err) {
      form.message = describe(err);
    }
    this.render();
  }

  private async loadPerf(payload: Record<string, string>): Promise<void> {
    const pf = this.state.perfForm;
    pf.source = payload.source ?? pf.source;
    pf.metric = payload.metric ?? pf.metric;
    pf.from = payload.from ?? pf.from;
    pf.to = payload.to ?? pf.to;
    const from = Number(pf.from);
    const to = Number(pf.to);
    if (!Number.isFinite(from) || !Number.isFinite(to)) {
      this.notice(`bad window ${pf.from}..${pf.to}`);
      return;
    }
    try {
      this.state.perf = await this.api.perf(pf.source, pf.metric, from, to);
      this.render();
    } catch (err) {
      this.notice(`perf query failed: ${describe(err)}`);
    }
  }

  private async runBackup(network: string): Promise<void> {
    try {
      this.state.backupLast = await this.api.backup(network);
      this.render();
    } catch (err) {
      this.notice(`backup of ${network} failed: ${describe(err)}`);
    }
  }

  private notice(text: string): void {
    const last = this.state.notices[this.state.notices.length - 1];
    if (last !== text) this.state.notices.push(text);
    this.render();
  }

  private render(): void {
    this.surface.show(page(this.state));
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) {
    if (err.status === 403) return `denied: ${err.detail || err.code}`;
    return err.detail ? `${err.code}: ${err.detail}` : err.code;
  }
  return String(err);
}
