/**
 * HTML builders for every console surface.
 *
 * Pure functions from state to markup: no DOM access, no fetches, so the
 * whole layer is assertable as strings. Interactive elements carry
 * data-action attributes that the DOM glue dispatches on.
 */

import type { Alarm, BackupResult, Instance, NetworkView, PerfStats } from "./api.js";

export interface Panel {
  network: string;
  view: NetworkView | null;
  unreachable: boolean;
}

export interface AlarmFilter {
  state: string;    // "" means all
  severity: string; // "" means all
}

export interface ParamForm {
  className: string;
  key: string;
  property: string;
  value: string;
  message: string;
  current: Instance | null;
}

export interface PerfForm {
  source: string;
  metric: string;
  from: string;
  to: string;
}

export const SEVERITIES = ["minor", "major", "critical"];
export const ALARM_STATES = ["Raised", "Acknowledged", "Resolved"];

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

function clock(value: number | null): string {
  return value === null ? "never" : `t=${value.toFixed(1)}s`;
}

export function viewsGrid(panels: Panel[]): string {
  if (panels.length === 0) {
    return `<p class="empty">no networks routed</p>`;
  }
  const cards = panels.map((panel) => {
    const name = escapeHtml(panel.network);
    if (panel.unreachable || panel.view === null) {
      return `<article class="panel down" data-network="${name}">
        <h3>${name}</h3>
        <p class="down-note">unreachable</p>
      </article>`;
    }
    const v = panel.view;
    const badge = v.open_alarms > 0
      ? `<span class="badge alert" data-role="alarm-badge">${v.open_alarms}</span>`
      : `<span class="badge" data-role="alarm-badge">0</span>`;
    return `<article class="panel" data-network="${name}">
      <h3>${name} ${badge}</h3>
      <p class="proto">${escapeHtml(v.protocol)}</p>
      <dl>
        <dt>nodes</dt><dd data-role="nodes">${v.nodes}</dd>
        <dt>attached</dt><dd data-role="attached">${v.attached}</dd>
        <dt>last poll</dt><dd data-role="last-poll">${clock(v.last_poll)}</dd>
      </dl>
    </article>`;
  });
  return `<div class="grid">${cards.join("")}</div>`;
}

function stateOptions(selected: string): string {
  const all = `<option value=""${selected === "" ? " selected" : ""}>all states</option>`;
  const rest = ALARM_STATES.map(
    (s) => `<option value="${s}"${selected === s ? " selected" : ""}>${s}</option>`,
  );
  return all + rest.join("");
}

function severityOptions(selected: string): string {
  const all = `<option value=""${selected === "" ? " selected" : ""}>all severities</option>`;
  const rest = SEVERITIES.map(
    (s) => `<option value="${s}"${selected === s ? " selected" : ""}>${s}</option>`,
  );
  return all + rest.join("");
}

export function alarmBoard(alarms: Alarm[], filter: AlarmFilter): string {
  const visible = alarms.filter(
    (a) => filter.severity === "" || a.severity === filter.severity,
  );
  const rows = visible.map((a) => {
    const buttons: string[] = [];
    if (a.state === "Raised") {
      buttons.push(
        `<button data-action="ack" data-id="${a.alarm_id}">Ack</button>`,
      );
    }
    if (a.state !== "Resolved") {
      buttons.push(
        `<button data-action="resolve" data-id="${a.alarm_id}">Resolve</button>`,
      );
    }
    return `<tr data-alarm="${a.alarm_id}" class="sev-${escapeHtml(a.severity)}">
      <td>${a.alarm_id}</td>
      <td><span class="chip">${escapeHtml(a.severity)}</span></td>
      <td data-role="state">${escapeHtml(a.state)}</td>
      <td>${escapeHtml(a.network)} / ${escapeHtml(a.agent)}</td>
      <td>${escapeHtml(a.cause)}</td>
      <td>${a.duplicate_count}</td>
      <td>${clock(a.raised_at)}</td>
      <td>${buttons.join(" ")}</td>
    </tr>`;
  });
  const body = rows.length
    ? rows.join("")
    : `<tr><td colspan="8" class="empty">no alarms match</td></tr>`;
  return `<div class="board">
    <div class="filters">
      <label>state <select data-action="filter" name="state">${stateOptions(filter.state)}</select></label>
      <label>severity <select data-action="filter" name="severity">${severityOptions(filter.severity)}</select></label>
    </div>
    <table>
      <thead><tr><th>id</th><th>severity</th><th>state</th><th>agent</th>
        <th>cause</th><th>dups</th><th>raised</th><th></th></tr></thead>
      <tbody>${body}</tbody>
    </table>
  </div>`;
}

export function paramForm(form: ParamForm): string {
  const current = form.current
    ? `<p class="readback" data-role="current">current ${escapeHtml(form.property)} = ${
        escapeHtml(form.current.properties[form.property] ?? "(unset)")
      }</p>`
    : "";
  const message = form.message
    ? `<p class="message" data-role="set-message">${escapeHtml(form.message)}</p>`
    : "";
  return `<form data-action="set">
    <label>class <input name="className" value="${escapeHtml(form.className)}"></label>
    <label>key <input name="key" value="${escapeHtml(form.key)}"></label>
    <label>property <input name="property" value="${escapeHtml(form.property)}"></label>
    <label>value <input name="value" value="${escapeHtml(form.value)}"
      placeholder="i:42 or s:hex"></label>
    <button type="submit">Set</button>
    <button type="button" data-action="load">Read</button>
    ${message}${current}
  </form>`;
}

export function perfPanel(form: PerfForm, stats: PerfStats | null): string {
  let body = `<p class="empty">pick a source and metric</p>`;
  if (stats !== null) {
    if (stats.count === 0 || stats.mean === null) {
      body = `<p class="empty" data-role="perf-empty">no samples in window</p>`;
    } else {
      const trend = stats.trend_per_hour === null
        ? "n/a"
        : stats.trend_per_hour.toFixed(3);
      // bar widths scaled against the window max so the shape reads at a glance
      const scale = stats.max && stats.max > 0 ? stats.max : 1;
      const bar = (v: number | null) =>
        `<div class="bar" style="width:${Math.round(((v ?? 0) / scale) * 100)}%"></div>`;
      body = `<dl class="stats">
        <dt>count</dt><dd>${stats.count}</dd>
        <dt>mean</dt><dd data-role="perf-mean">${stats.mean.toFixed(3)}</dd>
        <dt>min</dt><dd>${stats.min?.toFixed(3)}</dd>
        <dt>max</dt><dd>${stats.max?.toFixed(3)}</dd>
        <dt>trend/h</dt><dd>${trend}</dd>
      </dl>
      <div class="chart">${bar(stats.min)}${bar(stats.mean)}${bar(stats.max)}</div>`;
    }
  }
  return `<form data-action="perf">
    <label>source <input name="source" value="${escapeHtml(form.source)}"></label>
    <label>metric <input name="metric" value="${escapeHtml(form.metric)}"></label>
    <label>from <input name="from" value="${escapeHtml(form.from)}" size="8"></label>
    <label>to <input name="to" value="${escapeHtml(form.to)}" size="8"></label>
    <button type="submit">Load</button>
  </form>${body}`;
}

export function backupPanel(networks: string[], last: BackupResult | null): string {
  const options = networks
    .map((n) => `<option value="${escapeHtml(n)}">${escapeHtml(n)}</option>`)
    .join("");
  const result = last
    ? `<p data-role="backup-result">snapshot ${last.snapshot_id} of ${
        escapeHtml(last.network)
      } saved (${last.entries} entries)</p>`
    : "";
  return `<form data-action="backup">
    <label>network <select name="network">${options}</select></label>
    <button type="submit">Back up</button>
  </form>${result}`;
}

export function noticeList(notices: string[]): string {
  if (notices.length === 0) return "";
  const items = notices.map(
    (text, index) =>
      `<li>${escapeHtml(text)} <button data-action="dismiss" data-index="${index}">x</button></li>`,
  );
  return `<ul class="notices" data-role="notices">${items.join("")}</ul>`;
}

export function loginScreen(error: string): string {
  const message = error
    ? `<p class="message" data-role="login-error">${escapeHtml(error)}</p>`
    : "";
  return `<div class="login">
    <h1>hetman console</h1>
    <form data-action="login">
      <label>principal <input name="principal" autocomplete="username"></label>
      <label>secret <input name="secret" type="password" autocomplete="current-password"></label>
      <button type="submit">Sign in</button>
    </form>
    ${message}
  </div>`;
}

export interface PageState {
  principal: string;
  panels: Panel[];
  alarms: Alarm[];
  filter: AlarmFilter;
  form: ParamForm;
  perfForm: PerfForm;
  perf: PerfStats | null;
  backupLast: BackupResult | null;
  notices: string[];
}

export function page(state: PageState): string {
  const networks = state.panels.map((p) => p.network);
  return `<header>
    <h1>hetman console</h1>
    <span class="who">${escapeHtml(state.principal)}</span>
  </header>
  ${noticeList(state.notices)}
  <section id="views">
    <h2>networks</h2>
    ${viewsGrid(state.panels)}
  </section>
  <section id="alarms">
    <h2>alarms</h2>
    ${alarmBoard(state.alarms, state.filter)}
  </section>
  <section id="actions">
    <div class="card"><h2>set parameter</h2>${paramForm(state.form)}</div>
    <div class="card"><h2>performance</h2>${perfPanel(state.perfForm, state.perf)}</div>
    <div class="card"><h2>backup</h2>${backupPanel(networks, state.backupLast)}</div>
  </section>`;
}
