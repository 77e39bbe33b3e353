/**
 * Browser bootstrap: wires the app to the real DOM, fetch, and timers.
 *
 * All behavior lives in ConsoleApp; this file only translates DOM events
 * into dispatch calls. Clicks and submits are delegated from the root so
 * re-rendered markup needs no re-binding. The session token lives in the
 * ApiClient instance and nowhere else; a reload simply logs in again.
 */

import { ApiClient, ApiError } from "./api.js";
import { ConsoleApp } from "./app.js";
import type { Scheduler, Surface } from "./app.js";
import { loginScreen } from "./render.js";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");

const surface: Surface = {
  show(html: string) {
    root.innerHTML = html;
  },
};

const scheduler: Scheduler = {
  every(ms: number, fn: () => void) {
    const timer = window.setInterval(fn, ms);
    return () => window.clearInterval(timer);
  },
};

const api = new ApiClient("", (url, init) => window.fetch(url, init));
let app: ConsoleApp | null = null;

function showLogin(error = ""): void {
  surface.show(loginScreen(error));
}

async function tryLogin(principal: string, secret: string): Promise<void> {
  try {
    const session = await api.login(principal, secret);
    app = new ConsoleApp(api, surface, scheduler, session.principal);
    await app.start();
  } catch (err) {
    const reason = err instanceof ApiError ? err.detail || err.code : String(err);
    showLogin(reason);
  }
}

function formPayload(form: HTMLFormElement): Record<string, string> {
  const payload: Record<string, string> = {};
  for (const [name, value] of new FormData(form).entries()) {
    if (typeof value === "string") payload[name] = value;
  }
  return payload;
}

root.addEventListener("submit", (event) => {
  const form = event.target;
  if (!(form instanceof HTMLFormElement)) return;
  const action = form.dataset.action;
  if (!action) return;
  event.preventDefault();
  const payload = formPayload(form);
  if (action === "login") {
    void tryLogin(payload.principal ?? "", payload.secret ?? "");
  } else if (app) {
    void app.dispatch(action, payload);
  }
});

root.addEventListener("click", (event) => {
  const target = event.target;
  if (!(target instanceof HTMLElement)) return;
  const button = target.closest<HTMLElement>("button[data-action]");
  if (!button || !app) return;
  const action = button.dataset.action;
  if (!action || action === "login") return;
  if (button instanceof HTMLButtonElement && button.type === "submit") return;
  const payload: Record<string, string> = {};
  if (button.dataset.id) payload.id = button.dataset.id;
  if (button.dataset.index) payload.index = button.dataset.index;
  if (action === "load") {
    // the Read button reuses whatever is typed in its form
    const form = button.closest("form");
    if (form) Object.assign(payload, formPayload(form));
  }
  void app.dispatch(action, payload);
});

root.addEventListener("change", (event) => {
  const select = event.target;
  if (!(select instanceof HTMLSelectElement) || !app) return;
  if (select.dataset.action !== "filter") return;
  void app.dispatch("filter", { [select.name]: select.value });
});

showLogin();
