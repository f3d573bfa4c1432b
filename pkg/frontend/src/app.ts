// Browser wiring: screens, the 2s polling loop, and event handlers.
// All markup comes from the pure renderers; this module only decides
// when to fetch and where to mount. The bearer token lives inside the
// ServiceClient and is never interpolated into HTML.

import { ApiError, ServiceClient } from "./api";
import { canStartConsensus } from "./gating";
import {
  escapeHtml,
  renderConsensusControls,
  renderCoPanel,
  renderFeedback,
  renderPanelEditor,
  renderReport,
  renderTranscript,
} from "./render";
import type { PairView, Role, SessionView, Weight } from "./types";

const POLL_INTERVAL_MS = 2000;

type Screen = "pairing" | "panel" | "consensus" | "videos" | "report";

interface AppState {
  client: ServiceClient;
  pairId: string | null;
  role: Role | null;
  screen: Screen;
  sessionId: string | null;
  lastMarkup: Map<string, string>;
}

/** Re-renders a region only when its markup actually changed, so an
 * unchanged snapshot leaves the DOM untouched between polls. */
function mountInto(state: AppState, id: string, markup: string): void {
  if (state.lastMarkup.get(id) === markup) return;
  const target = document.getElementById(id);
  if (!target) return;
  target.innerHTML = markup;
  state.lastMarkup.set(id, markup);
}

function showError(state: AppState, err: unknown): void {
  const text =
    err instanceof ApiError ? `${err.kind}: ${err.message}` : String(err);
  mountInto(state, "status", `<div class="error">${escapeHtml(text)}</div>`);
}

function clearError(state: AppState): void {
  mountInto(state, "status", "");
}

// -- per-screen refresh ------------------------------------------------------

async function refreshPanel(state: AppState): Promise<void> {
  if (!state.pairId || !state.role) return;
  const [own, pair] = await Promise.all([
    state.client.getPanel(state.pairId, state.role),
    state.client.getPair(state.pairId),
  ]);
  mountInto(state, "panel-editor", renderPanelEditor(own));
  mountInto(state, "co-panel", renderCoPanel(pair.co_panel));
}

async function refreshConsensus(state: AppState): Promise<void> {
  if (!state.pairId) return;
  const pair = await state.client.getPair(state.pairId);
  if (!state.sessionId && pair.sessions.length > 0) {
    state.sessionId = pair.sessions[pair.sessions.length - 1] ?? null;
  }
  if (!state.sessionId) {
    mountInto(state, "transcript", `<div class="transcript empty">No session yet.</div>`);
    mountInto(state, "controls", renderStartButton(pair, []));
    return;
  }
  const view = await state.client.getConsensus(state.sessionId);
  mountInto(state, "transcript", renderTranscript(view));
  const markup =
    view.stage === "finalized"
      ? renderConsensusControls(view) + renderStartButton(pair, [view])
      : renderConsensusControls(view);
  mountInto(state, "controls", markup);
}

function renderStartButton(pair: PairView, known: SessionView[]): string {
  const enabled = pair.complete && canStartConsensus(pair, known);
  return `<button id="start-consensus"${enabled ? "" : " disabled"}>Start consensus</button>`;
}

async function refreshReport(state: AppState): Promise<void> {
  if (!state.pairId) return;
  const fromEl = document.getElementById("report-from") as HTMLInputElement | null;
  const toEl = document.getElementById("report-to") as HTMLInputElement | null;
  if (!fromEl || !toEl || fromEl.value === "" || toEl.value === "") return;
  const report = await state.client.getReport(
    state.pairId,
    Number(fromEl.value),
    Number(toEl.value),
  );
  mountInto(state, "report", renderReport(report));
}

async function refresh(state: AppState): Promise<void> {
  try {
    if (state.screen === "panel") await refreshPanel(state);
    else if (state.screen === "consensus") await refreshConsensus(state);
    else if (state.screen === "report") await refreshReport(state);
    clearError(state);
  } catch (err) {
    showError(state, err);
  }
}

// -- user actions ------------------------------------------------------------

function readPanelEdits(): Record<string, number> {
  const entries: Record<string, number> = {};
  document.querySelectorAll<HTMLTableRowElement>(".panel-editor tbody tr").forEach((row) => {
    const keyword = row.dataset["keyword"];
    const select = row.querySelector<HTMLSelectElement>("select.weight");
    if (keyword && select) entries[keyword] = Number(select.value);
  });
  return entries;
}

async function handleClick(state: AppState, target: HTMLElement): Promise<void> {
  if (!state.pairId || !state.role) return;
  if (target.id === "save-panel") {
    await state.client.putPanel(state.pairId, state.role, readPanelEdits());
  } else if (target.classList.contains("remove") && target.dataset["keyword"]) {
    const entries = readPanelEdits();
    delete entries[target.dataset["keyword"]];
    await state.client.putPanel(state.pairId, state.role, entries);
  } else if (target.id === "start-consensus") {
    const view = await state.client.startConsensus(state.pairId);
    state.sessionId = view.session_id;
  } else if (target.id === "accept" && state.sessionId) {
    await state.client.accept(state.sessionId);
  } else if (target.id === "send-reason" && state.sessionId) {
    const keyword = (document.getElementById("reason-keyword") as HTMLSelectElement).value;
    const text = (document.getElementById("reason-text") as HTMLInputElement).value;
    await state.client.submitReason(state.sessionId, keyword, text);
  } else if (target.id === "send-position" && state.sessionId) {
    const keyword = (document.getElementById("position-keyword") as HTMLSelectElement).value;
    const kind = (document.getElementById("position-kind") as HTMLSelectElement)
      .value as "keep" | "change" | "drop";
    const weightEl = document.querySelector<HTMLSelectElement>("select[name='position-weight']");
    const weight = kind === "change" && weightEl ? (Number(weightEl.value) as Weight) : null;
    await state.client.submitPosition(state.sessionId, keyword, { kind, weight });
  } else if (target.id === "advance" && state.sessionId) {
    await state.client.advance(state.sessionId);
  } else {
    return;
  }
  await refresh(state);
}

// -- bootstrap ---------------------------------------------------------------

export function mount(baseUrl: string): AppState {
  const state: AppState = {
    client: new ServiceClient(baseUrl),
    pairId: null,
    role: null,
    screen: "pairing",
    sessionId: null,
    lastMarkup: new Map(),
  };

  document.addEventListener("click", (event) => {
    const target = event.target;
    if (target instanceof HTMLElement) {
      if (target.dataset["screen"]) {
        state.screen = target.dataset["screen"] as Screen;
        state.lastMarkup.clear();
        void refresh(state);
        return;
      }
      void handleClick(state, target).catch((err) => showError(state, err));
    }
  });

  const joinForm = document.getElementById("join-form");
  joinForm?.addEventListener("submit", (event) => {
    event.preventDefault();
    const code = (document.getElementById("join-code") as HTMLInputElement).value.trim();
    const role = (document.getElementById("join-role") as HTMLSelectElement).value as Role;
    const account = (document.getElementById("join-account") as HTMLInputElement).value.trim();
    void state.client
      .join(code, role, account)
      .then((result) => {
        state.client.useToken(result.token);
        state.pairId = result.pair_id;
        state.role = result.role;
        state.screen = "panel";
        mountInto(state, "status", `<div class="joined">Joined as ${result.role}.</div>`);
        return refresh(state);
      })
      .catch((err) => showError(state, err));
  });

  window.setInterval(() => void refresh(state), POLL_INTERVAL_MS);
  return state;
}
