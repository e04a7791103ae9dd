import { HubApiError, HubClient } from "./api.js";
import { parseMergedCsv } from "./csv.js";
import { LiveFeed } from "./live.js";
import { renderApp } from "./render.js";
import {
  AppState,
  initialState,
  navigate,
  onStatus,
  onTick,
  Screen,
} from "./state.js";

const params = new URL(location.href).searchParams;
const hubUrl =
  params.get("hub") ?? `${location.protocol}//${location.hostname}:7008`;

const client = new HubClient(hubUrl);
const root = document.getElementById("app")!;
let state: AppState = initialState(hubUrl);

function update(next: AppState): void {
  state = next;
  root.innerHTML = renderApp(state);
}

const feed = new LiveFeed(client.eventsUrl());
feed.start({ onStatus: (status) => update(onStatus(state, status, Date.now())) });
setInterval(() => update(onTick(state, Date.now())), 1000);

async function refreshSessions(): Promise<void> {
  try {
    update({ ...state, sessions: await client.listSessions() });
  } catch (err) {
    update({ ...state, error: describe(err) });
  }
}

async function openDetail(sessionId: string): Promise<void> {
  update(navigate(state, "detail", sessionId));
  try {
    const meta = await client.getSession(sessionId);
    update({ ...state, detail: { ...state.detail!, meta } });
  } catch (err) {
    update({ ...state, detail: { ...state.detail!, error: describe(err) } });
    return;
  }
  // export may still be finalizing right after stop: spin and retry
  for (let attempt = 0; attempt < 20; attempt++) {
    if (state.detail?.sessionId !== sessionId) return; // navigated away
    try {
      await client.exportSession(sessionId);
      const text = await client.fetchMergedCsv(sessionId);
      update({
        ...state,
        detail: { ...state.detail!, merged: parseMergedCsv(text), exportPending: false },
      });
      return;
    } catch (err) {
      if (err instanceof HubApiError && err.code === "not_ready") {
        await sleep(1000);
        continue;
      }
      update({ ...state, detail: { ...state.detail!, error: describe(err) } });
      return;
    }
  }
  update({ ...state, detail: { ...state.detail!, error: "export never became ready" } });
}

async function startSession(): Promise<void> {
  const form = root.querySelector<HTMLFormElement>(".session-form");
  const title = form?.elements.namedItem("title") as HTMLInputElement | null;
  const description = form?.elements.namedItem("description") as HTMLInputElement | null;
  update({ ...state, busy: true, error: null });
  try {
    const meta = await client.createSession(title?.value ?? "", description?.value ?? "");
    await client.startSession(meta.id);
    update({ ...state, busy: false });
  } catch (err) {
    update({ ...state, busy: false, error: describe(err) });
  }
}

async function stopSession(): Promise<void> {
  const sessionId = state.status?.session_id;
  if (!sessionId) return;
  update({ ...state, busy: true, error: null });
  try {
    const meta = await client.stopSession(sessionId);
    update({ ...state, busy: false });
    await openDetail(meta.id); // land on the finished session's detail view
  } catch (err) {
    update({ ...state, busy: false, error: describe(err) });
  }
}

root.addEventListener("click", (event) => {
  const target = (event.target as HTMLElement).closest<HTMLElement>("[data-action]");
  if (!target) return;
  const action = target.dataset.action;
  if (action === "nav") {
    update(navigate(state, target.dataset.screen as Screen));
    if (target.dataset.screen === "home") void refreshSessions();
  } else if (action === "refresh-sessions") {
    void refreshSessions();
  } else if (action === "open-session") {
    void openDetail(target.dataset.id!);
  } else if (action === "start") {
    void startSession();
  } else if (action === "stop") {
    void stopSession();
  }
});

function describe(err: unknown): string {
  if (err instanceof HubApiError) return `${err.code}: ${err.message}`;
  return String(err);
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

update(state);
void refreshSessions();
