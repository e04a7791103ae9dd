import type { LiveStatus, MergedRow, SessionMeta } from "./types.js";

export type Screen = "home" | "instructions" | "recording" | "detail";

export const FEED_GAP_LIMIT_MS = 5000;

export interface DetailState {
  sessionId: string;
  meta: SessionMeta | null;
  merged: MergedRow[] | null;
  exportPending: boolean;
  error: string | null;
}

export interface AppState {
  hubUrl: string;
  screen: Screen;
  status: LiveStatus | null;
  lastEventAtMs: number | null;
  feedStale: boolean;
  sessions: SessionMeta[];
  detail: DetailState | null;
  busy: boolean;
  error: string | null;
}

export function initialState(hubUrl: string): AppState {
  return {
    hubUrl,
    screen: "home",
    status: null,
    lastEventAtMs: null,
    feedStale: false,
    sessions: [],
    detail: null,
    busy: false,
    error: null,
  };
}

export function onStatus(state: AppState, status: LiveStatus, nowMs: number): AppState {
  return { ...state, status, lastEventAtMs: nowMs, feedStale: false };
}

export function onTick(state: AppState, nowMs: number): AppState {
  const stale =
    state.lastEventAtMs !== null && nowMs - state.lastEventAtMs > FEED_GAP_LIMIT_MS;
  if (stale === state.feedStale) return state;
  return { ...state, feedStale: stale };
}

export function navigate(state: AppState, screen: Screen, sessionId?: string): AppState {
  const detail: DetailState | null =
    screen === "detail" && sessionId
      ? { sessionId, meta: null, merged: null, exportPending: true, error: null }
      : null;
  return { ...state, screen, detail, error: null };
}

// the recording screen enables start only when the hub says both devices
// are ready and the live feed is actually alive
export function startEnabled(state: AppState): boolean {
  return (
    !state.busy &&
    !state.feedStale &&
    state.status !== null &&
    state.status.ready_to_start &&
    state.status.state !== "recording"
  );
}

export function startDisabledReason(state: AppState): string | null {
  if (startEnabled(state)) return null;
  if (state.busy) return "working…";
  if (state.status === null || state.feedStale) return "waiting for the hub";
  if (state.status.state === "recording") return "already recording";
  const missing = (["chest_strap", "watch"] as const)
    .filter((kind) => state.status!.links[kind].state !== "synced")
    .map((kind) => `${kind.replace("_", " ")} ${state.status!.links[kind].state}`);
  return missing.length ? `not ready: ${missing.join(", ")}` : "not ready";
}

export function stopEnabled(state: AppState): boolean {
  return !state.busy && state.status !== null && state.status.state === "recording";
}
