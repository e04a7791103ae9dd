import type { LinkInfo, LiveStatus } from "../src/types.js";

export function link(state: LinkInfo["state"]): LinkInfo {
  return { state, device_id: state === "disconnected" ? null : "dev-1", sync_error: null };
}

export function status(overrides: Partial<LiveStatus> = {}): LiveStatus {
  return {
    state: "idle",
    session_id: null,
    elapsed_ms: 0,
    ready_to_start: false,
    links: { chest_strap: link("disconnected"), watch: link("disconnected") },
    chest_bpm: null,
    watch_bpm: null,
    watch_bpm_quality: null,
    last_stopped_session_id: null,
    ...overrides,
  };
}

export function readyStatus(overrides: Partial<LiveStatus> = {}): LiveStatus {
  return status({
    ready_to_start: true,
    links: { chest_strap: link("synced"), watch: link("synced") },
    chest_bpm: 72,
    watch_bpm: 70,
    watch_bpm_quality: "ok",
    ...overrides,
  });
}
