export interface LinkInfo {
  state: "disconnected" | "connected" | "synced";
  device_id: string | null;
  sync_error: string | null;
}

export interface LiveStatus {
  state: "idle" | "ready" | "recording";
  session_id: string | null;
  elapsed_ms: number;
  ready_to_start: boolean;
  links: { chest_strap: LinkInfo; watch: LinkInfo };
  chest_bpm: number | null;
  watch_bpm: number | null;
  watch_bpm_quality: "ok" | "low" | null;
  last_stopped_session_id: string | null;
}

export interface SessionMeta {
  id: string;
  title: string;
  description: string;
  created_unix_ms: number;
  start_unix_ms: number | null;
  end_unix_ms: number | null;
  duration_ms: number | null;
  state: string;
}

export interface ExportManifest {
  session_id: string;
  dir: string;
  files: string[];
}

export interface MergedRow {
  timeS: number;
  chestBpm: number | null;
  watchBpm: number | null;
  phase: string;
}
