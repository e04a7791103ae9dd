// Display formatting only; the dashboard never does time-base arithmetic.

export function bpmLabel(bpm: number | null): string {
  if (bpm === null) return "--";
  if (bpm === 0) return "0 (low signal)"; // poor PPG quality, not a disconnect
  return String(bpm);
}

export function formatElapsed(ms: number): string {
  const totalSeconds = Math.floor(ms / 1000);
  const h = Math.floor(totalSeconds / 3600);
  const m = Math.floor((totalSeconds % 3600) / 60);
  const s = totalSeconds % 60;
  const mm = h > 0 ? String(m).padStart(2, "0") : String(m);
  const ss = String(s).padStart(2, "0");
  return h > 0 ? `${h}:${mm}:${ss}` : `${mm}:${ss}`;
}

export function formatDuration(ms: number | null): string {
  if (ms === null) return "--";
  return formatElapsed(ms);
}

export function formatDate(unixMs: number): string {
  return new Date(unixMs).toLocaleString();
}

export function linkLabel(state: string): string {
  switch (state) {
    case "synced":
      return "synced";
    case "connected":
      return "connected (syncing)";
    default:
      return "disconnected";
  }
}

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}
