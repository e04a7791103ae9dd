import { buildChart, chartSvg } from "./chart.js";
import {
  bpmLabel,
  escapeHtml,
  formatDate,
  formatDuration,
  formatElapsed,
  linkLabel,
} from "./format.js";
import {
  AppState,
  startDisabledReason,
  startEnabled,
  stopEnabled,
} from "./state.js";

export function renderApp(state: AppState): string {
  const banner = state.feedStale
    ? `<div class="banner error" data-testid="hub-lost">connection to hub lost</div>`
    : "";
  const error = state.error
    ? `<div class="banner error">${escapeHtml(state.error)}</div>`
    : "";
  return `
  <header>
    <h1>wearhub</h1>
    <nav>
      <button data-action="nav" data-screen="home">Home</button>
      <button data-action="nav" data-screen="instructions">Instructions</button>
      <button data-action="nav" data-screen="recording">Collect</button>
    </nav>
  </header>
  ${banner}${error}
  <main>${renderScreen(state)}</main>`;
}

function renderScreen(state: AppState): string {
  switch (state.screen) {
    case "home":
      return renderHome(state);
    case "instructions":
      return renderInstructions();
    case "recording":
      return renderRecording(state);
    case "detail":
      return renderDetail(state);
  }
}

export function renderHome(state: AppState): string {
  const items = state.sessions
    .map(
      (s) => `
      <li>
        <button data-action="open-session" data-id="${escapeHtml(s.id)}">
          ${escapeHtml(s.title || "(untitled)")}
        </button>
        <span class="muted">${formatDate(s.created_unix_ms)} · ${formatDuration(s.duration_ms)} · ${escapeHtml(s.state)}</span>
      </li>`,
    )
    .join("");
  return `
  <section class="home">
    <p>Collect synchronized heart-rate and motion streams from a chest strap
    and a smartwatch.</p>
    <div class="actions">
      <button class="primary" data-action="nav" data-screen="recording">New collection</button>
      <button data-action="refresh-sessions">Refresh history</button>
    </div>
    <h2>History</h2>
    <ul class="history">${items || "<li class='muted'>no sessions yet</li>"}</ul>
  </section>`;
}

export function renderInstructions(): string {
  return `
  <section class="instructions">
    <h2>Before you start</h2>
    <ol>
      <li>Moisten the chest-strap electrodes and wear the strap snugly below the chest.</li>
      <li>Wear the watch firmly on the wrist; a loose band degrades the optical signal.</li>
      <li>Start the hub, then connect both devices and wait for both to show <em>synced</em>.</li>
      <li>Press start, perform the activity protocol, press stop. The session is saved
          automatically and can be exported as CSV.</li>
    </ol>
    <p class="muted">A watch heart rate of 0 means the optical signal quality is
    momentarily too poor for an estimate (common while moving). It is not a
    connection failure: the device stays connected and values resume on their own.</p>
  </section>`;
}

export function renderRecording(state: AppState): string {
  const status = state.status;
  const links = status?.links;
  const deviceRow = (kind: "chest_strap" | "watch", label: string) => {
    const link = links?.[kind];
    const linkState = link?.state ?? "disconnected";
    return `
      <div class="device ${linkState}" data-testid="link-${kind}">
        <span class="name">${label}</span>
        <span class="state">${linkLabel(linkState)}</span>
        ${link?.sync_error ? `<span class="warn">${escapeHtml(link.sync_error)}</span>` : ""}
      </div>`;
  };
  const recording = status?.state === "recording";
  const reason = startDisabledReason(state);
  const watchBpm = bpmLabel(status?.watch_bpm ?? null);
  return `
  <section class="recording">
    <div class="devices">
      ${deviceRow("chest_strap", "Chest strap (ECG)")}
      ${deviceRow("watch", "Watch (PPG)")}
    </div>
    <div class="live">
      <div class="bpm" data-testid="chest-bpm">
        <span class="value">${bpmLabel(status?.chest_bpm ?? null)}</span>
        <span class="unit">bpm chest</span>
      </div>
      <div class="bpm ${status?.watch_bpm === 0 ? "low-signal" : ""}" data-testid="watch-bpm">
        <span class="value">${watchBpm}</span>
        <span class="unit">bpm watch</span>
      </div>
      <div class="elapsed" data-testid="elapsed">${formatElapsed(status?.elapsed_ms ?? 0)}</div>
    </div>
    <form class="session-form" data-recording="${recording}">
      <input name="title" placeholder="session title" ${recording ? "disabled" : ""}/>
      <input name="description" placeholder="description" ${recording ? "disabled" : ""}/>
    </form>
    <div class="controls">
      <button class="primary" data-action="start" data-testid="start"
              ${startEnabled(state) ? "" : "disabled"}>Start</button>
      <button class="danger" data-action="stop" data-testid="stop"
              ${stopEnabled(state) ? "" : "disabled"}>Stop</button>
      ${reason && !recording ? `<span class="muted" data-testid="start-reason">${escapeHtml(reason)}</span>` : ""}
    </div>
  </section>`;
}

export function renderDetail(state: AppState): string {
  const detail = state.detail;
  if (!detail) return `<section class="detail">no session selected</section>`;
  const meta = detail.meta;
  const head = meta
    ? `
      <h2>${escapeHtml(meta.title || "(untitled)")}</h2>
      <p>${escapeHtml(meta.description)}</p>
      <p class="muted">${formatDate(meta.created_unix_ms)} · duration ${formatDuration(meta.duration_ms)}</p>`
    : `<p class="muted">loading metadata…</p>`;
  let body: string;
  if (detail.error) {
    body = `<div class="banner error">${escapeHtml(detail.error)}</div>`;
  } else if (detail.merged === null) {
    body = `<div class="spinner" data-testid="export-spinner">preparing export…</div>`;
  } else {
    body = `<figure class="chart" data-testid="chart">${chartSvg(buildChart(detail.merged))}
      <figcaption><span class="chest">chest strap</span> vs
      <span class="watch">watch</span>, bpm over seconds since start</figcaption></figure>`;
  }
  return `<section class="detail">${head}${body}</section>`;
}
