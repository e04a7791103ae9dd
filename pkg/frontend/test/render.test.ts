import { describe, expect, it } from "vitest";

import { renderApp, renderDetail, renderRecording } from "../src/render.js";
import { initialState, navigate, onStatus, onTick } from "../src/state.js";
import type { MergedRow } from "../src/types.js";
import { link, readyStatus, status } from "./helpers.js";

const base = () => initialState("http://hub:7008");

describe("recording screen", () => {
  it("start disabled with the reason while a device is missing", () => {
    const s = onStatus(
      base(),
      status({ links: { chest_strap: link("synced"), watch: link("disconnected") } }),
      0,
    );
    const html = renderRecording(s);
    expect(html).toMatch(/data-testid="start"\s+disabled/);
    expect(html).toContain("watch disconnected");
  });

  it("start enabled once both devices are ready", () => {
    const html = renderRecording(onStatus(base(), readyStatus(), 0));
    expect(html).not.toMatch(/data-testid="start"\s+disabled/);
    expect(html).toMatch(/data-testid="stop"\s+disabled/);
  });

  it("live values and elapsed time render from the status", () => {
    const html = renderRecording(
      onStatus(
        base(),
        readyStatus({ state: "recording", chest_bpm: 101, watch_bpm: 97, elapsed_ms: 83_000 }),
        0,
      ),
    );
    expect(html).toContain("101");
    expect(html).toContain("97");
    expect(html).toContain("1:23");
    expect(html).not.toMatch(/data-testid="stop"\s+disabled/);
  });

  it("watch bpm 0 renders as low signal while the link stays synced", () => {
    const html = renderRecording(
      onStatus(
        base(),
        readyStatus({ state: "recording", watch_bpm: 0, watch_bpm_quality: "low" }),
        0,
      ),
    );
    expect(html).toContain("0 (low signal)");
    expect(html).toMatch(/link-watch[\s\S]*?synced/);
    expect(html).not.toMatch(/link-watch[\s\S]*?disconnected/);
  });
});

describe("app chrome", () => {
  it("shows the hub-lost banner when the feed is stale", () => {
    let s = onStatus(base(), status(), 0);
    s = onTick(s, 20_000);
    expect(renderApp(s)).toContain("connection to hub lost");
  });

  it("no banner while fresh", () => {
    const s = onStatus(base(), status(), 0);
    expect(renderApp(s)).not.toContain("connection to hub lost");
  });

  it("home lists history entries", () => {
    const s = {
      ...base(),
      sessions: [
        {
          id: "abc",
          title: "morning run",
          description: "",
          created_unix_ms: 1_700_000_000_000,
          start_unix_ms: null,
          end_unix_ms: null,
          duration_ms: 510_000,
          state: "stopped",
        },
      ],
    };
    const html = renderApp(s);
    expect(html).toContain("morning run");
    expect(html).toContain('data-action="open-session"');
  });
});

describe("detail screen", () => {
  const merged: MergedRow[] = Array.from({ length: 20 }, (_, k) => ({
    timeS: k,
    chestBpm: 70 + k,
    watchBpm: k === 3 ? null : 72 + k,
    phase: "rest",
  }));

  it("spinner while the export is pending", () => {
    const s = navigate(base(), "detail", "abc");
    expect(renderDetail(s)).toContain("export-spinner");
  });

  it("chart with two series once the merged CSV is loaded", () => {
    let s = navigate(base(), "detail", "abc");
    s = {
      ...s,
      detail: {
        ...s.detail!,
        meta: {
          id: "abc",
          title: "t",
          description: "d",
          created_unix_ms: 1_700_000_000_000,
          start_unix_ms: 1,
          end_unix_ms: 2,
          duration_ms: 510_000,
          state: "stopped",
        },
        merged,
        exportPending: false,
      },
    };
    const html = renderDetail(s);
    expect(html.match(/class="line chest"/g)).toHaveLength(1);
    expect(html.match(/class="line watch"/g)).toHaveLength(1);
    expect(html).toContain("8:30");
  });

  it("error state renders the message", () => {
    let s = navigate(base(), "detail", "abc");
    s = { ...s, detail: { ...s.detail!, error: "export never became ready" } };
    expect(renderDetail(s)).toContain("export never became ready");
  });
});
