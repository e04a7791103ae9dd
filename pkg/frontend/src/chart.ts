import type { MergedRow } from "./types.js";

export interface ChartSeries {
  cssClass: string;
  label: string;
  path: string; // SVG path, gaps break into separate M segments
  points: number;
}

export interface ChartModel {
  width: number;
  height: number;
  series: ChartSeries[];
  yTicks: { y: number; label: string }[];
  xTicks: { x: number; label: string }[];
}

export const DOWNSAMPLE_THRESHOLD = 10_000;

const PAD = { left: 34, right: 8, top: 8, bottom: 20 };

export function downsample(rows: MergedRow[]): MergedRow[] {
  if (rows.length <= DOWNSAMPLE_THRESHOLD) return rows;
  const stride = Math.ceil(rows.length / DOWNSAMPLE_THRESHOLD);
  return rows.filter((_, index) => index % stride === 0);
}

export function buildChart(rows: MergedRow[], width = 640, height = 240): ChartModel {
  const data = downsample(rows);
  const values: number[] = [];
  for (const row of data) {
    if (row.chestBpm !== null) values.push(row.chestBpm);
    if (row.watchBpm !== null) values.push(row.watchBpm);
  }
  const yMin = values.length ? Math.min(0, Math.min(...values)) : 0;
  const yMax = values.length ? Math.max(...values) + 10 : 100;
  const xMax = data.length ? Math.max(data[data.length - 1].timeS, 1) : 1;

  const plotW = width - PAD.left - PAD.right;
  const plotH = height - PAD.top - PAD.bottom;
  const x = (t: number) => PAD.left + (t / xMax) * plotW;
  const y = (bpm: number) => PAD.top + plotH - ((bpm - yMin) / (yMax - yMin)) * plotH;

  function pathFor(select: (row: MergedRow) => number | null): { d: string; n: number } {
    let d = "";
    let pen = false;
    let n = 0;
    for (const row of data) {
      const value = select(row);
      if (value === null) {
        pen = false;
        continue;
      }
      d += `${pen ? "L" : "M"}${x(row.timeS).toFixed(1)},${y(value).toFixed(1)}`;
      pen = true;
      n += 1;
    }
    return { d, n };
  }

  const chest = pathFor((row) => row.chestBpm);
  const watch = pathFor((row) => row.watchBpm);
  const yTicks = [0, 0.5, 1].map((f) => {
    const bpm = yMin + f * (yMax - yMin);
    return { y: y(bpm), label: String(Math.round(bpm)) };
  });
  const xTicks = [0, 0.5, 1].map((f) => ({
    x: x(f * xMax),
    label: `${Math.round(f * xMax)}s`,
  }));
  return {
    width,
    height,
    series: [
      { cssClass: "chest", label: "chest strap", path: chest.d, points: chest.n },
      { cssClass: "watch", label: "watch", path: watch.d, points: watch.n },
    ],
    yTicks,
    xTicks,
  };
}

export function chartSvg(model: ChartModel): string {
  const lines = model.series
    .filter((s) => s.path.length > 0)
    .map((s) => `<path class="line ${s.cssClass}" d="${s.path}" fill="none"/>`)
    .join("");
  const yTicks = model.yTicks
    .map((t) => `<text class="tick" x="2" y="${t.y.toFixed(1)}">${t.label}</text>`)
    .join("");
  const xTicks = model.xTicks
    .map((t) => `<text class="tick" x="${t.x.toFixed(1)}" y="${model.height - 4}">${t.label}</text>`)
    .join("");
  return (
    `<svg viewBox="0 0 ${model.width} ${model.height}" role="img" aria-label="heart rate chart">` +
    `${lines}${yTicks}${xTicks}</svg>`
  );
}
