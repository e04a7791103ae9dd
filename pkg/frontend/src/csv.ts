import type { MergedRow } from "./types.js";

// merged_hr.csv never quotes fields, so a plain comma split is exact.
const HEADER = "time_s,chest_bpm,watch_bpm,phase_label";

export function parseMergedCsv(text: string): MergedRow[] {
  const lines = text.split("\n").filter((line) => line.length > 0);
  if (lines.length === 0 || lines[0].trim() !== HEADER) {
    throw new Error(`unexpected merged CSV header: ${lines[0] ?? "(empty)"}`);
  }
  return lines.slice(1).map((line) => {
    const [timeS, chest, watch, phase] = line.split(",");
    return {
      timeS: Number(timeS),
      chestBpm: chest === "" ? null : Number(chest),
      watchBpm: watch === "" ? null : Number(watch),
      phase: phase ?? "",
    };
  });
}
