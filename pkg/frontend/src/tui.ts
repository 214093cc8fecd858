/**
 * Terminal rendering: pure view -> string, no state of its own.
 * Muscles keep stable single-letter markers; the polar panel draws the
 * 1 - recruitment convention (full recruitment collapses to the centre).
 */

import { intensityGrid, polarPoints } from "./polar.js";
import {
  enabledCommands,
  normalizedSeries,
  type PanelCommand,
  type UiSessionView,
} from "./viewState.js";

const BARS = " ▁▂▃▄▅▆▇█";

export function renderStatusLine(view: UiSessionView): string {
  const badges: string[] = [];
  badges.push(`state=${view.state}`);
  if (view.config) badges.push(`config=${view.config}`);
  badges.push(`link=${view.connection}`);
  if (view.connection === "stale") badges.push("[STALE VIEW]");
  if (view.dataGap) badges.push("[DATA GAP]");
  if (view.pendingCommand) badges.push(`awaiting ${view.pendingCommand}...`);
  if (view.stopReason) badges.push(`stopped: ${view.stopReason}`);
  if (view.lastError) badges.push(`error: ${view.lastError}`);
  return badges.join("  ");
}

export function renderCurves(view: UiSessionView): string {
  const muscles = Object.keys(view.points).sort();
  if (muscles.length === 0) return "(no live points yet)";
  const lines: string[] = [];
  for (const muscle of muscles) {
    const series = normalizedSeries(view, muscle);
    const bars = series
      .map((p) => {
        if (p.normalized === null) return "_";
        const idx = Math.min(BARS.length - 1, Math.round(p.normalized * (BARS.length - 1)));
        return BARS[idx];
      })
      .join("");
    const latest = view.points[muscle].at(-1);
    const tail = latest ? ` ${latest.amplitudeUa} uA, ${latest.p2pUv.toFixed(1)} uV` : "";
    lines.push(`${muscle.padEnd(4)} |${bars}|${tail}`);
  }
  return lines.join("\n");
}

export function renderPolar(view: UiSessionView, intensityUa: number, size = 21): string {
  const points = polarPoints(view, intensityUa);
  const half = Math.floor(size / 2);
  const grid: string[][] = Array.from({ length: size }, () => Array(size).fill(" "));
  for (let row = 0; row < size; row++) {
    for (let col = 0; col < size; col++) {
      const r = Math.hypot((col - half) / half, (row - half) / half);
      if (Math.abs(r - 1.0) < 0.5 / half) grid[row][col] = "·";
    }
  }
  grid[half][half] = "+";
  const markers = new Map<string, string>();
  for (const point of points) {
    let marker = markers.get(point.muscle);
    if (!marker) {
      marker = point.muscle[0] ?? "?";
      markers.set(point.muscle, marker);
    }
    const theta = (point.angleDeg * Math.PI) / 180;
    const col = Math.round(half + point.radius * half * Math.cos(theta));
    const row = Math.round(half - point.radius * half * Math.sin(theta));
    if (row >= 0 && row < size && col >= 0 && col < size) grid[row][col] = marker;
  }
  const legend = [...markers.entries()].map(([muscle, marker]) => `${marker}=${muscle}`).join(" ");
  const header = `polar @ ${intensityUa} uA (centre = recruitment 1.0)  ${legend}`;
  return [header, ...grid.map((row) => row.join(""))].join("\n");
}

const KEYS: Record<string, PanelCommand> = {
  c: "configure",
  s: "single_step",
  r: "run_to_saturation",
  m: "mark_saturated",
  a: "abort",
};

export function renderCommandBar(view: UiSessionView): string {
  const enabled = enabledCommands(view);
  const parts = Object.entries(KEYS).map(([key, command]) => {
    const label = `${key}:${command}`;
    return enabled.has(command) ? `[${label}]` : `(${label})`;
  });
  parts.push("[q:quit]");
  return parts.join(" ");
}

export function renderDashboard(view: UiSessionView, intensityUa: number | null): string {
  const grid = intensityGrid(view);
  const intensity = intensityUa ?? grid.at(-1) ?? null;
  const sections = [
    renderStatusLine(view),
    "",
    "live recruitment (normalized to running peak)",
    renderCurves(view),
    "",
  ];
  if (intensity !== null && grid.length > 0) {
    sections.push(renderPolar(view, intensity));
    sections.push(`intensity slider: ${grid.map((v) => (v === intensity ? `[${v}]` : `${v}`)).join(" ")}`);
  } else {
    sections.push("(no completed configurations yet; polar view appears after the first ramp)");
  }
  sections.push("", renderCommandBar(view));
  return sections.join("\n");
}

export { KEYS as COMMAND_KEYS };
