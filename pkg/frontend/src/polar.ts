/**
 * Polar selectivity view: steering configurations sit at their cathode
 * angles, recruitment is drawn inward (radius = 1 - recruitment, so full
 * recruitment reaches the centre).  Configurations without data at the
 * selected intensity are omitted, never drawn as zero recruitment.
 */

import type { UiSessionView } from "./viewState.js";

export interface PolarPoint {
  config: string;
  angleDeg: number;
  muscle: string;
  recruitment: number;
  radius: number;
}

export function steeringAngleDeg(config: string): number | null {
  const match = /^STR([1-6])$/.exec(config.toUpperCase());
  if (!match) return null;
  return (Number(match[1]) - 1) * 60;
}

/** Sorted union of intensities across all completed configurations. */
export function intensityGrid(view: UiSessionView): number[] {
  const grid = new Set<number>();
  for (const byMuscle of Object.values(view.completed)) {
    for (const series of Object.values(byMuscle)) {
      for (const point of series) grid.add(point.amplitudeUa);
    }
  }
  return [...grid].sort((a, b) => a - b);
}

export function polarPoints(view: UiSessionView, intensityUa: number): PolarPoint[] {
  const out: PolarPoint[] = [];
  for (const [config, byMuscle] of Object.entries(view.completed)) {
    const angle = steeringAngleDeg(config);
    if (angle === null) continue; // ring has no steering angle
    for (const [muscle, series] of Object.entries(byMuscle)) {
      const point = series.find((p) => p.amplitudeUa === intensityUa);
      if (!point || point.normalized === null) continue; // omitted, not zero
      out.push({
        config,
        angleDeg: angle,
        muscle,
        recruitment: point.normalized,
        radius: 1 - point.normalized,
      });
    }
  }
  out.sort((a, b) => a.angleDeg - b.angleDeg || a.muscle.localeCompare(b.muscle));
  return out;
}
