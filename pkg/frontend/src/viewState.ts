/**
 * The operator view is a pure fold over the wire-message stream.
 *
 * No UI-local truth about stimulation exists: a snapshot replaces the whole
 * view (so reconnects never duplicate points), deltas append, and connection
 * status is folded in from explicit connection events.  Replaying the same
 * message log always reproduces the identical view.
 */

import type {
  CommandName,
  SessionState,
  StreamMessage,
} from "./protocol.js";

export type ConnectionStatus = "connecting" | "live" | "stale" | "disconnected";

export interface LivePoint {
  amplitudeUa: number;
  p2pUv: number;
}

export interface CompletedPoint {
  amplitudeUa: number;
  normalized: number | null;
}

export interface UiSessionView {
  state: SessionState | "unknown";
  config: string | null;
  stepIndex: number;
  stopReason: string | null;
  /** live raw series for the configuration being ramped, per muscle */
  points: Record<string, LivePoint[]>;
  /** final normalized curves per completed configuration, per muscle */
  completed: Record<string, Record<string, CompletedPoint[]>>;
  connection: ConnectionStatus;
  pendingCommand: CommandName | null;
  dataGap: boolean;
  lastError: string | null;
}

export function initialView(): UiSessionView {
  return {
    state: "unknown",
    config: null,
    stepIndex: 0,
    stopReason: null,
    points: {},
    completed: {},
    connection: "connecting",
    pendingCommand: null,
    dataGap: false,
    lastError: null,
  };
}

/** Events that are not wire messages but still fold into the view. */
export type ViewEvent =
  | { kind: "connection"; status: ConnectionStatus }
  | { kind: "command_sent"; command: CommandName }
  | { kind: "command_reply"; ok: boolean; error?: string }
  | StreamMessage;

export function reduceView(view: UiSessionView, event: ViewEvent): UiSessionView {
  switch (event.kind) {
    case "connection":
      return { ...view, connection: event.status };
    case "command_sent":
      return { ...view, pendingCommand: event.command };
    case "command_reply":
      return {
        ...view,
        pendingCommand: null,
        lastError: event.ok ? null : (event.error ?? "command rejected"),
      };
    case "snapshot": {
      const points: Record<string, LivePoint[]> = {};
      for (const [muscle, series] of Object.entries(event.points)) {
        points[muscle] = series.map((p) => ({ amplitudeUa: p.amplitude_uA, p2pUv: p.p2p_uV }));
      }
      const completed: UiSessionView["completed"] = {};
      for (const [config, byMuscle] of Object.entries(event.completed)) {
        completed[config] = {};
        for (const [muscle, series] of Object.entries(byMuscle)) {
          completed[config][muscle] = series.map((p) => ({
            amplitudeUa: p.amplitude_uA,
            normalized: p.normalized,
          }));
        }
      }
      return {
        ...view,
        state: event.state,
        config: event.config,
        stepIndex: event.step_index,
        stopReason: event.stop_reason,
        points,
        completed,
        connection: "live",
        dataGap: false,
      };
    }
    case "transition": {
      let next: UiSessionView = { ...view, state: event.to_state };
      if (event.to_state === "configured") {
        next = {
          ...next,
          config: (event.config as string | undefined) ?? view.config,
          points: {},
          stepIndex: 0,
          stopReason: null,
        };
      }
      if (event.to_state === "stopped") {
        next = { ...next, stopReason: (event.reason as string | undefined) ?? null };
      }
      if ((event.to_state === "saturated" || event.to_state === "stopped") && view.config) {
        const folded = foldLiveIntoCompleted(view.points);
        if (Object.keys(folded).length > 0) {
          next = { ...next, completed: { ...view.completed, [view.config]: folded } };
        }
      }
      return next;
    }
    case "step_result": {
      const points: Record<string, LivePoint[]> = { ...view.points };
      for (const [muscle, p2p] of Object.entries(event.p2p_uV)) {
        const series = points[muscle] ? [...points[muscle]] : [];
        series.push({ amplitudeUa: event.amplitude_uA, p2pUv: p2p });
        points[muscle] = series;
      }
      return { ...view, points, stepIndex: event.step_index + 1, config: event.config };
    }
    case "gap":
      return { ...view, dataGap: true };
    default:
      return view;
  }
}

/** Final per-muscle normalization of a live series (peak lands exactly at 1). */
export function foldLiveIntoCompleted(
  points: Record<string, LivePoint[]>,
): Record<string, CompletedPoint[]> {
  const out: Record<string, CompletedPoint[]> = {};
  for (const [muscle, series] of Object.entries(points)) {
    if (series.length === 0) continue;
    const peak = Math.max(...series.map((p) => p.p2pUv));
    out[muscle] = series.map((p) => ({
      amplitudeUa: p.amplitudeUa,
      normalized: peak > 0 ? p.p2pUv / peak : null,
    }));
  }
  return out;
}

/** Live series normalized against its running peak, for drawing. */
export function normalizedSeries(view: UiSessionView, muscle: string): CompletedPoint[] {
  return foldLiveIntoCompleted(view.points)[muscle] ?? [];
}

export function replayView(events: Iterable<ViewEvent>): UiSessionView {
  let view = initialView();
  for (const event of events) view = reduceView(view, event);
  return view;
}

export type PanelCommand = "configure" | "single_step" | "run_to_saturation" | "abort" | "mark_saturated";

const GATING: Record<PanelCommand, ReadonlySet<UiSessionView["state"]>> = {
  configure: new Set(["idle", "saturated", "stopped"]),
  single_step: new Set(["configured", "ramping"]),
  run_to_saturation: new Set(["configured", "ramping"]),
  abort: new Set(["configured", "ramping"]),
  mark_saturated: new Set(["ramping"]),
};

/**
 * Commands the panel may offer in the mirrored state.  Anything else renders
 * disabled; a pending command or a non-live connection disables everything
 * (stimulation-affecting actions need a confirmable channel).
 */
export function enabledCommands(view: UiSessionView): Set<PanelCommand> {
  if (view.connection !== "live" || view.pendingCommand !== null) return new Set();
  const out = new Set<PanelCommand>();
  for (const [command, states] of Object.entries(GATING) as [PanelCommand, ReadonlySet<string>][]) {
    if (states.has(view.state)) out.add(command);
  }
  return out;
}
