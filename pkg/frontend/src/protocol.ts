/**
 * Wire protocol shared with the session service.
 *
 * Framing: ASCII decimal byte length of the JSON payload, "\n", the UTF-8
 * JSON payload, "\n".  Stream messages are snapshot / transition /
 * step_result / gap; every command is answered by a reply carrying the
 * client-chosen id.
 */

export type SessionState = "idle" | "configured" | "ramping" | "saturated" | "stopped";

export interface SnapshotMessage {
  kind: "snapshot";
  state: SessionState;
  config: string | null;
  step_index: number;
  stop_reason: string | null;
  points: Record<string, { amplitude_uA: number; p2p_uV: number; normalized: number }[]>;
  completed: Record<string, Record<string, { amplitude_uA: number; normalized: number | null }[]>>;
}

export interface TransitionMessage {
  kind: "transition";
  from_state: SessionState;
  to_state: SessionState;
  config?: string;
  reason?: string;
  [extra: string]: unknown;
}

export interface StepResultMessage {
  kind: "step_result";
  config: string;
  step_index: number;
  amplitude_uA: number;
  p2p_uV: Record<string, number>;
  normalized: Record<string, number>;
  saturated: boolean;
}

export interface GapMessage {
  kind: "gap";
  dropped_messages: number;
}

export interface ReplyMessage {
  kind: "reply";
  id: number;
  ok: boolean;
  state?: SessionState;
  error?: string;
  error_kind?: string;
  [extra: string]: unknown;
}

export type StreamMessage = SnapshotMessage | TransitionMessage | StepResultMessage | GapMessage;
export type WireMessage = StreamMessage | ReplyMessage;

export type CommandName =
  | "configure"
  | "run_step"
  | "run_to_saturation"
  | "mark_saturated"
  | "abort"
  | "subscribe";

export function encodeFrame(message: object): Buffer {
  const payload = Buffer.from(JSON.stringify(message), "utf-8");
  return Buffer.concat([Buffer.from(`${payload.length}\n`, "ascii"), payload, Buffer.from("\n")]);
}

const MAX_FRAME_BYTES = 64 * 1024 * 1024;

/** Incremental decoder: feed raw socket chunks, collect whole messages. */
export class FrameParser {
  private buffer: Buffer = Buffer.alloc(0);

  feed(chunk: Buffer): WireMessage[] {
    this.buffer = this.buffer.length ? Buffer.concat([this.buffer, chunk]) : chunk;
    const out: WireMessage[] = [];
    for (;;) {
      const newline = this.buffer.indexOf(0x0a);
      if (newline < 0) {
        if (this.buffer.length > 32) throw new Error("unterminated frame length");
        break;
      }
      const lengthText = this.buffer.subarray(0, newline).toString("ascii");
      const length = Number.parseInt(lengthText, 10);
      if (!Number.isFinite(length) || length < 0 || length > MAX_FRAME_BYTES) {
        throw new Error(`bad frame length ${JSON.stringify(lengthText)}`);
      }
      const end = newline + 1 + length + 1;
      if (this.buffer.length < end) break;
      const payload = this.buffer.subarray(newline + 1, newline + 1 + length);
      this.buffer = this.buffer.subarray(end);
      out.push(JSON.parse(payload.toString("utf-8")) as WireMessage);
    }
    return out;
  }
}

export interface RampWire {
  start_uA: number;
  step_uA: number;
  max_uA: number;
  step_duration_s: number;
  pulses_per_step: number;
  saturation_window?: number;
  saturation_epsilon?: number;
}

export interface PulseWire {
  amplitude_uA: number;
  cathodic_width_us?: number;
  asymmetry_ratio?: number;
  frequency_hz?: number;
}
