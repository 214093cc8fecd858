/**
 * Socket client for the session service: sends commands and resolves them on
 * the server's reply (the UI never advances optimistically), surfaces the
 * broadcast stream, and reconnects with a fresh snapshot after a drop (the
 * view is marked stale in between).
 */

import * as net from "node:net";

import {
  type CommandName,
  encodeFrame,
  FrameParser,
  type PulseWire,
  type RampWire,
  type ReplyMessage,
  type StreamMessage,
} from "./protocol.js";
import type { ViewEvent } from "./viewState.js";

export interface ClientOptions {
  host: string;
  port: number;
  reconnectDelayMs?: number;
  commandTimeoutMs?: number;
}

type Pending = {
  resolve: (reply: ReplyMessage) => void;
  reject: (err: Error) => void;
  timer: NodeJS.Timeout;
};

export class SessionClient {
  private socket: net.Socket | null = null;
  private parser = new FrameParser();
  private nextId = 1;
  private pending = new Map<number, Pending>();
  private closed = false;
  private listeners: ((event: ViewEvent) => void)[] = [];
  private reconnectTimer: NodeJS.Timeout | null = null;

  constructor(private options: ClientOptions) {}

  onEvent(listener: (event: ViewEvent) => void): void {
    this.listeners.push(listener);
  }

  private emit(event: ViewEvent): void {
    for (const listener of this.listeners) listener(event);
  }

  connect(): Promise<void> {
    this.emit({ kind: "connection", status: "connecting" });
    return new Promise((resolve, reject) => {
      const socket = net.createConnection(
        { host: this.options.host, port: this.options.port },
        () => {
          this.socket = socket;
          void this.command("subscribe")
            .then(() => {
              this.emit({ kind: "connection", status: "live" });
              resolve();
            })
            .catch(reject);
        },
      );
      socket.on("data", (chunk: Buffer) => this.handleData(chunk));
      socket.on("error", () => {
        /* close follows */
      });
      socket.once("close", () => {
        this.socket = null;
        this.failPending(new Error("connection closed"));
        if (!this.closed) {
          this.emit({ kind: "connection", status: "stale" });
          this.scheduleReconnect();
        } else {
          this.emit({ kind: "connection", status: "disconnected" });
        }
      });
      socket.once("error", (err) => {
        if (this.socket === null) reject(err);
      });
    });
  }

  private scheduleReconnect(): void {
    if (this.reconnectTimer || this.closed) return;
    const delay = this.options.reconnectDelayMs ?? 500;
    this.reconnectTimer = setTimeout(() => {
      this.reconnectTimer = null;
      // a fresh subscribe yields a fresh snapshot, which replaces the view
      this.connect().catch(() => this.scheduleReconnect());
    }, delay);
  }

  private handleData(chunk: Buffer): void {
    let messages;
    try {
      messages = this.parser.feed(chunk);
    } catch {
      this.socket?.destroy();
      return;
    }
    for (const message of messages) {
      if (message.kind === "reply") {
        const waiting = this.pending.get(message.id);
        if (waiting) {
          this.pending.delete(message.id);
          clearTimeout(waiting.timer);
          waiting.resolve(message);
        }
      } else {
        this.emit(message as StreamMessage);
      }
    }
  }

  private failPending(err: Error): void {
    for (const [, waiting] of this.pending) {
      clearTimeout(waiting.timer);
      waiting.reject(err);
    }
    this.pending.clear();
  }

  command(cmd: CommandName, payload: Record<string, unknown> = {}): Promise<ReplyMessage> {
    const socket = this.socket;
    if (!socket) return Promise.reject(new Error("not connected"));
    const id = this.nextId++;
    const timeoutMs = this.options.commandTimeoutMs ?? 60_000;
    return new Promise<ReplyMessage>((resolve, reject) => {
      const timer = setTimeout(() => {
        this.pending.delete(id);
        reject(new Error(`no reply to ${cmd} within ${timeoutMs} ms`));
      }, timeoutMs);
      this.pending.set(id, { resolve, reject, timer });
      socket.write(encodeFrame({ cmd, id, ...payload }));
    });
  }

  /** Command wrapper that also feeds pending/confirmation events to the view. */
  async confirmedCommand(
    cmd: Exclude<CommandName, "subscribe">,
    payload: Record<string, unknown> = {},
  ): Promise<ReplyMessage> {
    this.emit({ kind: "command_sent", command: cmd });
    try {
      const reply = await this.command(cmd, payload);
      this.emit({ kind: "command_reply", ok: reply.ok, error: reply.error });
      return reply;
    } catch (err) {
      this.emit({ kind: "command_reply", ok: false, error: (err as Error).message });
      throw err;
    }
  }

  configure(config: string, ramp: RampWire, pulse: PulseWire): Promise<ReplyMessage> {
    return this.confirmedCommand("configure", { config, ramp, pulse });
  }

  close(): void {
    this.closed = true;
    if (this.reconnectTimer) clearTimeout(this.reconnectTimer);
    this.failPending(new Error("client closed"));
    this.socket?.destroy();
    this.socket = null;
  }
}
